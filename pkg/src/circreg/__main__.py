import sys

from circreg.cli import main

sys.exit(main())
