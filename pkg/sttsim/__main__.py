import sys

from sttsim.cli import main

sys.exit(main())
