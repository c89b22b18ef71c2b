import sys

from phaserand.cli import main

sys.exit(main())
