import sys

from vortexmf.cli import main

sys.exit(main())
