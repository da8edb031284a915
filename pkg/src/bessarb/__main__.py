import sys

from bessarb.cli import main

sys.exit(main())
