import sys

from privfilter.cli import main

sys.exit(main())
