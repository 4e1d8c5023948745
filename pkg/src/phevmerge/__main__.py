import sys

from phevmerge.cli import main

sys.exit(main())
