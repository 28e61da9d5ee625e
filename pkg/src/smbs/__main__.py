import sys

from smbs.cli import main

sys.exit(main())
