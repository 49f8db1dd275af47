import sys

from rowbomb.cli import main

sys.exit(main())
