import sys

from cnumbers.cli import main

sys.exit(main())
