import sys

from holdq.cli import main

sys.exit(main())
