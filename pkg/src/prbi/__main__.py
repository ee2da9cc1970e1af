import sys

from prbi.cli import main

sys.exit(main())
