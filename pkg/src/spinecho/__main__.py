import sys

from spinecho.cli import main

sys.exit(main())
