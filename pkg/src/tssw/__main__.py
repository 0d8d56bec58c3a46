import sys

from tssw.cli import main

sys.exit(main())
