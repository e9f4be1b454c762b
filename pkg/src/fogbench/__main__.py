import sys

from fogbench.cli import main

sys.exit(main())
