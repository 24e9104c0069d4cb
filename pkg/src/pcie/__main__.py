import sys

from pcie.cli import main

sys.exit(main())
