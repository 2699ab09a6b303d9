import sys

from fcnledger.cli import main

sys.exit(main())
