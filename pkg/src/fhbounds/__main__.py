import sys

from fhbounds.cli import main

sys.exit(main())
