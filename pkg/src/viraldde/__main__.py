import sys

from viraldde.cli import main

sys.exit(main())
