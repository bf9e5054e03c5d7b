from wsnroute.cli import main
import sys

sys.exit(main())
