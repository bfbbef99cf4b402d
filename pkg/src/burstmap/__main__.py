from burstmap.cli import main
import sys

sys.exit(main())
