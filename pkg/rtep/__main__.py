import sys

from rtep.main import main

sys.exit(main())
