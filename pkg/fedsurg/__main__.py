import sys

from fedsurg.main import main

sys.exit(main())
