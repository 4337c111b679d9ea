import sys

from sceneupdate.cli import main

sys.exit(main())
