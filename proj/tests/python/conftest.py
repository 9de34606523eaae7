import os
import sys

pkg_dir = os.environ.get("EMX_PKG_DIR")
if pkg_dir and pkg_dir not in sys.path:
    sys.path.insert(0, pkg_dir)
