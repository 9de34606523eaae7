"""Low-rank principal eigenmatrix analysis: python bindings for the C++ core."""

import os
import sys

try:
    from . import _core
except ImportError:  # in-tree builds: point EMX_CORE_DIR at the built extension
    _core_dir = os.environ.get("EMX_CORE_DIR")
    if not _core_dir:
        raise
    if _core_dir not in sys.path:
        sys.path.insert(0, _core_dir)
    import _core

    sys.modules[__name__ + "._core"] = _core

from_core = [name for name in dir(_core) if not name.startswith("_")]
globals().update({name: getattr(_core, name) for name in from_core})

__version__ = _core.__version__
__all__ = from_core + ["__version__"]
