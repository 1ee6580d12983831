"""Target sound detection workbench bindings."""

try:
    from ._tsdkit import *  # noqa: F401,F403  (installed package layout)
    from ._tsdkit import __version__  # noqa: F401
except ImportError:  # build-tree layout: module next to the package on sys.path
    from _tsdkit import *  # noqa: F401,F403
    from _tsdkit import __version__  # noqa: F401
