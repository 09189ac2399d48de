"""Python bindings for the meta-learned instance detector and tracker."""

try:
    from ._metadet import *  # noqa: F401,F403
    from ._metadet import __doc__  # noqa: F401
except ImportError:  # extension built out-of-tree (e.g. plain cmake builds)
    from _metadet import *  # noqa: F401,F403
