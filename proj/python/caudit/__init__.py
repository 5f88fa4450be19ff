"""Python surface of the conflict-event classifier auditing toolkit.

The compiled core lives in ``caudit._caudit`` when installed as a wheel; a
plain CMake build leaves it next to this package instead, so fall back to a
top-level import for in-tree use.
"""

try:
    from ._caudit import *  # noqa: F401,F403
    from ._caudit import __version__  # noqa: F401
except ImportError:
    from _caudit import *  # noqa: F401,F403
    from _caudit import __version__  # noqa: F401
