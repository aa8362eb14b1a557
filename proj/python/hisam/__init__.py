"""Hi-SAM: mean-field-game authentication frequency negotiation and DTR-MAC."""

try:
    from ._hisam import *  # noqa: F401,F403
except ImportError:  # extension on sys.path rather than inside the package
    from _hisam import *  # noqa: F401,F403
