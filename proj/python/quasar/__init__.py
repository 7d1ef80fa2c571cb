"""Speculative decoding engine with a quantized verifier."""

try:
    # wheel layout: the extension lives inside this package
    from quasar._quasar import *  # noqa: F401,F403
    from quasar._quasar import __doc__  # noqa: F401
except ImportError:
    # build-tree layout: the extension sits on PYTHONPATH next to the package
    from _quasar import *  # noqa: F401,F403
    from _quasar import __doc__  # noqa: F401
