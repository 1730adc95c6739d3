"""Deployment toolchain and cycle-approximate simulator for a weight-stationary
systolic-array accelerator.

The heavy lifting lives in the compiled `_core` extension; this package simply
re-exports it.
"""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
