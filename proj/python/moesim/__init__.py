"""Trace-driven simulation of MoE expert prefetching under a bounded GPU expert cache."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
