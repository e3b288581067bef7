"""Gait design and quasi-static locomotion toolkit for multi-legged elongate robots."""

from ._merloco import *  # noqa: F401,F403
from ._merloco import __version__  # noqa: F401
