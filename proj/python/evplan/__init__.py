"""EV charging network planning toolkit."""

from evplan._core import *  # noqa: F401,F403
from evplan._core import __version__  # noqa: F401
