"""Vehicle speed estimation from bounding-box area and depth changes."""

from ._speedest import *  # noqa: F401,F403
from ._speedest import __version__  # noqa: F401
