"""Document-level relation extraction with iterative pair-matrix inference."""

from ._pairinfer import *  # noqa: F401,F403
from ._pairinfer import __doc__  # noqa: F401
