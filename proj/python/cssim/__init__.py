"""Context-sensitive similarity models over image embeddings."""

from ._cssim import *  # noqa: F401,F403
from ._cssim import __doc__  # noqa: F401
