"""Minimal supersolutions of BSDEs with semimartingale controls on binary trees,
with convex-duality lower bounds."""

__version__ = "0.1.0"

from .lattice import *  # noqa: F401,F403
from .generators import *  # noqa: F401,F403
from .controls import *  # noqa: F401,F403
from .optim import *  # noqa: F401,F403
from .primal import *  # noqa: F401,F403
from .dual import *  # noqa: F401,F403
from .oracles import *  # noqa: F401,F403
from .config import *  # noqa: F401,F403
from .suite import *  # noqa: F401,F403
