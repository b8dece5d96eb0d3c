from .actorcritic import *
from .config import *
from .constants import *
from .core import *
from .envsim import *
from .evalharness import *
from .exceptions import *
from .experts import *
from .net import *
from .rewardmodel import *
