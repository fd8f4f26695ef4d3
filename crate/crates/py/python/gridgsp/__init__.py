from gridgsp._native import *  # noqa: F401,F403
from gridgsp._native import __all__  # noqa: F401
