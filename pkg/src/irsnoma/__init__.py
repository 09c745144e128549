"""Joint trajectory, IRS phase and NOMA power control for indoor robots via dueling double DQN."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
