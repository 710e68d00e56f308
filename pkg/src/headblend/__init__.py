"""Head blending with foreground-predictive masked attention, as a small numpy toy."""
from .config import TrainConfig, load_config
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["TrainConfig", "load_config", "BACKEND", "__version__"]
