"""Meta-learned unsupervised machine translation on synthetic language pairs."""

from .autodiff import Tape, Tensor, backward, no_grad
from .params import ParamSet

__all__ = ["Tape", "Tensor", "backward", "no_grad", "ParamSet"]
__version__ = "0.1.0"
