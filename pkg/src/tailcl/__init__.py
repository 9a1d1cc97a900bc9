"""tailcl: a small laboratory for continual learning on long-tailed streams.

Uncertainty-guided replay buffers, cosine-prototype classifiers, and
teacher-student distillation on dense networks, with a deterministic
experiment harness.
"""

from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
