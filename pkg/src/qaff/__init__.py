"""Token-level quantile forecasting of end-of-sentence affect scores, with
quantile-targeted generation and inverse alpha inference, on an exactly
enumerable synthetic testbed."""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"
__all__ = ["KERNEL_BACKEND", "__version__"]
