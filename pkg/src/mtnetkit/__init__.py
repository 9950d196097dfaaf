"""RGB-thermal tracker mechanics on numpy: modality-aware fusion, a
transformer fusion stack, a trident prediction head, a template-update
state machine and benchmark metrics.
"""
__version__ = "0.1.0"

from ._jit import backend_name  # noqa: F401
