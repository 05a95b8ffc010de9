"""Hot loops for linear-model runs.

The compiled extension is used when it imports; otherwise (or with
``NCSAGA_PURE_PYTHON=1``) the numpy fallback is selected. ``BACKEND`` names the choice.
"""

import os

from . import _python

if os.environ.get("NCSAGA_PURE_PYTHON"):
    _impl = _python
    BACKEND = "python"
else:
    try:
        from . import _fast as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _python
        BACKEND = "python"

sgd_linear = _impl.sgd_linear
reg_saga_linear = _impl.reg_saga_linear

__all__ = ["BACKEND", "sgd_linear", "reg_saga_linear", "_python"]
