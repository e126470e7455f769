"""Training/evaluation kernels with a compiled fast path.

The active backend is chosen once at import time from FEDFITS_BACKEND:
  auto    use the compiled extension if built, else the numpy fallback (default)
  cython  require the compiled extension
  python  force the numpy fallback

Both backends implement the same API and semantics; results agree to within
floating-point reduction order (each backend is individually deterministic).
"""

from __future__ import annotations

import os

_choice = os.environ.get("FEDFITS_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "cython", "python"):
    raise ImportError(
        f"FEDFITS_BACKEND must be one of auto|cython|python, got {_choice!r}"
    )

if _choice == "python":
    from fedfits._kernels import numpy_backend as _impl
elif _choice == "cython":
    from fedfits._kernels import _fast as _impl  # type: ignore[no-redef]
else:
    try:
        from fedfits._kernels import _fast as _impl  # type: ignore[no-redef]
    except ImportError:
        from fedfits._kernels import numpy_backend as _impl

BACKEND_NAME: str = _impl.NAME

KIND_LOGREG: int = _impl.KIND_LOGREG
KIND_MLP1: int = _impl.KIND_MLP1

predict_proba = _impl.predict_proba
evaluate_model = _impl.evaluate_model
gradient_model = _impl.gradient_model
sgd_epochs = _impl.sgd_epochs
