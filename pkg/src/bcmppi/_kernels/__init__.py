"""Rollout kernel backend selection.

The compiled Cython kernel is preferred when its extension module imported
successfully; otherwise the vectorized numpy kernel is used.  Both produce
bit-identical trajectories.  Set BCMPPI_PURE_PYTHON=1 to force the numpy
backend (used by the kernel benchmark and cross-checking tests).
"""

import os

from . import rollout_numpy

_cy = None
if not os.environ.get("BCMPPI_PURE_PYTHON"):
    try:
        from . import _rollout_cy as _cy
    except ImportError:
        _cy = None

if _cy is not None:
    BACKEND = "cython"
    rollout_batch = _cy.rollout_batch
else:
    BACKEND = "numpy"
    rollout_batch = rollout_numpy.rollout_batch


def available_backends():
    """Name -> rollout_batch callable for every importable backend."""
    backends = {"numpy": rollout_numpy.rollout_batch}
    try:
        from . import _rollout_cy
        backends["cython"] = _rollout_cy.rollout_batch
    except ImportError:
        pass
    return backends
