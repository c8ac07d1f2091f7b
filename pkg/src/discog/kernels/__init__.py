"""Kernel backend selection.

The compiled extension is preferred when present; the numpy fallback is
always available. ``DISCOG_KERNELS=py`` or ``DISCOG_KERNELS=c`` forces a
backend (the latter raises if the extension was not built). Both
backends are bitwise-equivalent, so selection never changes results.
"""

import logging
import os

import numpy as np

from . import pykernels

logger = logging.getLogger(__name__)

_forced = os.environ.get("DISCOG_KERNELS", "").strip().lower()

_impl = None
if _forced in ("", "c"):
    try:
        from . import _ckernels as _impl
    except ImportError:
        if _forced == "c":
            raise ImportError(
                "DISCOG_KERNELS=c but the compiled extension is not built; "
                "reinstall with a C compiler or unset DISCOG_KERNELS"
            )
        logger.debug("compiled kernels unavailable; using numpy fallback")
if _impl is None:
    _impl = pykernels

BACKEND = _impl.BACKEND


def _rows(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _ids(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def _vals(a):
    return np.ascontiguousarray(a, dtype=np.float64).ravel()


def scatter_add_rows(out, index, rows):
    """out[index[i], :] += rows[i, :] with sequential duplicate handling."""
    return _impl.scatter_add_rows(out, _ids(index), _rows(rows))


def segment_sum_rows(seg_ids, rows, num_segments):
    """Row-wise segment sum; segments with no members are all-zero."""
    return _impl.segment_sum_rows(_ids(seg_ids), _rows(rows), int(num_segments))


def segment_sum_scalars(seg_ids, values, num_segments):
    return _impl.segment_sum_scalars(_ids(seg_ids), _vals(values), int(num_segments))


def segment_max_scalars(seg_ids, values, num_segments, fill=-np.inf):
    return _impl.segment_max_scalars(_ids(seg_ids), _vals(values), int(num_segments), float(fill))
