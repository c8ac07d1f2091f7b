"""Pure-numpy kernels: the fallback backend.

Each function mirrors a routine in the compiled extension and must
produce bitwise-identical results: accumulation walks the input arrays
in order, exactly like the C loops (``np.add.at`` / ``np.maximum.at``
apply duplicate indices sequentially).
"""

import numpy as np

BACKEND = "python"


def scatter_add_rows(out, index, rows):
    """out[index[i], :] += rows[i, :], duplicates accumulated in order."""
    np.add.at(out, index, rows)
    return out


def segment_sum_rows(seg_ids, rows, num_segments):
    """Sum rows into segments; empty segments stay zero."""
    out = np.zeros((num_segments, rows.shape[1]), dtype=rows.dtype)
    np.add.at(out, seg_ids, rows)
    return out


def segment_sum_scalars(seg_ids, values, num_segments):
    out = np.zeros(num_segments, dtype=values.dtype)
    np.add.at(out, seg_ids, values)
    return out


def segment_max_scalars(seg_ids, values, num_segments, fill):
    out = np.full(num_segments, fill, dtype=values.dtype)
    np.maximum.at(out, seg_ids, values)
    return out
