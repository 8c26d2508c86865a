"""Line-by-line port of the published R routine ``calc.opt.weights``.

Frozen on purpose: dense, unblocked and unoptimized, so the fast pipeline
can be checked against it.  Do not refactor.
"""

from __future__ import annotations

import numpy as np


def calc_opt_weights(e_r, ret, y=None, s=None, rm_overall=True):
    ret = np.asarray(ret, dtype=np.float64)
    e_r = np.asarray(e_r, dtype=np.float64)

    if s is None:
        s = np.std(ret, axis=1, ddof=1)
    s = np.asarray(s, dtype=np.float64)

    if y is None:
        x = ret - ret.mean(axis=1)[:, None]
        y = x / s[:, None]
        y = y[:, : x.shape[1] - 1]
    y = np.asarray(y, dtype=np.float64)

    if rm_overall:
        y = (y.T - y.mean(axis=0)[:, None]).T
        y = y[:, : y.shape[1] - 1]

    e_r = (e_r / s).reshape(len(e_r), 1)
    w = y.T @ e_r
    w = np.linalg.solve(y.T @ y, w)
    w = e_r - y @ w
    w = w / s[:, None]
    w = w / np.sum(np.abs(w))
    return w.ravel()
