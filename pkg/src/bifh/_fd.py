"""Finite-difference stencils on uniform grids.

Weights come from Fornberg's recursion, so any derivative order and stencil
width is available. Nodes whose stencil would leave the grid are either set
to NaN (``edges="nan"``, the default: interior-only reporting) or computed
with a one-sided stencil of the same width (``edges="one-sided"``).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


def fornberg_weights(x0: float, xs, m: int) -> np.ndarray:
    """Weights ``w[k, j]`` such that ``f^(k)(x0) ~ sum_j w[k, j] f(xs[j])``."""
    xs = np.asarray(xs, dtype=float)
    n = len(xs)
    c = np.zeros((m + 1, n))
    c1 = 1.0
    c4 = xs[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = xs[i] - x0
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[k, i] = c1 * (k * c[k - 1, i - 1] - c5 * c[k, i - 1]) / c2
                c[0, i] = -c1 * c5 * c[0, i - 1] / c2
            for k in range(mn, 0, -1):
                c[k, j] = (c4 * c[k, j] - k * c[k - 1, j]) / c3
            c[0, j] = c4 * c[0, j] / c3
        c1 = c2
    return c


@lru_cache(maxsize=None)
def _weights(deriv: int, offsets: tuple) -> np.ndarray:
    w = fornberg_weights(0.0, offsets, deriv)[deriv]
    w.setflags(write=False)
    return w


def diff(F, h: float, deriv: int = 1, points: int = 5, axis: int = 0,
         stride: int = 1, edges: str = "nan") -> np.ndarray:
    """Derivative of order ``deriv`` of samples ``F`` along ``axis``.

    ``points`` is the (odd) stencil width; the spacing used is
    ``stride * h``. Accuracy of the central stencil is ``points - 1`` for
    even ``deriv`` pairs rounded down to an even number.
    """
    if points % 2 != 1 or points <= deriv:
        raise ValueError("stencil width must be odd and exceed the derivative order")
    F = np.moveaxis(np.asarray(F, dtype=float), axis, 0)
    n = F.shape[0]
    r = (points - 1) // 2
    step = stride * h
    out = np.full(F.shape, np.nan)
    reach = r * stride
    if n > 2 * reach:
        w = _weights(deriv, tuple(range(-r, r + 1)))
        acc = np.zeros((n - 2 * reach,) + F.shape[1:])
        for j, wj in enumerate(w):
            if wj != 0.0:
                lo = j * stride
                acc += wj * F[lo:lo + n - 2 * reach]
        out[reach:n - reach] = acc / step ** deriv
    if edges == "one-sided":
        for i in list(range(min(reach, n))) + list(range(max(n - reach, reach), n)):
            lo = -(i // stride)
            hi = (n - 1 - i) // stride - (points - 1)
            if hi < lo:
                raise ValueError("too few samples for the requested stencil")
            o0 = min(max(-r, lo), hi)
            offsets = tuple(range(o0, o0 + points))
            wk = _weights(deriv, offsets)
            out[i] = sum(wk[k] * F[i + o * stride] for k, o in enumerate(offsets)) / step ** deriv
    elif edges != "nan":
        raise ValueError(f"unknown edge mode {edges!r}")
    return np.moveaxis(out, 0, axis)


def margin(points: int, stride: int = 1) -> int:
    return (points - 1) // 2 * stride
