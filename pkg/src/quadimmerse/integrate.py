"""Fixed-step classical Runge-Kutta (RK4) and grid helpers."""
from __future__ import annotations

import numpy as np

__all__ = ["rk4_step", "rk4_affine", "time_grid", "midpoints"]


def rk4_step(f, t, y, h, args_start=(), args_mid=(), args_end=()):
    """One classical RK4 step of ``ydot = f(t, y, *args)``.

    ``args_start``, ``args_mid`` and ``args_end`` are extra arguments for
    the stage evaluations at ``t``, ``t + h/2`` and ``t + h``; they carry
    sampled or interpolated signals so ``f`` never has to look them up.
    """
    h2 = 0.5 * h
    k1 = f(t, y, *args_start)
    k2 = f(t + h2, y + h2 * k1, *args_mid)
    k3 = f(t + h2, y + h2 * k2, *args_mid)
    k4 = f(t + h, y + h * k3, *args_end)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_affine(A_start, A_mid, A_end, b_start, b_mid, b_end, y0, h):
    """Classical RK4 for ``ydot = A(t) y + b(t)`` with all stages precomputed.

    One RK4 step of an affine system is the affine map ``y -> M_k y + c_k``;
    ``M_k`` and ``c_k`` are formed for every step at once from the stage
    values at ``t_k``, ``t_k + h/2`` and ``t_k + h``, and then applied in
    sequence. The result equals :func:`rk4_step` up to rounding.

    Parameters
    ----------
    A_start, A_mid, A_end : ndarray, shape (K, d, d) or (d, d)
    b_start, b_mid, b_end : ndarray, shape (K, d)
    y0 : ndarray, shape (d,)
    h : float

    Returns
    -------
    ndarray, shape (K+1, d)
    """
    b1, b2, b3 = (np.asarray(b, dtype=float) for b in (b_start, b_mid, b_end))
    K, d = b1.shape
    h2 = 0.5 * h
    eye = np.eye(d)
    mats = [np.asarray(a, dtype=float) for a in (A_start, A_mid, A_end)]
    if all(a.ndim == 2 for a in mats):
        # time-invariant drift: one step matrix for all k
        A1, A2, A3 = mats
        mv = lambda A, v: v @ A.T  # noqa: E731
    else:
        A1, A2, A3 = (np.broadcast_to(a, (K, d, d)) for a in mats)
        mv = lambda A, v: np.einsum("kij,kj->ki", A, v)  # noqa: E731
    K1, c1 = A1, b1
    K2, c2 = A2 + h2 * (A2 @ K1), b2 + h2 * mv(A2, c1)
    K3, c3 = A2 + h2 * (A2 @ K2), b2 + h2 * mv(A2, c2)
    K4, c4 = A3 + h * (A3 @ K3), b3 + h * mv(A3, c3)
    M = eye + (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
    M = np.broadcast_to(M, (K, d, d))
    c = (h / 6.0) * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
    Y = np.empty((K + 1, d))
    y = np.asarray(y0, dtype=float).reshape(d)
    Y[0] = y
    for k in range(K):
        y = M[k] @ y + c[k]
        Y[k + 1] = y
    return Y


def time_grid(T: float, h: float) -> np.ndarray:
    """Grid ``0, h, ..., T``; ``T/h`` must be an integer to within 1e-9."""
    if not (T > 0 and h > 0):
        raise ValueError(f"T and h must be positive, got T={T}, h={h}")
    steps = T / h
    nsteps = int(round(steps))
    if nsteps < 1 or abs(steps - nsteps) > 1e-9 * max(1.0, steps):
        raise ValueError(f"T/h = {steps!r} is not an integer")
    return np.arange(nsteps + 1) * h


def midpoints(samples, method: str = "linear") -> np.ndarray:
    """Values halfway between consecutive grid samples (axis 0).

    ``"linear"`` averages neighbours. ``"cubic"`` uses the four-point
    Lagrange weights ``(-1, 9, 9, -1)/16``, shifting the stencil at both
    ends, and is fourth-order accurate for smooth signals.
    """
    s = np.asarray(samples, dtype=float)
    if s.shape[0] < 2:
        return s[:0]
    if method == "linear":
        return 0.5 * (s[:-1] + s[1:])
    if method != "cubic":
        raise ValueError(f"unknown interpolation {method!r}")
    if s.shape[0] < 4:
        return 0.5 * (s[:-1] + s[1:])
    mid = np.empty((s.shape[0] - 1,) + s.shape[1:])
    mid[1:-1] = (-s[:-3] + 9.0 * s[1:-2] + 9.0 * s[2:-1] - s[3:]) / 16.0
    # one-sided stencils at the ends: nodes 0..3 evaluated at 0.5 and 2.5
    mid[0] = (5.0 * s[0] + 15.0 * s[1] - 5.0 * s[2] + s[3]) / 16.0
    mid[-1] = (s[-4] - 5.0 * s[-3] + 15.0 * s[-2] + 5.0 * s[-1]) / 16.0
    return mid
