"""Riccati (Kalman-type) observer for the extended system.

    zhat_dot = calA(u) zhat + calB u + P calC^T Q (y - calC zhat)
    P_dot    = calA(u) P + P calA(u)^T - P calC^T Q calC P + V

The pair ``(zhat, P)`` is integrated with fixed-step RK4; ``P`` is carried
in packed symmetric form so it stays exactly symmetric.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .immersion import LtvSystem
from .integrate import midpoints, rk4_step
from .symcalc import SymMatrix, _tril_index, unvech, vech

__all__ = [
    "ObserverDivergence",
    "Schedule",
    "ObserverConfig",
    "ObserverState",
    "ObserverRun",
    "observer_derivative",
    "run_observer",
    "load_observer_config",
    "observability_gramian",
]


class ObserverDivergence(ArithmeticError):
    """``P`` lost positive definiteness or the state became non-finite."""


class Schedule:
    """Symmetric weight that is constant or piecewise linear in time.

    Parameters
    ----------
    times : sequence of float or None
        Strictly increasing knots; ``None`` for a constant weight.
    values : array_like
        One matrix (constant) or one matrix per knot. Outside the knot
        range the end values are held.
    """

    def __init__(self, values, times=None):
        vals = np.asarray(values, dtype=float)
        if times is None:
            if vals.ndim != 2:
                raise ValueError("constant schedule needs a single square matrix")
            vals = vals[None]
            self.times = None
        else:
            self.times = np.asarray(times, dtype=float)
            if self.times.ndim != 1 or vals.shape[0] != self.times.size:
                raise ValueError("schedule needs one matrix per knot")
            if np.any(np.diff(self.times) <= 0):
                raise ValueError("schedule knots must be strictly increasing")
        if vals.ndim != 3 or vals.shape[1] != vals.shape[2]:
            raise ValueError(f"schedule values must be square matrices, got {vals.shape}")
        self.values = np.array([SymMatrix.from_dense(v, tol=1e-9 * max(1.0, np.abs(v).max())).full() for v in vals])

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def min_eigenvalue(self) -> float:
        # piecewise-linear interpolation of PD knots stays PD (convexity)
        return float(min(np.linalg.eigvalsh(v)[0] for v in self.values))

    def __call__(self, t: float) -> np.ndarray:
        if self.times is None:
            return self.values[0]
        ts = self.times
        if t <= ts[0]:
            return self.values[0]
        if t >= ts[-1]:
            return self.values[-1]
        j = int(np.searchsorted(ts, t, side="right")) - 1
        w = (t - ts[j]) / (ts[j + 1] - ts[j])
        return (1.0 - w) * self.values[j] + w * self.values[j + 1]

    @classmethod
    def coerce(cls, spec, dim: int) -> "Schedule":
        """Build from a matrix, a scalar (times identity), or a knot table.

        A table is a list of ``{"t": float, "value": matrix-or-scalar}``.
        """
        if isinstance(spec, Schedule):
            return spec
        if isinstance(spec, list) and spec and isinstance(spec[0], dict):
            times = [float(e["t"]) for e in spec]
            values = [_as_matrix(e["value"], dim) for e in spec]
            return cls(values, times)
        return cls(_as_matrix(spec, dim))


def _as_matrix(spec, dim):
    if isinstance(spec, SymMatrix):
        return spec.full()
    arr = np.asarray(spec, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(dim)
    if arr.shape != (dim, dim):
        raise ValueError(f"expected a {dim}x{dim} matrix, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class ObserverConfig:
    """Initial estimate and weights of the Riccati observer.

    ``P0`` must be symmetric positive definite; ``Q`` (output weight,
    ``q x q``) and ``V`` (state weight, ``dim_z x dim_z``) are
    :class:`Schedule` objects whose knots are all positive definite.
    """

    P0: np.ndarray
    Q: Schedule
    V: Schedule
    z0: np.ndarray

    @classmethod
    def create(cls, ltv: LtvSystem, P0=1.0, Q=1.0, V=1.0, z0=None) -> "ObserverConfig":
        dim_z, q = ltv.dim_z, ltv.calC.shape[0]
        P0m = SymMatrix.from_dense(_as_matrix(P0, dim_z), tol=1e-9).full()
        if np.linalg.eigvalsh(P0m)[0] <= 0:
            raise ValueError("P0 must be positive definite")
        Qs = Schedule.coerce(Q, q)
        Vs = Schedule.coerce(V, dim_z)
        if Qs.dim != q or Vs.dim != dim_z:
            raise ValueError("Q must be q x q and V must be dim_z x dim_z")
        for name, s in (("Q", Qs), ("V", Vs)):
            if s.min_eigenvalue() <= 0:
                raise ValueError(f"{name} must be positive definite over its schedule")
        z0 = np.zeros(dim_z) if z0 is None else np.asarray(z0, dtype=float).reshape(-1)
        if z0.size != dim_z:
            raise ValueError(f"z0 has length {z0.size}, expected {dim_z}")
        return cls(P0m, Qs, Vs, z0)


def load_observer_config(document, ltv: LtvSystem) -> ObserverConfig:
    """Read an observer document (JSON text, path, or dict).

    Keys: ``P0``, ``Q``, ``V`` (matrix, scalar for a multiple of the
    identity, or a ``[{"t", "value"}, ...]`` table) and either ``z0`` or
    ``embed_x0`` (a plant-state guess mapped through ``ltv.embed``).
    """
    if not isinstance(document, dict):
        if isinstance(document, os.PathLike) or not str(document).lstrip().startswith("{"):
            with open(document) as fh:
                document = fh.read()
        document = json.loads(document)
    if "z0" in document and "embed_x0" in document:
        raise ValueError("give either z0 or embed_x0, not both")
    if "embed_x0" in document:
        z0 = ltv.embed(document["embed_x0"])
    else:
        z0 = document.get("z0")
    return ObserverConfig.create(
        ltv,
        P0=document.get("P0", 1.0),
        Q=document.get("Q", 1.0),
        V=document.get("V", 1.0),
        z0=z0,
    )


@dataclass(frozen=True)
class ObserverState:
    t: float
    zhat: np.ndarray
    P: SymMatrix


def observer_derivative(ltv: LtvSystem, state: ObserverState, u, y, Q, V):
    """Right-hand sides ``(zhat_dot, P_dot)`` at one instant.

    ``Q`` and ``V`` are the weights at ``state.t`` (arrays).
    """
    zhat = np.asarray(state.zhat, dtype=float)
    P = state.P.full() if isinstance(state.P, SymMatrix) else np.asarray(state.P, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    C = ltv.calC
    if zhat.size != ltv.dim_z or P.shape != (ltv.dim_z, ltv.dim_z) or y.size != C.shape[0]:
        raise ValueError("dimension mismatch in observer_derivative")
    Acal = ltv.calA(u)
    PCt = P @ C.T
    dz = Acal @ zhat + ltv.calB @ np.asarray(u, dtype=float).reshape(-1) + PCt @ (Q @ (y - C @ zhat))
    AP = Acal @ P
    dP = AP + AP.T - PCt @ Q @ PCt.T + V
    return dz, dP


@dataclass(frozen=True, eq=False)
class ObserverRun:
    """Time series produced by :func:`run_observer`.

    ``P_packed[k]`` is ``vech(P(t[k]))``; ``min_eig[k]`` its smallest
    eigenvalue.
    """

    t: np.ndarray
    zhat: np.ndarray
    P_packed: np.ndarray
    min_eig: np.ndarray
    xhat: np.ndarray

    def P(self, k: int) -> np.ndarray:
        return unvech(self.P_packed[k])

    def final_state(self) -> ObserverState:
        return ObserverState(float(self.t[-1]), self.zhat[-1], SymMatrix(self.P_packed[-1]))


def run_observer(ltv: LtvSystem, cfg: ObserverConfig, t, u, y, interp: str = "cubic",
                 pd_tol: float = 1e-9) -> ObserverRun:
    """Integrate the observer over a sampled input/output record.

    Parameters
    ----------
    t : ndarray, shape (K+1,)
        Uniform integration grid.
    u, y : ndarray, shape (K+1, p) and (K+1, q)
        Signals sampled on the grid. Stage values at ``t + h/2`` come from
        :func:`~quadimmerse.integrate.midpoints` with ``interp``.

    Raises
    ------
    ObserverDivergence
        If ``P`` gets an eigenvalue below ``-pd_tol * ||P||`` or the state
        stops being finite.
    """
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float).reshape(t.size, -1)
    y = np.asarray(y, dtype=float).reshape(t.size, -1)
    if t.size < 2:
        raise ValueError("need at least two grid points")
    hs = np.diff(t)
    if np.any(hs <= 0) or np.ptp(hs) > 1e-9 * hs[0]:
        raise ValueError("grid must be uniform and increasing")
    h = float(hs[0])
    dim_z = ltv.dim_z
    C = ltv.calC
    if u.shape[1] != ltv.p or y.shape[1] != C.shape[0]:
        raise ValueError("signal widths do not match the extended system")
    u_mid = midpoints(u, interp)
    y_mid = midpoints(y, interp)
    npk = dim_z * (dim_z + 1) // 2
    r, c = _tril_index(dim_z)
    const_Q = cfg.Q.times is None
    const_V = cfg.V.times is None
    Q0, V0 = cfg.Q(0.0), cfg.V(0.0)
    B_cal = ltv.calB
    Pbuf = np.empty((dim_z, dim_z))

    def f(tt, s, uu, yy):
        zhat = s[:dim_z]
        Pbuf[r, c] = s[dim_z:]
        Pbuf[c, r] = s[dim_z:]
        Acal = ltv.calA(uu)
        Q = Q0 if const_Q else cfg.Q(tt)
        V = V0 if const_V else cfg.V(tt)
        PCt = Pbuf @ C.T
        dz = Acal @ zhat + B_cal @ uu + PCt @ (Q @ (yy - C @ zhat))
        AP = Acal @ Pbuf
        dP = AP + AP.T - PCt @ Q @ PCt.T + V
        return np.concatenate([dz, dP[r, c]])

    K = t.size - 1
    Z = np.empty((K + 1, dim_z))
    PP = np.empty((K + 1, npk))
    min_eig = np.empty(K + 1)
    s = np.concatenate([cfg.z0, vech(cfg.P0)])
    Z[0], PP[0] = s[:dim_z], s[dim_z:]
    min_eig[0] = np.linalg.eigvalsh(cfg.P0)[0]
    for k in range(K):
        s = rk4_step(f, t[k], s, h, (u[k], y[k]), (u_mid[k], y_mid[k]), (u[k + 1], y[k + 1]))
        if not np.all(np.isfinite(s)):
            raise ObserverDivergence(f"non-finite observer state at t = {t[k + 1]:.6g}")
        Pbuf[r, c] = s[dim_z:]
        Pbuf[c, r] = s[dim_z:]
        ev = np.linalg.eigvalsh(Pbuf)
        if ev[0] < -pd_tol * max(abs(ev[-1]), 1.0):
            raise ObserverDivergence(
                f"P lost positive definiteness at t = {t[k + 1]:.6g} (min eigenvalue {ev[0]:.3e})"
            )
        Z[k + 1], PP[k + 1], min_eig[k + 1] = s[:dim_z], s[dim_z:], ev[0]
    return ObserverRun(t, Z, PP, min_eig, ltv.recover_x(Z))


def observability_gramian(ltv: LtvSystem, t, u, interp: str = "cubic") -> np.ndarray:
    """Finite-window Gramian ``int Phi^T calC^T calC Phi dt`` over the grid.

    Diagnostic only: ``Phi`` is the transition matrix of ``calA(u(t))``
    from ``t[0]``, integrated with RK4, and the integral uses the
    trapezoid rule on the grid. A near-singular result flags inputs that
    are not exciting enough for the observer to converge.
    """
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float).reshape(t.size, -1)
    u_mid = midpoints(u, interp)
    n = ltv.dim_z
    C = ltv.calC

    def f(tt, phi, uu):
        return (ltv.calA(uu) @ phi.reshape(n, n)).reshape(-1)

    phi = np.eye(n).reshape(-1)
    CtC = C.T @ C
    W = np.zeros((n, n))
    prev = CtC.copy()
    for k in range(t.size - 1):
        h = t[k + 1] - t[k]
        phi = rk4_step(f, t[k], phi, h, (u[k],), (u_mid[k],), (u[k + 1],))
        Ph = phi.reshape(n, n)
        cur = Ph.T @ CtC @ Ph
        W += 0.5 * h * (prev + cur)
        prev = cur
    return 0.5 * (W + W.T)
