"""Immersion of quadratic-output systems into bilinear systems with linear output.

Given ``xdot = A x + B u`` with outputs ``y_h = 0.5 x^T C_h x + d_h^T x``, the
routines here find a minimal set of auxiliary quadratic states ``xi`` and
assemble an extended system

    zdot = calA(u) z + calB u,    y = calC z,

with ``z = [aux states; x]``. Two constructions are provided:

* :func:`single_output_immersion` iterates the Lyapunov operator on ``C``
  until the iterate falls in the span of its predecessors (companion form).
* :func:`algorithm1` works on the lifted monomials ``x^[2] = D^T (x (x) x)``
  for any number of outputs, growing row blocks ``Lbar_k`` until the
  accumulated row space is invariant under the lifted drift.

Both feed :func:`build_ltv`, which returns an :class:`LtvSystem`.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .symcalc import (
    SymMatrix,
    duplication,
    lifted_drift,
    lifted_input,
    tri_size,
    vech,
    vech_lyap_matrix,
)
from .sysmodel import LqoSystem, stacked_output

__all__ = [
    "ImmersionError",
    "RankAmbiguityWarning",
    "numerical_rank",
    "lift",
    "SingleOutputImmersion",
    "MultiOutputImmersion",
    "LtvSystem",
    "single_output_immersion",
    "rank_factorize",
    "decompose_stage",
    "algorithm1",
    "immerse",
    "build_ltv",
    "embed",
    "krylov_rank",
    "immersion_report",
]


class ImmersionError(ArithmeticError):
    """Inconsistent rank decisions or a decomposition residual above tolerance."""


class RankAmbiguityWarning(UserWarning):
    """Two singular values straddle the rank tolerance within a factor of 10."""


def _normalize_rows(M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    norms = np.linalg.norm(M, axis=1)
    keep = norms > 0
    out = np.zeros_like(M)
    out[keep] = M[keep] / norms[keep, None]
    return out


def numerical_rank(M, tol=None, warn=True):
    """Numerical rank of ``M`` with rows scaled to unit length.

    Row scaling leaves the rank unchanged but keeps rows of very different
    magnitude (high Lyapunov iterates next to the output weights) from
    hiding each other. The threshold is ``max(rows, cols) * eps * s_max``
    unless ``tol`` (relative to ``s_max``) is given.

    Returns
    -------
    rank : int
    sv : ndarray
        Singular values of the row-normalized matrix.
    thresh : float
        Absolute threshold used.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0, np.zeros(0), 0.0
    sv = np.linalg.svd(_normalize_rows(M), compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0, sv, 0.0
    rel = max(M.shape) * np.finfo(float).eps if tol is None else tol
    thresh = rel * sv[0]
    rank = int(np.sum(sv > thresh))
    if warn and 0 < rank < sv.size and sv[rank] > 0 and sv[rank - 1] / sv[rank] < 10.0:
        warnings.warn(
            f"ambiguous numerical rank: candidates {rank} and {rank + 1} "
            f"(singular values {sv[rank - 1]:.3e}, {sv[rank]:.3e}, threshold {thresh:.3e})",
            RankAmbiguityWarning,
            stacklevel=2,
        )
    return rank, sv, thresh


def lift(x) -> np.ndarray:
    """Quadratic monomials ``x^[2] = D^T (x (x) x)``.

    Entry ``(i, i)`` is ``x_i**2``; entry ``(i, j)`` with ``i > j`` is
    ``2 x_i x_j`` (``vech`` ordering).
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    return duplication(x.size).D.T @ np.kron(x, x)


# --------------------------------------------------------------------------
# single-output path


@dataclass(frozen=True, eq=False)
class SingleOutputImmersion:
    """Lyapunov iterates ``L_A^[k](C)``, ``k < m``, and the closing coefficients.

    ``vech(L_A^[m](C)) = sum_k alpha[k] vech(L_A^[k](C))`` up to ``residual``.
    """

    m: int
    basis: tuple
    alpha: np.ndarray
    residual: float


def single_output_immersion(sys: LqoSystem, tol=None) -> SingleOutputImmersion:
    """Smallest ``m`` with ``L_A^[m](C)`` in the span of the earlier iterates."""
    if sys.q != 1:
        raise ValueError(f"single-output immersion needs q == 1, got q = {sys.q}")
    T = vech_lyap_matrix(sys.A)
    c = vech(sys.C[0])
    if not np.any(c):
        return SingleOutputImmersion(0, (), np.zeros(0), 0.0)
    iterates = [c]
    for _ in range(tri_size(sys.n)):
        nxt = T @ iterates[-1]
        stack = np.vstack(iterates + [nxt])
        rank, _, _ = numerical_rank(stack, tol)
        if rank == len(iterates) or not np.any(nxt):
            G = np.array(iterates).T
            alpha = np.linalg.lstsq(G, nxt, rcond=None)[0]
            resid = float(np.linalg.norm(G @ alpha - nxt))
            basis = tuple(SymMatrix(v) for v in iterates)
            return SingleOutputImmersion(len(iterates), basis, alpha, resid)
        iterates.append(nxt)
    # unreachable in exact arithmetic: the iterates live in an N-dim space
    raise ImmersionError("Lyapunov iterates did not close within n(n+1)/2 steps")


# --------------------------------------------------------------------------
# multi-output path


@dataclass(frozen=True, eq=False)
class MultiOutputImmersion:
    """Stage matrices of the multi-output construction.

    Attributes
    ----------
    m : int
        Number of stages (0 when every output is purely linear).
    F : ndarray, shape (q, p_0)
        Left factor of ``Cbar = F @ Lbars[0]``.
    Lbars : list of ndarray
        ``Lbars[k]`` has shape ``(p_k, n(n+1)/2)`` and full row rank.
    perms : list of ndarray
        ``perms[k]`` is the ``p_k x p_k`` permutation matrix ``P_k``.
    Ms : dict
        ``Ms[(k, i)]`` is the coefficient block of ``P_i Lbar_i`` in the rows
        of ``P_k Lbar_k Abar`` that are not new, shape ``(p_k - p_{k+1}, p_i)``.
        Blocks with ``i = k + 1`` are nonzero only when some of those rows
        depend on the new block ``Lbar_{k+1}`` as well as the earlier ones.
    dims : tuple of int
        ``(p_0, ..., p_{m-1})``.
    Abar : ndarray
        Lifted drift used throughout.
    residuals : list of float
        Largest decomposition residual at each stage.
    """

    m: int
    F: np.ndarray
    Lbars: list
    perms: list
    Ms: dict
    dims: tuple
    Abar: np.ndarray
    residuals: list = field(default_factory=list)

    @property
    def n_aux(self) -> int:
        return int(sum(self.dims))

    def stage_relation_residual(self, k: int) -> float:
        """Residual of ``P_k Lbar_k Abar = [Lbar_{k+1}; sum_i M_i^(k) P_i Lbar_i]``."""
        lhs = self.perms[k] @ self.Lbars[k] @ self.Abar
        top = self.Lbars[k + 1] if k + 1 < self.m else np.zeros((0, self.Abar.shape[0]))
        rest = np.zeros((self.dims[k] - top.shape[0], self.Abar.shape[0]))
        for i in range(min(k + 2, self.m)):
            if (k, i) in self.Ms:
                rest = rest + self.Ms[(k, i)] @ self.perms[i] @ self.Lbars[i]
        return float(np.max(np.abs(lhs - np.vstack([top, rest])), initial=0.0))


def rank_factorize(Cbar, tol=None):
    """Rank factorization ``Cbar = F @ L0`` by row selection.

    A column-pivoted QR of ``Cbar^T`` picks ``p_0`` independent rows of
    ``Cbar``; they are kept in their original order as ``L0`` and ``F``
    solves ``Cbar = F @ L0`` (it contains an identity in the selected rows).

    Raises
    ------
    ValueError
        If ``Cbar`` is zero.
    """
    Cbar = np.atleast_2d(np.asarray(Cbar, dtype=float))
    if not np.any(Cbar):
        raise ValueError("Cbar is zero: the outputs have no quadratic part")
    rank, _, _ = numerical_rank(Cbar, tol)
    _, _, piv = scipy.linalg.qr(_normalize_rows(Cbar).T, pivoting=True, mode="economic")
    rows = np.sort(piv[:rank])
    L0 = Cbar[rows]
    F = np.linalg.lstsq(L0.T, Cbar.T, rcond=None)[0].T
    F[rows] = np.eye(rank)
    return F, L0


def decompose_stage(prior, Lprev, LA, tol=None):
    """Split the rows of ``LA = Lbar_{k-1} Abar`` into new and dependent rows.

    Parameters
    ----------
    prior : list of (ndarray, ndarray)
        Pairs ``(P_i, Lbar_i)`` for ``i < k - 1``.
    Lprev : ndarray
        ``Lbar_{k-1}``; its permutation is decided here.
    LA : ndarray
        ``Lbar_{k-1} @ Abar``.

    Returns
    -------
    P : ndarray
        Permutation ``P_{k-1}`` moving the new rows to the top, both groups
        keeping their original relative order.
    Lnew : ndarray
        ``Lbar_k``, shape ``(p_k, N)``.
    M : dict
        ``M[i]`` for ``i <= k - 1`` is the block multiplying ``P_i Lbar_i``;
        ``M["new"]`` multiplies the unpermuted ``Lbar_k``.
    residual : float
        Largest backward error of the dependent rows,
        ``||res|| / (||row|| + sum_j |coef_j| ||G_j||)``.
    """
    LA = np.atleast_2d(np.asarray(LA, dtype=float))
    Lprev = np.atleast_2d(np.asarray(Lprev, dtype=float))
    N = LA.shape[1]
    if LA.shape[0] != Lprev.shape[0] or Lprev.shape[1] != N:
        raise ValueError(f"LA {LA.shape} must have the shape of Lprev {Lprev.shape}")
    base = np.vstack([P @ L for P, L in prior] + [Lprev])
    base_rank = base.shape[0]
    full_rank, _, thresh = numerical_rank(np.vstack([base, LA]), tol)
    p_new = full_rank - base_rank

    new = []
    for j in range(LA.shape[0]):
        if not np.any(LA[j]):
            continue
        cand = np.vstack([base, LA[new], LA[j : j + 1]])
        if numerical_rank(cand, tol, warn=False)[0] > base_rank + len(new):
            new.append(j)
    if len(new) != p_new:
        raise ImmersionError(
            f"inconsistent rank decisions: block rank adds {p_new} rows, "
            f"row-by-row selection found {len(new)}"
        )
    dep = [j for j in range(LA.shape[0]) if j not in new]
    order = new + dep
    P = np.eye(LA.shape[0])[order]
    Lnew = LA[new]

    blocks = [Pi @ Li for Pi, Li in prior] + [(P @ Lprev), Lnew]
    sizes = [b.shape[0] for b in blocks]
    G = np.vstack(blocks) if sum(sizes) else np.zeros((0, N))
    M = {}
    residual = 0.0
    if dep:
        target = LA[dep]
        coef = np.linalg.lstsq(G.T, target.T, rcond=None)[0].T
        res = target - coef @ G
        # backward error: residual against the size of the terms combined
        scale = np.linalg.norm(target, axis=1) + np.abs(coef) @ np.linalg.norm(G, axis=1)
        scale[scale == 0] = 1.0
        residual = float(np.max(np.linalg.norm(res, axis=1) / scale))
        limit = 10 * thresh
        if residual > limit:
            raise ImmersionError(
                f"dependent rows not reproduced: relative residual {residual:.3e} > {limit:.3e}"
            )
        edges = np.cumsum([0] + sizes)
        for i in range(len(blocks)):
            key = "new" if i == len(blocks) - 1 else i
            M[key] = coef[:, edges[i] : edges[i + 1]]
    else:
        for i in range(len(prior) + 1):
            M[i] = np.zeros((0, blocks[i].shape[0]))
        M["new"] = np.zeros((0, Lnew.shape[0]))
    return P, Lnew, M, residual


def algorithm1(sys: LqoSystem, tol=None) -> MultiOutputImmersion:
    """Stage-by-stage construction of the minimal auxiliary states.

    Stage 0 rows come from the rank factorization of the stacked output
    weights. Stage ``k`` keeps the rows of ``Lbar_{k-1} Abar`` that enlarge
    the accumulated row space; the loop ends when none do.
    """
    Abar = lifted_drift(sys.A)
    N = Abar.shape[0]
    Cbar = stacked_output(sys).Cbar
    if not np.any(Cbar):
        return MultiOutputImmersion(0, np.zeros((sys.q, 0)), [], [], {}, (), Abar, [])
    F, L0 = rank_factorize(Cbar, tol)
    Lbars = [L0]
    perms = []
    raw = []
    residuals = []
    while True:
        k = len(Lbars)
        if sum(L.shape[0] for L in Lbars) > N:
            raise ImmersionError("auxiliary dimension exceeded n(n+1)/2")
        prior = list(zip(perms, Lbars[:-1]))
        P, Lnew, M, resid = decompose_stage(prior, Lbars[-1], Lbars[-1] @ Abar, tol)
        perms.append(P)
        raw.append(M)
        residuals.append(resid)
        if Lnew.shape[0] == 0:
            break
        Lbars.append(Lnew)
    m = len(Lbars)
    Ms = {}
    for k, M in enumerate(raw):
        for i in range(k + 1):
            Ms[(k, i)] = M[i]
        # coefficient on the next stage, expressed against P_{k+1} Lbar_{k+1}
        if k + 1 < m:
            Ms[(k, k + 1)] = M["new"] @ perms[k + 1].T
    dims = tuple(L.shape[0] for L in Lbars)
    return MultiOutputImmersion(m, F, Lbars, perms, Ms, dims, Abar, residuals)


def immerse(sys: LqoSystem, tol=None):
    """Single-output construction when ``q == 1``, otherwise :func:`algorithm1`."""
    if sys.q == 1:
        return single_output_immersion(sys, tol)
    return algorithm1(sys, tol)


def krylov_rank(sys: LqoSystem, tol=None) -> int:
    """Rank of all Lyapunov iterates ``vech(L_A^[j](C_h))``, computed directly.

    Independent of the stage construction: iterates are formed with dense
    products ``X A + A^T X`` for ``j < n(n+1)/2``.
    """
    rows = []
    for c in sys.C:
        X = c.full()
        for _ in range(tri_size(sys.n)):
            rows.append(vech(X))
            XA = X @ sys.A
            X = XA + XA.T
    return numerical_rank(np.array(rows), tol, warn=False)[0]


# --------------------------------------------------------------------------
# extended system


@dataclass(frozen=True, eq=False)
class LtvSystem:
    """Extended system ``zdot = calA(u) z + calB u``, ``y = calC z``.

    ``calA(u) = A_const + [[0, sum_j u_j coupling[j]], [0, 0]]``, where the
    coupling block maps ``x`` into the auxiliary rows.

    Attributes
    ----------
    n : int
        Original state dimension; ``x`` is the last ``n`` entries of ``z``.
    A_const : ndarray, shape (dim_z, dim_z)
        ``calA(0)``.
    coupling : ndarray, shape (p, n_aux, n)
    calB : ndarray, shape (dim_z, p)
    calC : ndarray, shape (q, dim_z)
    embed_rows : ndarray, shape (n_aux, n(n+1)/2)
        Rows mapping ``x^[2]`` to the auxiliary part of ``z``.
    stage_dims : tuple of int
        Auxiliary block sizes in ``z`` order (last stage first).
    """

    n: int
    A_const: np.ndarray
    coupling: np.ndarray
    calB: np.ndarray
    calC: np.ndarray
    embed_rows: np.ndarray
    stage_dims: tuple

    def __post_init__(self):
        p, n_aux, n = self.coupling.shape
        object.__setattr__(self, "_coupling_flat", self.coupling.reshape(p, n_aux * n))

    @property
    def dim_z(self) -> int:
        return self.A_const.shape[0]

    @property
    def n_aux(self) -> int:
        return self.dim_z - self.n

    @property
    def p(self) -> int:
        return self.calB.shape[1]

    def coupling_block(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float).reshape(-1)
        if u.size != self.p:
            raise ValueError(f"input has length {u.size}, expected {self.p}")
        if self.p == 0:
            return np.zeros((self.n_aux, self.n))
        return (u @ self._coupling_flat).reshape(self.n_aux, self.n)

    def calA(self, u) -> np.ndarray:
        """Evaluate ``calA(u)``; a fresh array each call."""
        out = self.A_const.copy()
        out[: self.n_aux, self.n_aux :] += self.coupling_block(u)
        return out

    def rhs(self, z, u) -> np.ndarray:
        """``calA(u) z + calB u`` without forming ``calA(u)``."""
        z = np.asarray(z, dtype=float)
        u = np.asarray(u, dtype=float).reshape(-1)
        out = self.A_const @ z + self.calB @ u
        if self.p:
            out[: self.n_aux] += self.coupling_block(u) @ z[self.n_aux :]
        return out

    def embed(self, x) -> np.ndarray:
        """Extended state of the plant state ``x``."""
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.n:
            raise ValueError(f"state has length {x.size}, expected {self.n}")
        return np.concatenate([self.embed_rows @ lift(x), x])

    def recover_x(self, z) -> np.ndarray:
        """Plant state: the trailing ``n`` entries of ``z`` (works on stacked rows)."""
        return np.asarray(z)[..., self.n_aux :]


def _build_single(sys: LqoSystem, imm: SingleOutputImmersion) -> LtvSystem:
    n, p, m = sys.n, sys.p, imm.m
    dim_z = m + n
    A_const = np.zeros((dim_z, dim_z))
    if m:
        A_const[0, :m] = imm.alpha[::-1]
        A_const[np.arange(1, m), np.arange(0, m - 1)] = 1.0
    A_const[m:, m:] = sys.A
    # row r of the aux block is xi_{m-1-r}; its coupling is (B e_j)^T L^[k](C)
    coupling = np.zeros((p, m, n))
    for r in range(m):
        Lk = imm.basis[m - 1 - r].full()
        coupling[:, r, :] = (Lk @ sys.B).T
    calB = np.vstack([np.zeros((m, p)), sys.B])
    calC = np.zeros((1, dim_z))
    if m:
        calC[0, m - 1] = 1.0
    calC[0, m:] = sys.d[0]
    embed_rows = np.array([0.5 * imm.basis[m - 1 - r].packed for r in range(m)]).reshape(m, tri_size(n))
    return LtvSystem(n, A_const, coupling, calB, calC, embed_rows, (1,) * m)


def _build_multi(sys: LqoSystem, imm: MultiOutputImmersion) -> LtvSystem:
    n, p, m = sys.n, sys.p, imm.m
    dims = imm.dims
    n_aux = imm.n_aux
    dim_z = n_aux + n
    # z block of stage k starts at offset[k]; stages run m-1 .. 0 from the top
    offset = {}
    pos = 0
    for k in reversed(range(m)):
        offset[k] = pos
        pos += dims[k]
    A_const = np.zeros((dim_z, dim_z))
    for k in range(m):
        r0 = offset[k]
        p_next = dims[k + 1] if k + 1 < m else 0
        for i in range(min(k + 2, m)):
            Mki = imm.Ms.get((k, i))
            if Mki is None or Mki.size == 0:
                continue
            c0 = offset[i]
            A_const[r0 + p_next : r0 + dims[k], c0 : c0 + dims[i]] += Mki
        if k + 1 < m:
            c0 = offset[k + 1]
            A_const[r0 : r0 + p_next, c0 : c0 + p_next] += imm.perms[k + 1].T
    A_const[n_aux:, n_aux:] = sys.A

    embed_rows = np.zeros((n_aux, tri_size(n)))
    for k in range(m):
        embed_rows[offset[k] : offset[k] + dims[k]] = imm.perms[k] @ imm.Lbars[k]
    coupling = np.zeros((p, n_aux, n))
    for j in range(p):
        e = np.zeros(p)
        e[j] = 1.0
        coupling[j] = embed_rows @ lifted_input(sys.B, e)
    calB = np.vstack([np.zeros((n_aux, p)), sys.B])
    calC = np.zeros((sys.q, dim_z))
    if m:
        calC[:, offset[0] : offset[0] + dims[0]] = imm.F @ imm.perms[0].T
    calC[:, n_aux:] = sys.d
    stage_dims = tuple(dims[k] for k in reversed(range(m)))
    return LtvSystem(n, A_const, coupling, calB, calC, embed_rows, stage_dims)


def build_ltv(sys: LqoSystem, imm) -> LtvSystem:
    """Assemble ``calA(u)``, ``calB``, ``calC`` from an immersion of ``sys``.

    State ordering is ``z = [P_{m-1} xi_{m-1}; ...; P_0 xi_0; x]`` (for the
    single-output construction ``z = [xi_{m-1}; ...; xi_0; x]``).
    """
    if isinstance(imm, SingleOutputImmersion):
        return _build_single(sys, imm)
    if isinstance(imm, MultiOutputImmersion):
        return _build_multi(sys, imm)
    raise TypeError(f"unsupported immersion type {type(imm).__name__}")


def embed(sys: LqoSystem, imm, x) -> np.ndarray:
    """``z`` for the plant state ``x``; see :meth:`LtvSystem.embed`."""
    return build_ltv(sys, imm).embed(x)


def immersion_report(sys: LqoSystem, imm, ltv: LtvSystem | None = None) -> dict:
    """JSON-ready summary of an immersion and its extended system."""
    ltv = build_ltv(sys, imm) if ltv is None else ltv
    report = {
        "n": sys.n,
        "p": sys.p,
        "q": sys.q,
        "m": imm.m,
        "dim_z": ltv.dim_z,
        "n_aux": ltv.n_aux,
        "calA_const": ltv.A_const.tolist(),
        "calA_coupling": ltv.coupling.tolist(),
        "calB": ltv.calB.tolist(),
        "calC": ltv.calC.tolist(),
    }
    if isinstance(imm, SingleOutputImmersion):
        report.update(
            method="single_output",
            dims=[1] * imm.m,
            alpha=imm.alpha.tolist(),
            basis=[b.full().tolist() for b in imm.basis],
            residuals={"alpha": imm.residual},
        )
    else:
        report.update(
            method="algorithm1",
            dims=list(imm.dims),
            F=imm.F.tolist(),
            Lbar=[L.tolist() for L in imm.Lbars],
            P=[P.tolist() for P in imm.perms],
            M={f"{k},{i}": M.tolist() for (k, i), M in sorted(imm.Ms.items())},
            residuals={
                "decomposition": list(imm.residuals),
                "stage_relation": [imm.stage_relation_residual(k) for k in range(imm.m)],
            },
        )
    return report
