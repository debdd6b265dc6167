"""Seeded invariant checks run by ``quadimmerse selftest``.

Each check returns the worst error it saw; a check passes when that error
is within its tolerance. Everything is deterministic for a given seed.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np

from .immersion import algorithm1, build_ltv, immerse, krylov_rank, lift, single_output_immersion
from .observer import ObserverState, observer_derivative
from .simkit import InputSignal, simulate_extended, simulate_truth
from .symcalc import (
    SymMatrix,
    duplication,
    kron,
    lifted_drift,
    lifted_input,
    lyap_op,
    vec,
    vech,
    vech_lyap_matrix,
)
from .sysmodel import LqoSystem, load_system, output_of, stacked_output

__all__ = ["CheckResult", "random_system", "run_selftest", "CHECKS"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    error: float
    tol: float
    seconds: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error <= self.tol)


def _sym(rng, n):
    M = rng.standard_normal((n, n))
    return M + M.T


def random_system(rng, n=None, q=None, p=None, structured=False) -> LqoSystem:
    """Random plant with ``||A||_2 <= 0.5`` and unit-norm output weights.

    ``structured=True`` draws sparse integer matrices (exact rank
    deficiencies are likely) scaled by powers of two.
    """
    n = int(rng.integers(1, 5)) if n is None else n
    q = int(rng.integers(1, 4)) if q is None else q
    p = int(rng.integers(0, 3)) if p is None else p
    if structured:
        A = rng.integers(-1, 2, (n, n)) * (rng.random((n, n)) < 0.4)
        A = A.astype(float)
        Cs = []
        for _ in range(q):
            V = rng.integers(-1, 2, (n, n)) * (rng.random((n, n)) < 0.5)
            Cs.append((V + V.T).astype(float))
        if A.any():
            A *= 2.0 ** -np.ceil(np.log2(np.linalg.norm(A, 2) / 0.5))
        Cs = [C * 2.0 ** -np.ceil(np.log2(np.linalg.norm(C, 2))) if C.any() else C for C in Cs]
    else:
        A = rng.standard_normal((n, n))
        A *= rng.uniform(0.1, 0.5) / max(np.linalg.norm(A, 2), 1e-12)
        Cs = [_sym(rng, n) for _ in range(q)]
        Cs = [C / np.linalg.norm(C, 2) for C in Cs]
    B = rng.standard_normal((n, p))
    d = rng.standard_normal((q, n))
    return LqoSystem(A, B, tuple(Cs), d)


def random_input(rng, p) -> InputSignal:
    if p == 0:
        return InputSignal("zero", dim=0)
    return InputSignal(
        "sinusoid",
        amplitude=rng.uniform(0.2, 1.5, p),
        omega=rng.uniform(0.3, 3.0, p),
        phase=rng.uniform(0.0, 2 * np.pi, p),
    )


def _scaled(err, *operands):
    return err / max(1.0, *(np.abs(o).max() for o in operands if np.size(o)))


def check_duplication(rng, count=100):
    worst = 0.0
    for n in range(1, 9):
        dp = duplication(n)
        for _ in range(count):
            M = _sym(rng, n)
            worst = max(worst, np.abs(dp.D @ vech(M) - vec(M)).max())
        worst = max(worst, np.abs(dp.Dplus @ dp.D - np.eye(dp.D.shape[1])).max())
    return worst


def check_projection(rng, count=100):
    """``(D D^+)^T (u (x) u) == u (x) u``."""
    worst = 0.0
    for n in range(1, 7):
        dp = duplication(n)
        Pm = (dp.D @ dp.Dplus).T
        for _ in range(count):
            u = rng.standard_normal(n)
            uu = np.kron(u, u)
            worst = max(worst, _scaled(np.abs(Pm @ uu - uu).max(), uu))
    return worst


def check_vech_lyap(rng, count=100):
    worst = 0.0
    for n in range(1, 7):
        for _ in range(count):
            A = rng.standard_normal((n, n))
            X = SymMatrix.from_dense(_sym(rng, n))
            lhs = vech_lyap_matrix(A) @ vech(X)
            rhs = vech(lyap_op(A, X))
            worst = max(worst, _scaled(np.abs(lhs - rhs).max(), rhs))
    return worst


def check_lifted_dynamics(rng, count=100):
    worst = 0.0
    for n in range(1, 7):
        D = duplication(n).D
        for _ in range(count):
            p = int(rng.integers(0, 4))
            A = rng.standard_normal((n, n))
            B = rng.standard_normal((n, p))
            x, u = rng.standard_normal(n), rng.standard_normal(p)
            Abar = lifted_drift(A)
            xdot = A @ x + B @ u
            lhs = D.T @ (np.kron(xdot, x) + np.kron(x, xdot))
            rhs = Abar @ lift(x) + lifted_input(B, u) @ x
            worst = max(worst, _scaled(np.abs(lhs - rhs).max(), lhs))
    return worst


def check_kron(rng, count=100):
    worst = 0.0
    for _ in range(count):
        a, b, c, d, e = rng.integers(1, 5, 5)
        A, C = rng.standard_normal((a, b)), rng.standard_normal((b, c))
        B, Dm = rng.standard_normal((d, e)), rng.standard_normal((e, a))
        lhs = kron(A @ C, B @ Dm)
        worst = max(worst, _scaled(np.abs(lhs - kron(A, B) @ kron(C, Dm)).max(), lhs))
        X = rng.standard_normal((b, d))
        W = rng.standard_normal((d, e))
        lhs = vec(A @ X @ W)
        worst = max(worst, _scaled(np.abs(lhs - kron(W.T, A) @ vec(X)).max(), lhs))
    return worst


def check_stacked_output(rng, count=100):
    worst = 0.0
    for _ in range(count):
        sys = random_system(rng)
        so = stacked_output(sys)
        x = rng.standard_normal(sys.n)
        y = output_of(sys, x)
        worst = max(worst, _scaled(np.abs(so.Cbar @ lift(x) + so.Dmat @ x - y).max(), y))
    return worst


def check_examples(rng=None):
    """Bundled examples 1-3: stage counts, dims and output consistency."""
    from . import data_path

    err = 0.0
    imm = single_output_immersion(load_system(data_path("example1.json")))
    err += abs(imm.m - 3) + np.abs(imm.alpha).max()
    imm = single_output_immersion(load_system(data_path("example2.json")))
    err += abs(imm.m - 2) + np.abs(imm.alpha - 4.0).max()
    sys3 = load_system(data_path("example3.json"))
    imm = algorithm1(sys3)
    err += abs(imm.m - 3) + sum(abs(a - b) for a, b in zip(imm.dims, (2, 1, 1)))
    err += abs(krylov_rank(sys3) - imm.n_aux)
    ltv = build_ltv(sys3, imm)
    x0 = np.array([0, 0, 2, 0, 1, 0, 0, 0, 1.0])
    err += np.abs(ltv.calC @ ltv.embed(x0) - np.array([2.0, 0.5])).max()
    return float(err)


def check_exact_immersion(rng, count=20, T=2.0, h=1e-3):
    """``z(t) == embed(x(t))`` and ``calC z == y`` on random plants."""
    worst = 0.0
    for trial in range(count):
        sys = random_system(rng, structured=trial % 4 == 3)
        imm = algorithm1(sys)
        if imm.n_aux != krylov_rank(sys):
            return np.inf
        ltv = build_ltv(sys, imm)
        sig = random_input(rng, sys.p)
        x0 = rng.standard_normal(sys.n)
        truth = simulate_truth(sys, sig, x0, T, h)
        Z = simulate_extended(ltv, sig, ltv.embed(x0), T, h)
        E = np.array([ltv.embed(x) for x in truth.x])
        worst = max(worst, np.abs(Z - E).max(), 100 * np.abs(Z @ ltv.calC.T - truth.y).max())
    return worst


def check_zero_innovation(rng, count=20):
    worst = 0.0
    for _ in range(count):
        sys = random_system(rng, p=2)
        ltv = build_ltv(sys, immerse(sys))
        z = rng.standard_normal(ltv.dim_z)
        u = rng.standard_normal(2)
        P = SymMatrix.from_dense(np.eye(ltv.dim_z))
        dz, dP = observer_derivative(
            ltv, ObserverState(0.0, z, P), u, ltv.calC @ z, np.eye(sys.q), np.eye(ltv.dim_z)
        )
        ref = ltv.calA(u) @ z + ltv.calB @ u
        worst = max(worst, _scaled(np.abs(dz - ref).max(), ref))
    return worst


CHECKS = {
    "duplication": (check_duplication, 0.0),
    "projection": (check_projection, 1e-12),
    "vech_lyapunov": (check_vech_lyap, 1e-11),
    "lifted_dynamics": (check_lifted_dynamics, 1e-11),
    "kronecker": (check_kron, 1e-12),
    "stacked_output": (check_stacked_output, 1e-11),
    "examples": (check_examples, 1e-10),
    "exact_immersion": (check_exact_immersion, 1e-6),
    "zero_innovation": (check_zero_innovation, 1e-12),
}


def run_selftest(seed: int = 0, names=None, report=print) -> list:
    """Run the checks in ``names`` (all by default); ``report`` gets one line each."""
    results = []
    for name in names or CHECKS:
        fn, tol = CHECKS[name]
        rng = np.random.default_rng([seed, len(results)])
        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                err = float(fn(rng))
            except Exception as exc:  # a crash is a failed check, not a crashed suite
                if report is not None:
                    report(f"{name}: raised {type(exc).__name__}: {exc}")
                err = np.inf
        res = CheckResult(name, err, tol, time.perf_counter() - t0)
        results.append(res)
        if report is not None:
            status = "ok" if res.passed else "FAIL"
            report(f"{status:4s} {name:16s} err={res.error:.2e} tol={res.tol:.0e} ({res.seconds:.2f}s)")
    return results
