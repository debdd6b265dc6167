"""Plant model: linear dynamics with quadratic outputs.

    xdot = A x + B u
    y_h  = 0.5 x^T C_h x + d_h^T x,    h = 1..q

Systems are read from and written to a JSON document::

    {"n": 2, "p": 1, "q": 1,
     "A": [[0, 1], [1, 2]], "B": [[0], [1]],
     "C": [[[1, 0], [0, 1]]], "d": [[0, 0]]}

All matrices are row-major lists of rows. ``p = 0`` (no input) is allowed;
``B`` is then ``n x 0`` and may be written as ``n`` empty rows or ``[]``.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .symcalc import SymMatrix, duplication, vech

__all__ = [
    "SystemDocumentError",
    "LqoSystem",
    "StackedOutput",
    "load_system",
    "save_system",
    "system_from_dict",
    "system_to_dict",
    "output_of",
    "stacked_output",
]

ASYMMETRY_TOL = 1e-9


class SystemDocumentError(ValueError):
    """Raised for invalid system documents (parse, shape, symmetry, finiteness)."""


@dataclass(frozen=True, eq=False)
class LqoSystem:
    """Linear system with ``q`` quadratic outputs.

    Attributes
    ----------
    A : ndarray, shape (n, n)
    B : ndarray, shape (n, p)
    C : tuple of SymMatrix
        One symmetric weight per output.
    d : ndarray, shape (q, n)
        Linear output terms, row ``h`` is ``d_h^T``.
    """

    A: np.ndarray
    B: np.ndarray
    C: tuple
    d: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise SystemDocumentError(f"A must be a nonempty square matrix, got shape {A.shape}")
        n = A.shape[0]
        B = np.array(self.B, dtype=float)
        if B.size == 0:
            B = np.zeros((n, 0))
        if B.ndim != 2 or B.shape[0] != n:
            raise SystemDocumentError(f"B must have {n} rows, got shape {B.shape}")
        C = tuple(c if isinstance(c, SymMatrix) else SymMatrix.from_dense(c) for c in self.C)
        if len(C) < 1:
            raise SystemDocumentError("at least one output is required")
        for h, c in enumerate(C):
            if c.dim != n:
                raise SystemDocumentError(f"C[{h}] has dim {c.dim}, expected {n}")
        d = np.array(self.d, dtype=float)
        if d.ndim == 1 and len(C) == 1:
            d = d.reshape(1, -1)
        if d.shape != (len(C), n):
            raise SystemDocumentError(f"d must have shape {(len(C), n)}, got {d.shape}")
        for name, arr in (("A", A), ("B", B), ("d", d)):
            if not np.all(np.isfinite(arr)):
                raise SystemDocumentError(f"{name} has non-finite entries")
        for arr in (A, B, d):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "d", d)
        Cf = np.array([c.full() for c in C])
        Cf.setflags(write=False)
        object.__setattr__(self, "_C_full", Cf)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @property
    def q(self) -> int:
        return len(self.C)

    @property
    def C_full(self) -> np.ndarray:
        """Dense output weights, shape ``(q, n, n)``."""
        return self._C_full

    @property
    def asymmetry(self) -> float:
        """Largest asymmetry residual among the dense ``C_h`` inputs."""
        return max(c.residual for c in self.C)


@dataclass(frozen=True)
class StackedOutput:
    """Outputs in lifted form: ``y = Cbar @ x2 + Dmat @ x``."""

    Cbar: np.ndarray
    Dmat: np.ndarray


def _matrix(doc, key, shape, allow_empty_cols=False):
    try:
        arr = np.array(doc[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise SystemDocumentError(f"field {key!r} is not a numeric matrix: {exc}") from None
    if allow_empty_cols and arr.size == 0 and shape[1] == 0:
        return np.zeros(shape)
    if arr.shape != shape:
        raise SystemDocumentError(f"field {key!r} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise SystemDocumentError(f"field {key!r} has non-finite entries")
    return arr


def system_from_dict(doc: dict) -> LqoSystem:
    """Validate a parsed system document and build an :class:`LqoSystem`."""
    missing = [k for k in ("n", "p", "q", "A", "B", "C", "d") if k not in doc]
    if missing:
        raise SystemDocumentError(f"system document is missing fields: {', '.join(missing)}")
    n, p, q = doc["n"], doc["p"], doc["q"]
    for name, val, low in (("n", n, 1), ("p", p, 0), ("q", q, 1)):
        if not isinstance(val, int) or isinstance(val, bool) or val < low:
            raise SystemDocumentError(f"field {name!r} must be an integer >= {low}, got {val!r}")
    A = _matrix(doc, "A", (n, n))
    B = _matrix(doc, "B", (n, p), allow_empty_cols=True)
    if not isinstance(doc["C"], list) or len(doc["C"]) != q:
        raise SystemDocumentError(f"field 'C' must be a list of {q} matrices")
    if not isinstance(doc["d"], list) or len(doc["d"]) != q:
        raise SystemDocumentError(f"field 'd' must be a list of {q} vectors")
    C = []
    for h in range(q):
        Ch = _matrix({"C": doc["C"][h]}, "C", (n, n))
        try:
            C.append(SymMatrix.from_dense(Ch, tol=ASYMMETRY_TOL * max(1.0, np.abs(Ch).max())))
        except ValueError as exc:
            raise SystemDocumentError(f"C[{h}]: {exc}") from None
    d = np.array([_matrix({"d": doc["d"][h]}, "d", (n,)) for h in range(q)])
    return LqoSystem(A, B, tuple(C), d)


def load_system(document) -> LqoSystem:
    """Load a system from JSON text, a path, or an already-parsed dict.

    Dense ``C_h`` are symmetrized; the residual is kept on each
    :class:`SymMatrix` (``sys.asymmetry``). A residual above ``1e-9``
    (relative to the entry scale) is an error.
    """
    if isinstance(document, dict):
        return system_from_dict(document)
    if isinstance(document, (os.PathLike,)) or (
        isinstance(document, str) and not document.lstrip().startswith("{")
    ):
        with open(document) as fh:
            document = fh.read()
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SystemDocumentError(f"cannot parse system document: {exc}") from None
    if not isinstance(doc, dict):
        raise SystemDocumentError("system document must be a JSON object")
    return system_from_dict(doc)


def system_to_dict(sys: LqoSystem) -> dict:
    return {
        "n": sys.n,
        "p": sys.p,
        "q": sys.q,
        "A": sys.A.tolist(),
        "B": sys.B.tolist(),
        "C": [c.full().tolist() for c in sys.C],
        "d": sys.d.tolist(),
    }


def save_system(sys: LqoSystem, path=None) -> str:
    """Serialize to JSON; write to ``path`` when given. Returns the text."""
    text = json.dumps(system_to_dict(sys), indent=2)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text


def output_of(sys: LqoSystem, x) -> np.ndarray:
    """Evaluate ``y_h = 0.5 x^T C_h x + d_h^T x`` directly."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != sys.n:
        raise ValueError(f"state has length {x.size}, expected {sys.n}")
    quad = 0.5 * np.einsum("i,hij,j->h", x, sys.C_full, x)
    return quad + sys.d @ x


def stacked_output(sys: LqoSystem, check: bool = False) -> StackedOutput:
    """Rows ``0.5 vech(C_h)^T`` and ``d_h^T`` stacked over the outputs.

    With ``check=True`` the lifted form is compared against
    :func:`output_of` at 10 random states.
    """
    Cbar = 0.5 * np.array([vech(c) for c in sys.C])
    Dmat = sys.d.copy()
    out = StackedOutput(Cbar, Dmat)
    if check:
        rng = np.random.default_rng(0)
        Dn = duplication(sys.n).D
        for _ in range(10):
            x = rng.standard_normal(sys.n)
            y_lift = Cbar @ (Dn.T @ np.kron(x, x)) + Dmat @ x
            y_dir = output_of(sys, x)
            if not np.allclose(y_lift, y_dir, rtol=1e-10, atol=1e-11):
                raise AssertionError("stacked output does not reproduce the quadratic outputs")
    return out
