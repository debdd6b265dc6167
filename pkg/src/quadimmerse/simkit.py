"""Simulation harness: truth integration, scenarios, and CSV traces.

A scenario document (JSON) looks like::

    {
      "system": "example3.json",            # path (relative to this file) or inline dict
      "observer": "example3_observer.json", # path or inline dict
      "input": {"kind": "sinusoid", "amplitude": [...], "omega": [...], "phase": [...]},
      "x0": [...],
      "T": 60.0, "h": 0.001,
      "error_groups": {"position": [0, 3], "air_velocity": [3, 6]},
      "interpolation": "cubic"
    }

Error groups are half-open index ranges ``[start, stop)`` into ``x``.
"""
from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .immersion import LtvSystem, build_ltv, immerse, immersion_report
from .integrate import rk4_affine, time_grid
from .observer import ObserverRun, load_observer_config, run_observer
from .sysmodel import LqoSystem, load_system, output_of

__all__ = [
    "InputSignal",
    "TruthRun",
    "Scenario",
    "SimulationTrace",
    "ScenarioResult",
    "simulate_truth",
    "simulate_extended",
    "load_scenario",
    "run_scenario",
    "trace_to_csv",
    "trace_from_csv",
]


class InputSignal:
    """Input ``u(t)`` of one of four kinds.

    ``zero``
        ``u = 0`` (needs ``dim``).
    ``constant``
        ``u = value``.
    ``sinusoid``
        ``u_j = offset_j + amplitude_j * cos(omega_j t + phase_j)``
        per channel; angular frequencies in rad/s, phases in rad.
    ``table``
        Linear interpolation in ``(times, values)``, end values held.
    """

    KINDS = ("zero", "constant", "sinusoid", "table")

    def __init__(self, kind, dim=None, value=None, amplitude=None, omega=None, phase=None,
                 offset=None, times=None, values=None):
        if kind not in self.KINDS:
            raise ValueError(f"unknown input kind {kind!r}")
        self.kind = kind
        if kind == "zero":
            if dim is None:
                raise ValueError("zero input needs 'dim'")
            self.dim = int(dim)
        elif kind == "constant":
            self.value = np.atleast_1d(np.asarray(value, dtype=float))
            self.dim = self.value.size
        elif kind == "sinusoid":
            self.amplitude = np.atleast_1d(np.asarray(amplitude, dtype=float))
            self.dim = self.amplitude.size
            self.omega = np.broadcast_to(np.asarray(omega, dtype=float), (self.dim,)).copy()
            self.phase = np.zeros(self.dim) if phase is None else np.broadcast_to(np.asarray(phase, float), (self.dim,)).copy()
            self.offset = np.zeros(self.dim) if offset is None else np.broadcast_to(np.asarray(offset, float), (self.dim,)).copy()
        else:
            self.times = np.asarray(times, dtype=float)
            vals = np.asarray(values, dtype=float)
            self.values = vals.reshape(self.times.size, -1)
            if np.any(np.diff(self.times) <= 0):
                raise ValueError("table times must be strictly increasing")
            self.dim = self.values.shape[1]

    @classmethod
    def from_dict(cls, doc: dict) -> "InputSignal":
        doc = dict(doc)
        return cls(doc.pop("kind"), **doc)

    def to_dict(self) -> dict:
        if self.kind == "zero":
            return {"kind": "zero", "dim": self.dim}
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value.tolist()}
        if self.kind == "sinusoid":
            return {"kind": "sinusoid", "amplitude": self.amplitude.tolist(), "omega": self.omega.tolist(),
                    "phase": self.phase.tolist(), "offset": self.offset.tolist()}
        return {"kind": "table", "times": self.times.tolist(), "values": self.values.tolist()}

    def __call__(self, t):
        """Evaluate at a scalar time (shape ``(dim,)``) or an array of times (``(len, dim)``)."""
        t = np.asarray(t, dtype=float)
        tt = np.atleast_1d(t)
        if self.kind == "zero":
            out = np.zeros((tt.size, self.dim))
        elif self.kind == "constant":
            out = np.broadcast_to(self.value, (tt.size, self.dim)).copy()
        elif self.kind == "sinusoid":
            out = self.offset + self.amplitude * np.cos(np.outer(tt, self.omega) + self.phase)
        else:
            out = np.column_stack([np.interp(tt, self.times, self.values[:, j]) for j in range(self.dim)])
        return out[0] if t.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class TruthRun:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    y: np.ndarray


def simulate_truth(sys: LqoSystem, sig: InputSignal, x0, T: float, h: float) -> TruthRun:
    """RK4 integration of ``xdot = A x + B u`` with ``u`` evaluated exactly at every stage.

    Uses :func:`~quadimmerse.integrate.rk4_affine` (one precomputed affine
    map per step).

    Outputs are computed from the quadratic forms at each grid point.
    """
    if sig.dim != sys.p:
        raise ValueError(f"input has {sig.dim} channels, system expects {sys.p}")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != sys.n:
        raise ValueError(f"x0 has length {x0.size}, expected {sys.n}")
    t = time_grid(T, h)
    u = sig(t).reshape(t.size, sys.p)
    u_mid = sig(t[:-1] + 0.5 * h).reshape(t.size - 1, sys.p)
    X = rk4_affine(sys.A, sys.A, sys.A, u[:-1] @ sys.B.T, u_mid @ sys.B.T, u[1:] @ sys.B.T, x0, h)
    if not np.all(np.isfinite(X)):
        raise FloatingPointError("non-finite plant state")
    Y = np.array([output_of(sys, xk) for xk in X]).reshape(t.size, sys.q)
    return TruthRun(t, X, u, Y)


def simulate_extended(ltv: LtvSystem, sig: InputSignal, z0, T: float, h: float) -> np.ndarray:
    """RK4 integration of ``zdot = calA(u) z + calB u``; returns ``z`` on the grid."""
    if sig.dim != ltv.p:
        raise ValueError(f"input has {sig.dim} channels, system expects {ltv.p}")
    t = time_grid(T, h)
    u = sig(t).reshape(t.size, ltv.p)
    u_mid = sig(t[:-1] + 0.5 * h).reshape(t.size - 1, ltv.p)

    def stage(uu):
        A = np.broadcast_to(ltv.A_const, (uu.shape[0], ltv.dim_z, ltv.dim_z)).copy()
        if ltv.p:
            A[:, : ltv.n_aux, ltv.n_aux :] += (uu @ ltv.coupling.reshape(ltv.p, -1)).reshape(uu.shape[0], ltv.n_aux, ltv.n)
        return A

    Bc = ltv.calB.T
    return rk4_affine(stage(u[:-1]), stage(u_mid), stage(u[1:]), u[:-1] @ Bc, u_mid @ Bc, u[1:] @ Bc, z0, h)


@dataclass(frozen=True, eq=False)
class Scenario:
    system: LqoSystem
    signal: InputSignal
    x0: np.ndarray
    observer: dict
    T: float
    h: float
    error_groups: dict = field(default_factory=dict)
    interpolation: str = "cubic"
    name: str = "scenario"


def _read_json(ref, base):
    if isinstance(ref, dict):
        return ref
    path = ref if os.path.isabs(ref) else os.path.join(base, ref)
    with open(path) as fh:
        return json.load(fh)


def load_scenario(document) -> Scenario:
    """Load a scenario from a path, JSON text, or dict; references resolve next to the file."""
    base = os.getcwd()
    name = "scenario"
    if isinstance(document, dict):
        doc = document
    elif isinstance(document, os.PathLike) or not str(document).lstrip().startswith("{"):
        path = os.fspath(document)
        base = os.path.dirname(os.path.abspath(path))
        name = os.path.splitext(os.path.basename(path))[0]
        with open(path) as fh:
            doc = json.load(fh)
    else:
        doc = json.loads(document)
    missing = [k for k in ("system", "input", "x0", "T", "h") if k not in doc]
    if missing:
        raise ValueError(f"scenario is missing fields: {', '.join(missing)}")
    sys = load_system(_read_json(doc["system"], base))
    sig = InputSignal.from_dict(doc["input"])
    obs = _read_json(doc.get("observer", {}), base)
    T, h = float(doc["T"]), float(doc["h"])
    time_grid(T, h)
    groups = {}
    for g, rng in doc.get("error_groups", {"x": [0, sys.n]}).items():
        lo, hi = int(rng[0]), int(rng[1])
        if not 0 <= lo < hi <= sys.n:
            raise ValueError(f"error group {g!r} range {rng} outside 0..{sys.n}")
        groups[g] = (lo, hi)
    return Scenario(sys, sig, np.asarray(doc["x0"], dtype=float), obs, T, h, groups,
                    doc.get("interpolation", "cubic"), doc.get("name", name))


@dataclass(frozen=True, eq=False)
class SimulationTrace:
    """Per-grid-point record of a run.

    ``zhat`` and ``xhat`` are empty (zero columns) for truth-only runs;
    ``errors`` maps each group name to ``||x_g - xhat_g||`` over time.
    """

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    zhat: np.ndarray
    xhat: np.ndarray
    errors: dict

    def columns(self) -> list:
        cols = ["t"]
        for prefix, arr in (("x", self.x), ("u", self.u), ("y", self.y), ("zhat", self.zhat), ("xhat", self.xhat)):
            cols += [f"{prefix}_{j}" for j in range(arr.shape[1])]
        cols += [f"err_{g}" for g in self.errors]
        return cols

    def table(self) -> np.ndarray:
        parts = [self.t[:, None], self.x, self.u, self.y, self.zhat, self.xhat]
        parts += [np.asarray(e)[:, None] for e in self.errors.values()]
        return np.hstack(parts)


@dataclass(frozen=True, eq=False)
class ScenarioResult:
    trace: SimulationTrace
    ltv: LtvSystem
    report: dict
    observer_run: ObserverRun | None


def run_scenario(sc: Scenario, observe: bool = True) -> ScenarioResult:
    """Simulate the plant, immerse it, and (optionally) run the observer."""
    truth = simulate_truth(sc.system, sc.signal, sc.x0, sc.T, sc.h)
    imm = immerse(sc.system)
    ltv = build_ltv(sc.system, imm)
    report = immersion_report(sc.system, imm, ltv)
    empty = np.zeros((truth.t.size, 0))
    if not observe:
        trace = SimulationTrace(truth.t, truth.x, truth.u, truth.y, empty, empty, {})
        return ScenarioResult(trace, ltv, report, None)
    cfg = load_observer_config(sc.observer, ltv)
    run = run_observer(ltv, cfg, truth.t, truth.u, truth.y, interp=sc.interpolation)
    errors = {g: np.linalg.norm(truth.x[:, lo:hi] - run.xhat[:, lo:hi], axis=1)
              for g, (lo, hi) in sc.error_groups.items()}
    trace = SimulationTrace(truth.t, truth.x, truth.u, truth.y, run.zhat, run.xhat, errors)
    return ScenarioResult(trace, ltv, report, run)


def trace_to_csv(trace: SimulationTrace, path=None) -> str:
    """Header row plus one row per grid point; floats written with ``repr``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trace.columns())
    for row in trace.table():
        w.writerow([repr(float(v)) for v in row])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def trace_from_csv(text_or_path) -> SimulationTrace:
    """Inverse of :func:`trace_to_csv` (accepts CSV text or a path)."""
    text = text_or_path
    if "\n" not in str(text_or_path):
        with open(text_or_path) as fh:
            text = fh.read()
    rows = list(csv.reader(io.StringIO(text)))
    header, data = rows[0], np.array([[float(v) for v in r] for r in rows[1:]])
    data = data.reshape(len(rows) - 1, len(header))

    def grab(prefix):
        idx = [j for j, c in enumerate(header) if c.rsplit("_", 1)[0] == prefix and c != "t"]
        return data[:, idx]

    errors = {c[4:]: data[:, j] for j, c in enumerate(header) if c.startswith("err_")}
    return SimulationTrace(data[:, 0], grab("x"), grab("u"), grab("y"), grab("zhat"), grab("xhat"), errors)
