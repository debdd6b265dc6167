import numpy as np
import pytest
from scipy.linalg import expm

from conftest import assert_close
from quadimmerse import (
    InputSignal,
    LtvSystem,
    ObserverConfig,
    ObserverDivergence,
    ObserverState,
    Schedule,
    build_ltv,
    immerse,
    load_observer_config,
    observability_gramian,
    observer_derivative,
    run_observer,
    simulate_truth,
)
from quadimmerse.symcalc import SymMatrix

EX2_INPUT = InputSignal("sinusoid", amplitude=[2 * np.sqrt(2)], omega=[1.0], phase=[3 * np.pi / 4])


def plain_ltv(A, C):
    """Extended system with no auxiliary states and no input."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    return LtvSystem(n, A, np.zeros((0, 0, n)), np.zeros((n, 0)), np.atleast_2d(C), np.zeros((0, n * (n + 1) // 2)), ())


@pytest.fixture(scope="module")
def ltv2(ex2):
    return build_ltv(ex2, immerse(ex2))


def test_zero_innovation(ltv2, rng):
    z, u = rng.standard_normal(4), rng.standard_normal(1)
    st = ObserverState(0.0, z, SymMatrix.identity(4))
    dz, _ = observer_derivative(ltv2, st, u, ltv2.calC @ z, np.eye(1), np.eye(4))
    np.testing.assert_array_equal(dz, ltv2.calA(u) @ z + ltv2.calB @ u)


def test_zero_system_gives_V(rng):
    ltv = plain_ltv(np.zeros((3, 3)), np.zeros((1, 3)))
    V = rng.standard_normal((3, 3))
    V = V @ V.T
    st = ObserverState(0.0, rng.standard_normal(3), SymMatrix.identity(3))
    _, dP = observer_derivative(ltv, st, np.zeros(0), [1.0], np.eye(1), V)
    np.testing.assert_array_equal(dP, V)


def test_dP_symmetric(ltv2, rng):
    for _ in range(20):
        M = rng.standard_normal((4, 4))
        st = ObserverState(0.0, rng.standard_normal(4), SymMatrix.from_dense(M @ M.T))
        V = np.eye(4) * rng.uniform(0.1, 2)
        _, dP = observer_derivative(ltv2, st, rng.standard_normal(1), rng.standard_normal(1), np.eye(1) * 2.0, V)
        assert np.abs(dP - dP.T).max() <= 1e-12 * max(1.0, np.abs(dP).max())


def test_derivative_dimension_mismatch(ltv2):
    st = ObserverState(0.0, np.zeros(3), SymMatrix.identity(4))
    with pytest.raises(ValueError):
        observer_derivative(ltv2, st, [0.0], [0.0], np.eye(1), np.eye(4))


def test_exact_initialization_example2(ex2, ltv2):
    x0 = [0.0, 1.0]
    truth = simulate_truth(ex2, EX2_INPUT, x0, 10.0, 1e-3)
    cfg = ObserverConfig.create(ltv2, z0=ltv2.embed(x0))
    run = run_observer(ltv2, cfg, truth.t, truth.u, truth.y)
    assert np.abs(run.xhat - truth.x).max() <= 1e-6
    assert run.min_eig.min() > 0


def test_lyapunov_equation_without_weights():
    A = np.array([[-0.3, 1.0], [-0.5, 0.2]])
    P0 = np.array([[2.0, 0.3], [0.3, 1.0]])
    ltv = plain_ltv(A, np.zeros((1, 2)))
    zero = Schedule(np.zeros((1, 1)))
    cfg = ObserverConfig(P0, zero, Schedule(np.zeros((2, 2))), np.zeros(2))
    t = np.linspace(0.0, 2.0, 401)
    run = run_observer(ltv, cfg, t, np.zeros((t.size, 0)), np.zeros((t.size, 1)))
    E = expm(A * 2.0)
    assert_close(run.P(-1), E @ P0 @ E.T, 1e-10)


def test_P_loss_of_definiteness():
    ltv = plain_ltv(np.zeros((2, 2)), np.zeros((1, 2)))
    cfg = ObserverConfig(np.eye(2), Schedule(np.zeros((1, 1))), Schedule(-10 * np.eye(2)), np.zeros(2))
    t = np.linspace(0.0, 1.0, 101)
    with pytest.raises(ObserverDivergence, match="positive definiteness"):
        run_observer(ltv, cfg, t, np.zeros((t.size, 0)), np.zeros((t.size, 1)))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_state():
    ltv = plain_ltv(1e3 * np.eye(1), np.zeros((1, 1)))
    cfg = ObserverConfig(np.eye(1), Schedule(np.eye(1)), Schedule(np.eye(1)), np.ones(1))
    t = np.linspace(0.0, 10.0, 101)
    with pytest.raises(ObserverDivergence):
        run_observer(ltv, cfg, t, np.zeros((t.size, 0)), np.zeros((t.size, 1)))


def test_run_observer_rejects_bad_grid(ltv2):
    cfg = ObserverConfig.create(ltv2)
    t = np.array([0.0, 0.1, 0.3])
    with pytest.raises(ValueError, match="uniform"):
        run_observer(ltv2, cfg, t, np.zeros((3, 1)), np.zeros((3, 1)))


def observer_final(ex2, ltv2, h, T=2.0, interp="cubic"):
    truth = simulate_truth(ex2, EX2_INPUT, [0.0, 1.0], T, h)
    cfg = ObserverConfig.create(ltv2, z0=ltv2.embed([1.0, -1.0]))
    return run_observer(ltv2, cfg, truth.t, truth.u, truth.y, interp=interp).zhat[-1]


def observed_order(ex2, ltv2, interp):
    # steps above ~0.05 are pre-asymptotic: the initial gain transient is fast
    ref = observer_final(ex2, ltv2, 0.025 / 64, interp=interp)
    e1 = np.abs(observer_final(ex2, ltv2, 0.025, interp=interp) - ref).max()
    e2 = np.abs(observer_final(ex2, ltv2, 0.0125, interp=interp) - ref).max()
    return np.log2(e1 / e2)


def test_observer_convergence_order(ex2, ltv2):
    assert observed_order(ex2, ltv2, "cubic") >= 3.5


def test_linear_midpoints_are_second_order(ex2, ltv2):
    assert 1.5 <= observed_order(ex2, ltv2, "linear") < 2.5


# ---- configuration -----------------------------------------------------------

def test_schedule_constant_and_table():
    s = Schedule.coerce(2.0, 3)
    np.testing.assert_array_equal(s(5.0), 2 * np.eye(3))
    s = Schedule.coerce([{"t": 0.0, "value": 1.0}, {"t": 2.0, "value": 3.0}], 2)
    np.testing.assert_allclose(s(1.0), 2 * np.eye(2))
    np.testing.assert_allclose(s(-1.0), np.eye(2))
    np.testing.assert_allclose(s(9.0), 3 * np.eye(2))
    assert s.min_eigenvalue() == pytest.approx(1.0)


def test_schedule_rejects():
    with pytest.raises(ValueError):
        Schedule([np.eye(2), np.eye(2)], times=[1.0, 1.0])
    with pytest.raises(ValueError):
        Schedule.coerce(np.eye(3), 2)


def test_config_checks(ltv2):
    with pytest.raises(ValueError, match="P0"):
        ObserverConfig.create(ltv2, P0=-1.0)
    with pytest.raises(ValueError, match="V"):
        ObserverConfig.create(ltv2, V=np.diag([1.0, 1, 1, 0]))
    with pytest.raises(ValueError, match="Q"):
        ObserverConfig.create(ltv2, Q=[{"t": 0, "value": 1.0}, {"t": 1, "value": -1.0}])
    with pytest.raises(ValueError, match="z0"):
        ObserverConfig.create(ltv2, z0=np.zeros(3))


def test_load_observer_config(ltv2):
    cfg = load_observer_config({"P0": 2.0, "embed_x0": [1.0, 0.0]}, ltv2)
    np.testing.assert_allclose(cfg.z0, [0.0, 0.5, 1.0, 0.0], atol=1e-15)
    np.testing.assert_array_equal(cfg.P0, 2 * np.eye(4))
    cfg = load_observer_config('{"z0": [1, 2, 3, 4]}', ltv2)
    np.testing.assert_array_equal(cfg.z0, [1, 2, 3, 4])
    with pytest.raises(ValueError):
        load_observer_config({"z0": [0, 0, 0, 0], "embed_x0": [0, 0]}, ltv2)


def test_gramian_detects_poor_excitation(ex3):
    ltv = build_ltv(ex3, immerse(ex3))
    t = np.arange(0, 2001) * 5e-3
    rich = InputSignal("sinusoid", amplitude=[-1.0, 1.0, 0.5], omega=[1.0, 1.0, 0.5], phase=[0, np.pi / 2, 0])
    W = observability_gramian(ltv, t, rich(t))
    assert np.linalg.eigvalsh(W)[0] > 1e-6
    W0 = observability_gramian(ltv, t, np.zeros((t.size, 3)))
    ev = np.linalg.eigvalsh(W0)
    assert ev[0] < 1e-12 * ev[-1]
