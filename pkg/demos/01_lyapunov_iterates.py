"""
Auxiliary states from Lyapunov iterates
=======================================

A single quadratic output y = 0.5 x'Cx. Differentiating it along
xdot = Ax + Bu gives 0.5 x'(CA + A'C)x plus a term linear in x, so the
next auxiliary state is the same kind of quadratic form with C replaced
by L_A(C) = CA + A'C. The chain closes as soon as an iterate falls in the
span of the earlier ones.
"""
import numpy as np

from quadimmerse import (
    InputSignal,
    LqoSystem,
    build_ltv,
    data_path,
    load_system,
    lyap_op,
    simulate_extended,
    simulate_truth,
    single_output_immersion,
)

np.set_printoptions(precision=4, suppress=True)

# two decoupled double integrators, y = half the squared norm of the state
sys = load_system(data_path("example1.json"))
imm = single_output_immersion(sys)
print("double integrator: m =", imm.m)
for k, Lk in enumerate(imm.basis):
    print(f"L^{k}(C) =\n{Lk.full()}")
# the next iterate vanishes, so alpha is zero
print("L^3(C) =\n", lyap_op(sys.A, imm.basis[-1]).full())

# an unstable plant where the chain closes with nonzero coefficients
sys = load_system(data_path("example2.json"))
imm = single_output_immersion(sys)
print("\nsecond plant: m =", imm.m, " alpha =", imm.alpha)

ltv = build_ltv(sys, imm)
print("calA(u) for u = 1:\n", ltv.calA([1.0]))
print("calC:", ltv.calC)

# The extended system is linear in z for a fixed input. Integrating it from
# the embedded initial state reproduces the embedded plant trajectory.
# This input keeps x = (sin t, cos t) bounded, but the plant has an
# eigenvalue 1 + sqrt(2) and calA one of twice that, so rounding errors
# grow like exp(4.8 t); keep the horizon short.
sig = InputSignal("sinusoid", amplitude=[2 * np.sqrt(2)], omega=[1.0], phase=[3 * np.pi / 4])
x0 = np.array([0.0, 1.0])
truth = simulate_truth(sys, sig, x0, 2.0, 1e-3)
Z = simulate_extended(ltv, sig, ltv.embed(x0), 2.0, 1e-3)
dev = max(np.abs(z - ltv.embed(x)).max() for z, x in zip(Z, truth.x))
print(f"\nmax |z(t) - embed(x(t))| over 2 s: {dev:.2e}")
print(f"max |calC z - y|:               {np.abs(Z @ ltv.calC.T - truth.y).max():.2e}")

# a random plant for comparison: the chain length depends on A and C only
rng = np.random.default_rng(1)
A = rng.standard_normal((3, 3))
C = rng.standard_normal((3, 3))
imm = single_output_immersion(LqoSystem(A, np.zeros((3, 1)), (C + C.T,), np.zeros(3)))
print(f"\nrandom 3-state plant: m = {imm.m} (at most 6), residual {imm.residual:.1e}")
