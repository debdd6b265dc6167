"""
Stage construction on random plants
===================================

For several outputs the auxiliary states are built stage by stage: the
rows of Lbar_k Abar that enlarge the accumulated row space become the
next stage, the rest are expressed through earlier stages. The total count
equals the rank of all Lyapunov iterates of all output weights, which is
checked here by brute force.
"""
import numpy as np

from quadimmerse import algorithm1, build_ltv, krylov_rank, simulate_extended, simulate_truth
from quadimmerse.selftest import random_input, random_system

rng = np.random.default_rng(7)
print(" n  q  p   dims                 aux  oracle   max|z - embed(x)|")
for trial in range(12):
    plant = random_system(rng, structured=trial % 3 == 0)
    imm = algorithm1(plant)
    ltv = build_ltv(plant, imm)
    sig = random_input(rng, plant.p)
    x0 = rng.standard_normal(plant.n)
    truth = simulate_truth(plant, sig, x0, 3.0, 1e-3)
    Z = simulate_extended(ltv, sig, ltv.embed(x0), 3.0, 1e-3)
    dev = max(np.abs(z - ltv.embed(x)).max() for z, x in zip(Z, truth.x))
    print(f"{plant.n:2d} {plant.q:2d} {plant.p:2d}   {str(imm.dims):20s} {imm.n_aux:4d} {krylov_rank(plant):6d}   {dev:.1e}")

# a case where two rows of Lbar_0 Abar are both new but add one dimension
# together; the second is written through the first
from quadimmerse import LqoSystem  # noqa: E402

A = np.array([[0.0, 1.0], [0.0, 0.0]])
plant = LqoSystem(A, np.zeros((2, 0)), (np.diag([1.0, 0.0]), np.diag([0.5, 1.0])), np.zeros((2, 2)))
imm = algorithm1(plant)
print("\ndims", imm.dims, " coefficient on the new stage:", imm.Ms[(0, 1)].ravel())
