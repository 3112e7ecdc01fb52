"""Tour of the code constructions: check matrices, syndromes, logical classes.

Builds each supported family at its smallest size, prints the parity
check matrices, then walks one random error through syndrome extraction
and logical classification.
"""

from __future__ import annotations

import numpy as np

from qecdec.codes import build_code, depolarizing_problem, logical_class, sector_problem
from qecdec.noise import NoiseSpec, error_stream, sample_error

# ---- the three families at a glance ----

for name, L in (("repetition", 3), ("toric", 2), ("rotated_surface", 3)):
    code = build_code(name, L)
    print(f"{name} L={L}: n={code.n} k={code.k}")
    print(f"  Hz checks: {code.hz.shape[0]}, Hx checks: {code.hx.shape[0]}")
    if code.hx.shape[0]:
        commute = (code.hx.astype(int) @ code.hz.T.astype(int)) % 2
        print(f"  Hx Hz^T == 0: {not commute.any()}")
    print(f"  logical Z weight: {int(code.lz.sum(axis=1).min())}")
print()

# ---- the repetition code spelled out ----

code = build_code("repetition", 3)
print("repetition L=3 Hz rows (each compares neighboring bits):")
print(code.hz)
print("logical Z operator:", code.lz[0])
print()

# ---- one decoding instance, step by step ----

problem = sector_problem(build_code("toric", 2), "x")
print(f"toric L=2, X-error sector: n_err={problem.n_err}, checks={problem.m}")
spec = NoiseSpec(model="independent", p=0.15)
rng = error_stream(seed=1, index=0)
e = sample_error(problem, spec, rng)
s = (problem.h_eff.astype(int) @ e) % 2
print("sampled error   :", e)
print("syndrome        :", s.astype(np.uint8))
print("logical class   :", logical_class(problem, e))
print()

# ---- depolarizing noise couples the two sectors ----

sym = depolarizing_problem(build_code("toric", 2))
print(f"symplectic problem: n_err={sym.n_err} (= 2n), classes={sym.n_classes} (= 4^k)")
rng = error_stream(seed=1, index=0)
e = sample_error(sym, NoiseSpec(model="depolarizing", p=0.2), rng)
n = sym.n_err // 2
print("X part:", e[:n])
print("Z part:", e[n:])
print("Y errors flip both parts on the same qubit.")
