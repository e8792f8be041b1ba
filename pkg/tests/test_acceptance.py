"""Acceptance gate: eleven end-to-end criteria, one verdict line each.

Every test measures its own wall-clock time and checks the stated budget.
Timing columns of the solver are recorded but never compared with anything.
"""
import time

import numpy as np
import pytest

from oracles import condensed_step, dense_asm_apply, monolithic_step, random_state

from hdgkit.hdglocal import (StateFields, assemble_element_operators, element_node_coords,
                             face_node_coords, interpolate_state, make_space)
from hdgkit.krylov import GmresConfig, gmres, gmres_solve
from hdgkit.meshgrid import build_structured_quad
from hdgkit.newtonstep import NewtonConfig, newton_solve, time_march
from hdgkit.pdemodels import burgers_dirichlet, burgers_model, sinsin_poisson
from hdgkit.precondkit import (Preconditioner, build_asm, build_bj, build_poly, compute_harmonic_ritz,
                               leja_order)
from hdgkit.studyrun import CaseSpec, convergence_study, l2_error, run_case
from hdgkit.traceassembly import assemble_global, block_matvec, dump_matrix, load_matrix, to_dense


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def relerr(a, b):
    return np.linalg.norm(np.ravel(a) - np.ravel(b)) / max(np.linalg.norm(np.ravel(b)), 1e-300)


def linearized(n, k, model, seed=0):
    sp = make_space(build_structured_quad(n), k)
    center = burgers_dirichlet if model.name == "burgers2d" else None
    ops = assemble_element_operators(model, random_state(sp, seed, center=center), sp)
    K, r = assemble_global(ops, sp.mesh)
    return sp, ops, K, r


# ---------------------------------------------------------------- 1

def test_01_condensed_matches_monolithic(verdict):
    worst = 0.0
    with Timer() as t:
        for n in (2, 3):
            for k in (1, 2):
                for model in (sinsin_poisson(), burgers_model()):
                    sp = make_space(build_structured_quad(n), k)
                    if model.name == "burgers2d":
                        state = interpolate_state(sp, burgers_dirichlet)  # first Newton step
                    else:
                        state = StateFields(np.zeros((sp.ne, sp.pe)), np.zeros((sp.nf, sp.pf)))
                    du_m, duh_m = monolithic_step(model, sp, state)
                    du_c, duh_c = condensed_step(model, sp, state)
                    worst = max(worst, relerr(du_c, du_m), relerr(duh_c, duh_m))
    ok = worst <= 1e-10 and t.seconds < 5
    verdict(1, f"condensed vs monolithic, max rel. diff {worst:.1e} (tol 1e-10)", ok, t.seconds)
    assert ok


# ---------------------------------------------------------------- 2

def test_02_matvec_matches_dense(verdict):
    worst, meshes = 0.0, 0
    rng = np.random.default_rng(2)
    with Timer() as t:
        for n in (1, 2, 3, 4, 8, 16):
            for k in (1, 2, 3):
                for model in (sinsin_poisson(), burgers_model()):
                    sp = make_space(build_structured_quad(n), k)
                    if sp.nf * sp.pf > 2000:
                        continue
                    _, _, K, _ = linearized(n, k, model, seed=n + k)
                    A = to_dense(K)
                    X = rng.standard_normal((100, K.n_dof))
                    for x in X:
                        worst = max(worst, relerr(block_matvec(K, x), A @ x))
                    meshes += 1
    ok = worst <= 1e-13 and t.seconds < 5
    verdict(2, f"block matvec vs dense on {meshes} operators x 100 vectors, max rel. diff {worst:.1e}",
            ok, t.seconds)
    assert ok


# ---------------------------------------------------------------- 3

def test_03_preconditioner_oracles(verdict):
    with Timer() as t:
        sp, ops, K, _ = linearized(3, 2, burgers_model())
        bj = build_bj(K)
        eye = np.eye(K.bs)
        bj_err = max(np.abs(bj.bj_inv[f] @ K.self_blocks()[f] - eye).max() for f in range(K.nf))
        asm = build_asm(ops, sp.mesh)
        A = to_dense(K)
        asm_err = 0.0
        for y in np.random.default_rng(3).standard_normal((20, K.n_dof)):
            ref = dense_asm_apply(A, sp.mesh, K.bs, y)
            asm_err = max(asm_err, np.abs(asm.apply(y) - ref).max() / max(1.0, np.abs(ref).max()))
    ok = bj_err <= 1e-12 and asm_err <= 1e-12 and t.seconds < 5
    verdict(3, f"BJ |P^-1 K_ff - I| = {bj_err:.1e}, ASM vs dense oracle {asm_err:.1e} (tol 1e-12)",
            ok, t.seconds)
    assert ok


# ---------------------------------------------------------------- 4

class _Dense:
    def __init__(self, A):
        self.A, self.n_dof = A, A.shape[0]

    def matvec(self, v):
        return self.A @ v


def test_04_polynomial_exactness(verdict):
    worst, iters = 0.0, []
    with Timer() as t:
        for n, seed in ((5, 0), (12, 1), (20, 2)):
            rng = np.random.default_rng(seed)
            V = rng.standard_normal((n, n)) + 3 * np.eye(n)
            A = V @ np.diag(np.sort(rng.uniform(1, 5, n))) @ np.linalg.inv(V)
            p = build_poly(_Dense(A), n, seed=seed)
            y = rng.standard_normal(n)
            worst = max(worst, relerr(p.apply(y), np.linalg.solve(A, y)))
            iters.append(gmres(lambda v: A @ v, y, cfg=GmresConfig(tol=1e-6), precond=p.apply)[1].iters)
        leja_ok = (np.array_equal(leja_order([1]), [1])
                   and np.array_equal(leja_order([1, 10, 5]), [10, 1, 5])
                   and np.array_equal(leja_order([2 + 1j, 2 - 1j, 7]), [7, 2 + 1j, 2 - 1j]))
    ok = worst <= 1e-8 and iters == [1, 1, 1] and leja_ok and t.seconds < 2
    verdict(4, f"poly inverse rel. err {worst:.1e}, GMRES iterations {iters}, Leja cases {leja_ok}",
            ok, t.seconds)
    assert ok


# ---------------------------------------------------------------- 5

def test_05_harmonic_ritz(verdict):
    with Timer() as t:
        worst = 0.0
        for P in (1, 4, 10, 20, 40):
            d = np.arange(1.0, P + 1)
            theta = compute_harmonic_ritz(lambda v: d * v, P, P, seed=P)
            worst = max(worst, np.abs(np.sort(theta.real) - d).max(), np.abs(theta.imag).max())
        R = np.array([[1.0, -2.0], [2.0, 1.0]])
        pair = compute_harmonic_ritz(lambda v: R @ v, 2, 2)
        pair_err = np.abs(pair - np.array([1 + 2j, 1 - 2j])).max()
    ok = worst <= 1e-10 and pair_err <= 1e-10 and t.seconds < 1
    verdict(5, f"diag(1..P) Ritz err {worst:.1e}, rotation pair err {pair_err:.1e}", ok, t.seconds)
    assert ok


# ---------------------------------------------------------------- 6

def test_06_gmres_contract(verdict):
    with Timer() as t:
        exact_ok = True
        for n, seed in ((3, 0), (17, 1), (40, 2)):
            rng = np.random.default_rng(seed)
            A = rng.standard_normal((n, n)) + np.sqrt(n) * np.eye(n)
            b = rng.standard_normal(n)
            x, st_ = gmres(lambda v: A @ v, b, cfg=GmresConfig(restart=50, tol=1e-12))
            exact_ok &= st_.iters <= n and relerr(A @ x, b) <= 1e-10
        mono, orth, conv = True, 0.0, True
        for model in (sinsin_poisson(), burgers_model()):
            _, _, K, r = linearized(6, 2, model)
            cfg = GmresConfig(restart=30, tol=1e-10, orth="mgs", check_orthogonality=True)
            _, st_ = gmres_solve(K, build_bj(K), r, cfg=cfg)
            mono &= all(b <= a * (1 + 1e-12) for h in st_.cycle_histories for a, b in zip(h, h[1:]))
            conv &= st_.converged
            orth = max(orth, st_.orth_loss)
    ok = exact_ok and mono and conv and orth <= 1e-10 and t.seconds < 5
    verdict(6, f"exact in <= n: {exact_ok}, monotone cycles: {mono}, |V^T V - I| = {orth:.1e} (Poisson, Burgers)",
            ok, t.seconds)
    assert ok


# ---------------------------------------------------------------- 7

def test_07_hdg_accuracy(verdict):
    with Timer() as t:
        rows = convergence_study(sinsin_poisson(), ks=(1, 2, 3), ns=(16, 32))
    orders = {r.k: r.order for r in rows if r.n == 32}
    ok = all(orders[k] >= k + 0.5 for k in (1, 2, 3)) and t.seconds < 60
    text = ", ".join(f"k={k}: {o:.2f}" for k, o in orders.items())
    verdict(7, f"Poisson L2 orders 16->32 {text} (need >= k+0.5)", ok, t.seconds)
    assert ok


# ---------------------------------------------------------------- 8 / 9

VARIANTS = (("bj", 0), ("asm", 0), ("bj", 10), ("asm", 10))


@pytest.fixture(scope="module")
def burgers_table():
    """All 24 Burgers runs with default tolerances, computed once."""
    out = {}
    t0 = time.perf_counter()
    for k in (1, 2, 3):
        for n in (16, 32):
            for pc, p in VARIANTS:
                spec = CaseSpec(case="burgers2d", k=k, n=n, precond=pc, poly_degree=p)
                state, rep, space, _ = run_case(spec)
                out[(k, n, spec.label)] = (state, rep, space)
    return out, time.perf_counter() - t0


def test_08_burgers_iteration_table(verdict, burgers_table):
    table, seconds = burgers_table
    g = {key: rep.n_gmres_total for key, (_, rep, _) in table.items()}
    failures = []
    for k in (1, 2, 3):
        for n in (16, 32):
            bj, asm, bjpp, asmpp = (g[(k, n, lab)] for lab in ("BJ", "ASM", "BJ-PP(10)", "ASM-PP(10)"))
            if not all(table[(k, n, lab)][1].converged for lab in ("BJ", "ASM", "BJ-PP(10)", "ASM-PP(10)")):
                failures.append(f"k={k} n={n} not converged")
            if not asm < bj:
                failures.append(f"k={k} n={n}: ASM {asm} !< BJ {bj}")
            if not asmpp < asm:
                failures.append(f"k={k} n={n}: ASM-PP {asmpp} !< ASM {asm}")
            if not bjpp < bj:
                failures.append(f"k={k} n={n}: BJ-PP {bjpp} !< BJ {bj}")
    bj1, asmpp1 = g[(1, 16, "BJ")], g[(1, 16, "ASM-PP(10)")]
    if not 80 <= bj1 <= 800:
        failures.append(f"BJ k=1 n=16 = {bj1} outside [80, 800]")
    if not 10 <= asmpp1 <= 120:
        failures.append(f"ASM-PP(10) k=1 n=16 = {asmpp1} outside [10, 120]")
    if seconds >= 120:
        failures.append(f"runtime {seconds:.0f} s")
    for k in (1, 2, 3):
        for n in (16, 32):
            print(f"  k={k} 1/h={n:>2}: " + "  ".join(
                f"{lab}={g[(k, n, lab)]}" for lab in ("BJ", "ASM", "BJ-PP(10)", "ASM-PP(10)")))
    ok = not failures
    verdict(8, f"Burgers GMRES totals (k=1,n=16: BJ {bj1}, ASM-PP(10) {asmpp1}); orderings "
               + ("hold" if ok else "; ".join(failures)), ok, seconds)
    assert ok, failures


def _mirror_error(space, state):
    """max |u(x,y) + u(1-x,y)| over element and trace nodes."""
    def key(p):
        return (round(float(p[0]), 9), round(float(p[1]), 9))

    worst = 0.0
    for coords, values, owners in (
        (element_node_coords(space), state.u, element_node_coords(space).mean(axis=1)),
        (face_node_coords(space), state.uhat, face_node_coords(space).mean(axis=1)),
    ):
        lookup = {}
        for o, pts, vals in zip(owners, coords, values):
            for p, v in zip(pts, vals):
                lookup[(key(o), key(p))] = v
        for (o, p), v in lookup.items():
            w = lookup[((round(1 - o[0], 9), o[1]), (round(1 - p[0], 9), p[1]))]
            worst = max(worst, abs(v + w))
    return worst


def test_09_solution_invariance(verdict, burgers_table):
    table, _ = burgers_table
    with Timer() as t:
        spread, mirror = 0.0, 0.0
        for k in (1, 2, 3):
            for n in (16, 32):
                traces = [table[(k, n, lab)][0].uhat for lab in ("BJ", "ASM", "BJ-PP(10)", "ASM-PP(10)")]
                spread = max(spread, max(np.abs(tr - traces[0]).max() for tr in traces[1:]))
                state, _, space = table[(k, n, "ASM-PP(10)")]
                mirror = max(mirror, _mirror_error(space, state))
    ok = spread <= 1e-6 and mirror <= 1e-6 and t.seconds < 60
    verdict(9, f"trace spread across preconditioners {spread:.1e}, antisymmetry defect {mirror:.1e}",
            ok, t.seconds)
    assert ok


# ---------------------------------------------------------------- 10

def test_10_transient_sanity(verdict):
    with Timer() as t:
        sp = make_space(build_structured_quad(16), 3)
        model = sinsin_poisson(time_dependent=True)
        s0 = interpolate_state(sp, model.exact_solution)
        _, _, hist = time_march(model, sp, s0, 1e-3, 20, precond="asm", keep_history=True)
        zero = lambda x: np.zeros(x.shape[:-1])  # noqa: E731
        energy = np.array([l2_error(sp, s.u, zero) for s in hist])
        monotone = bool(np.all(np.diff(energy) < 0))
        trend = energy[0] * np.exp(-2 * np.pi ** 2 * 1e-3 * np.arange(21))
        dev = float(np.abs(energy - trend).max() / trend.min())

        sp8 = make_space(build_structured_quad(8), 1)
        steady, rep = newton_solve(burgers_model(), sp8, interpolate_state(sp8, burgers_dirichlet),
                                   precond="asm")
        _, reps, hist = time_march(burgers_model(time_dependent=True), sp8, steady, 0.1, 3,
                                   precond="asm", keep_history=True)
        drift = max(np.abs(b.u - a.u).max() for a, b in zip(hist, hist[1:]))
        fixed = rep.converged and all(r.converged and r.n_newton <= 2 for r in reps) and drift <= 1e-8
    ok = monotone and dev <= 0.1 and fixed and t.seconds < 30
    verdict(10, f"heat decay monotone {monotone}, max deviation from e^(-2 pi^2 t) {dev:.1%}; "
                f"steady fixed point drift {drift:.1e}", ok, t.seconds)
    assert ok


# ---------------------------------------------------------------- 11

def test_11_determinism_and_io(tmp_path, verdict):
    with Timer() as t:
        spec = CaseSpec(case="burgers2d", k=1, n=8, precond="asm", poly_degree=10, seed=4)
        a, b = run_case(spec)[1], run_case(spec)[1]
        counts_ok = (a.n_newton, a.n_gmres_total, a.gmres_iters) == (b.n_newton, b.n_gmres_total, b.gmres_iters)

        sp = make_space(build_structured_quad(4), 2)
        paths = [tmp_path / f"K{i}.hdgk" for i in range(3)]
        for p in paths[:2]:
            ops = assemble_element_operators(burgers_model(), interpolate_state(sp, burgers_dirichlet), sp)
            dump_matrix(p, *assemble_global(ops, sp.mesh))
        K, r = load_matrix(paths[0])
        dump_matrix(paths[2], K, r)
        blobs = [p.read_bytes() for p in paths]
        dump_ok = blobs[0] == blobs[1] == blobs[2]
    ok = counts_ok and dump_ok and t.seconds < 10
    verdict(11, f"repeat run n_newton={a.n_newton} n_gmres={a.n_gmres_total} identical: {counts_ok}; "
                f"dump bit-identical and round-trips: {dump_ok}", ok, t.seconds)
    assert ok
