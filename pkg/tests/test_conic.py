import numpy as np
import pytest

from sparsegain.analysis import h2_norm
from sparsegain.conic.program import (
    ProgramBuilder,
    ConicProgram,
    svec_index,
    svec_len,
    svec_pack,
    svec_unpack,
)
from sparsegain.conic.solver import SplittingSolver, solve


def lp_min_x_geq_1():
    b = ProgramBuilder()
    x = b.free_mat("x", (1, 1))
    s = b.nonneg_vec("s", 1)
    b.add_eq(x[0, 0] - s[0] - 1.0, "bound")
    b.add_obj(x[0, 0])
    return b.build()


class TestSvec:
    def test_roundtrip(self):
        rng = np.random.default_rng(0)
        for d in (1, 2, 5, 9):
            s = rng.normal(size=(d, d))
            s = 0.5 * (s + s.T)
            assert np.allclose(svec_unpack(svec_pack(s), d), s)

    def test_inner_product_matches_trace(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(6, 6))
        a = a + a.T
        b = rng.normal(size=(6, 6))
        b = b + b.T
        assert np.isclose(svec_pack(a) @ svec_pack(b), np.trace(a @ b))

    def test_index_layout(self):
        d = 4
        seen = set()
        for j in range(d):
            for i in range(j, d):
                seen.add(svec_index(d, i, j))
        assert seen == set(range(svec_len(d)))
        assert svec_index(d, 1, 2) == svec_index(d, 2, 1)


class TestSolveBasics:
    def test_min_x_subject_x_geq_1(self):
        sol = solve(lp_min_x_geq_1())
        assert sol.status == "optimal"
        assert abs(sol.objective - 1.0) <= 1e-6

    def test_diag_psd_completion(self):
        b = ProgramBuilder()
        x = b.psd_mat("X", 2)
        b.add_eq(x[0, 0] - 1.0, "pin")
        b.add_eq(x[1, 1] - 2.0, "pin")
        b.add_obj(x[0, 0] + x[1, 1])
        sol = solve(b.build())
        assert sol.status == "optimal"
        assert abs(sol.objective - 3.0) <= 1e-5
        assert abs(sol.value("X")[0, 1]) <= 1e-5

    def test_min_gamma_2x2(self):
        b = ProgramBuilder()
        g = b.nonneg_scalar("g")
        p = b.psd_mat("P", 2)
        b.add_eq(p[0, 0] - g, "pin")
        b.add_eq(p[1, 1] - g, "pin")
        b.add_eq(p[1, 0] - 1.0, "pin")
        b.add_obj(g)
        sol = solve(b.build())
        assert sol.status == "optimal"
        assert abs(sol.value("g") - 1.0) <= 1e-5

    def test_scalar_h2_lmi_vs_lyapunov(self):
        # min gamma s.t. Tr(CXC') <= gamma, AX + XA' + BB' < 0 for the
        # scalar stable system, certified level matching the Gramian trace
        from sparsegain.lmi import robust_h2_program

        a, bb, c = np.array([[-2.0]]), np.array([[1.5]]), np.array([[2.0]])
        prog = robust_h2_program(a, bb, c, np.zeros((1, 1)), np.zeros((1, 1)),
                                 0.0)
        sol = solve(prog)
        assert sol.status == "optimal"
        oracle = h2_norm(a, bb, c) ** 2
        assert abs(sol.value("level") - oracle) <= 0.02 * oracle

    def test_infeasible_certificate(self):
        b = ProgramBuilder()
        s = b.nonneg_vec("s", 1)
        b.add_eq(s[0] + 1.0, "bad")
        b.add_obj(s[0])
        sol = solve(b.build())
        assert sol.status == "infeasible"
        assert sol.certificate["residual"] <= 1e-7

    def test_unbounded(self):
        b = ProgramBuilder()
        x = b.free_mat("x", (1, 1))
        s = b.nonneg_vec("s", 1)
        b.add_eq(x[0, 0] - s[0], "link")
        b.add_obj(x[0, 0], weight=-1.0)
        sol = solve(b.build())
        assert sol.status == "unbounded"

    def test_max_iters_status(self):
        prog = lp_min_x_geq_1()
        sol = SplittingSolver(prog, max_iters=1,
                              check_interval=1).solve(warm=False)
        assert sol.status == "max-iters"
        assert np.isfinite(sol.primal_residual)


def random_sdp(rng, order=4, pins=3):
    b = ProgramBuilder()
    x = b.psd_mat("X", order)
    positions = [(i, j) for j in range(order) for i in range(j, order)]
    chosen = rng.choice(len(positions), size=pins, replace=False)
    for idx in chosen:
        i, j = positions[idx]
        value = rng.uniform(0.5, 2.0) * (1.0 if i == j else 0.3)
        b.add_eq(x[i, j] - value, "pin")
    cost = rng.uniform(0.5, 1.5, size=order)
    tot = None
    for i in range(order):
        term = x[i, i] * cost[i]
        tot = term if tot is None else tot + term
    b.add_obj(tot)
    return b.build()


class TestSolverProperties:
    def test_weak_duality_and_feasibility(self):
        rng = np.random.default_rng(5)
        for trial in range(10):
            prog = random_sdp(rng)
            sol = solve(prog)
            if sol.status != "optimal":
                continue
            assert sol.objective >= sol.dual_objective - 1e-6 * (1 + abs(sol.objective))
            x_mat = sol.value("X")
            assert np.linalg.eigvalsh(x_mat)[0] >= -1e-7
            assert np.linalg.norm(prog.a_mat @ sol.x - prog.b) <= 1e-6

    def test_determinism_bit_identical(self):
        prog = random_sdp(np.random.default_rng(9))
        s1 = solve(prog)
        s2 = solve(prog)
        assert s1.status == s2.status
        assert s1.objective == s2.objective
        assert np.array_equal(s1.x, s2.x)

    def test_warm_start_after_objective_swap(self):
        rng = np.random.default_rng(3)
        prog = random_sdp(rng)
        solver = SplittingSolver(prog)
        first = solver.solve(warm=False)
        c2 = prog.c.copy()
        c2[c2 != 0] *= 1.2
        solver.set_objective(c2)
        second = solver.solve(warm=True)
        assert second.status == "optimal"
        # warm start should not need more work than the cold first solve
        assert second.iterations <= first.iterations

    def test_resubstitution_margin(self):
        # solution remains feasible in the original inequality form
        from sparsegain.lmi import robust_h2_program

        rng = np.random.default_rng(17)
        a = rng.normal(size=(3, 3))
        a = a - (np.max(np.linalg.eigvals(a).real) + 1.0) * np.eye(3)
        bb = rng.normal(size=(3, 2))
        c = rng.normal(size=(2, 3))
        prog = robust_h2_program(a, bb, c, np.zeros((3, 1)), np.zeros((1, 3)), 0.0)
        sol = solve(prog)
        assert sol.status == "optimal"
        x = sol.value("lyap")
        gamma = sol.value("level")
        lyap_expr = a @ x + x @ a.T + bb @ bb.T
        assert np.linalg.eigvalsh(lyap_expr)[-1] <= 1e-7
        assert np.trace(c @ x @ c.T) <= gamma + 1e-7


class TestDumpJson:
    def test_roundtrip(self, tmp_path):
        prog = lp_min_x_geq_1()
        path = tmp_path / "prog.json"
        prog.dump_json(path)
        loaded = ConicProgram.load_json(path)
        assert np.array_equal(loaded.c, prog.c)
        assert np.array_equal(loaded.b, prog.b)
        assert (loaded.a_mat != prog.a_mat).nnz == 0
        assert loaded.row_families == prog.row_families
        sol = solve(loaded)
        assert abs(sol.objective - 1.0) <= 1e-6
