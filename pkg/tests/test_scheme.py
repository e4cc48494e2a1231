import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import cartelstore as cs
from cartelstore import scheme as sch
from oracles import bisect_chi_root, naive_residual, par_dict

P = cs.baseline_params()


def random_state(seed, n=5, m=5, params=P):
    rng = np.random.default_rng(seed)
    grid = cs.make_grid(params, n, m)
    U = 200.0 * rng.standard_normal(grid.shape)
    Pf = 62.5 + 150.0 * rng.standard_normal(grid.shape)
    return grid, U, Pf


class TestInteriorResidual:
    def test_flat_fields_price_residual(self):
        # constant U=0, P=mu/lambda: flux differences and drift terms vanish
        grid = cs.make_grid(P, 10, 10)
        U = np.zeros(grid.shape)
        Pf = np.full(grid.shape, 62.5)
        for (i, j) in ((1, 5), (5, 0), (5, 10), (9, 3)):
            _, rP = cs.residual_interior(U, Pf, i, j, grid, P)
            assert rP == pytest.approx(-6.25, abs=1e-12)

    def test_out_of_range_rejected(self):
        grid, U, Pf = random_state(0)
        with pytest.raises(IndexError):
            cs.residual_interior(U, Pf, 0, 2, grid, P)
        with pytest.raises(IndexError):
            cs.residual_interior(U, Pf, grid.N, 2, grid, P)

    def test_monotone_in_neighbors(self):
        grid, U, Pf = random_state(7, 8, 8)
        res0, _ = cs.assemble_residual(U, Pf, grid, P)
        rng = np.random.default_rng(8)
        for _ in range(30):
            i = int(rng.integers(1, grid.N))
            j = int(rng.integers(0, grid.M + 1))
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ii, jj = i + di, j + dj
                if not (0 <= jj <= grid.M):
                    continue
                U2 = U.copy()
                U2[ii, jj] += 1e-3
                r2, _ = cs.assemble_residual(U2, Pf, grid, P)
                assert r2.R_U[i, j] >= res0.R_U[i, j] - 1e-12
                P2 = Pf.copy()
                P2[ii, jj] += 1e-3
                r3, _ = cs.assemble_residual(U, P2, grid, P)
                assert r3.R_P[i, j] >= res0.R_P[i, j] - 1e-12

    def test_matches_independent_transcription(self):
        for seed in (11, 12, 13):
            grid, U, Pf = random_state(seed)
            res, diag = cs.assemble_residual(U, Pf, grid, P)
            RU, RP, (br0, brN) = naive_residual(
                U, Pf, par_dict(P), grid.N, grid.M, grid.dk, grid.dz)
            np.testing.assert_allclose(res.R_U, RU, rtol=1e-10, atol=1e-9)
            np.testing.assert_allclose(res.R_P, RP, rtol=1e-10, atol=1e-9)
            got0 = ["B" if b else "A" for b in diag.price_controlled_kmin]
            gotN = ["B" if b else "A" for b in diag.price_controlled_kmax]
            assert got0 == br0 and gotN == brN

    def test_transcription_with_storage_cost(self):
        ap = cs.appendix_params()
        grid, U, Pf = random_state(21, 6, 7, ap)
        res, _ = cs.assemble_residual(U, Pf, grid, ap)
        RU, RP, _ = naive_residual(U, Pf, par_dict(ap), grid.N, grid.M,
                                   grid.dk, grid.dz)
        np.testing.assert_allclose(res.R_U, RU, rtol=1e-10, atol=1e-9)
        np.testing.assert_allclose(res.R_P, RP, rtol=1e-10, atol=1e-9)


class TestAssemble:
    def test_pointwise_ops_agree_with_assemble(self):
        grid, U, Pf = random_state(31, 6, 6)
        res, diag = cs.assemble_residual(U, Pf, grid, P)
        for j in range(grid.M + 1):
            for i in range(1, grid.N):
                rU, rP = cs.residual_interior(U, Pf, i, j, grid, P)
                assert rU == pytest.approx(res.R_U[i, j], rel=1e-12, abs=1e-12)
                assert rP == pytest.approx(res.R_P[i, j], rel=1e-12, abs=1e-12)
            rU, rP, d0 = cs.residual_boundary_kmin(U, Pf, j, grid, P)
            assert rU == pytest.approx(res.R_U[0, j], rel=1e-12, abs=1e-12)
            assert rP == pytest.approx(res.R_P[0, j], rel=1e-12, abs=1e-12)
            assert (d0.branch == cs.BRANCH_PRICE) == \
                bool(diag.price_controlled_kmin[j])
            rU, rP, dN = cs.residual_boundary_kmax(U, Pf, j, grid, P)
            assert rU == pytest.approx(res.R_U[grid.N, j], rel=1e-12, abs=1e-12)
            assert rP == pytest.approx(res.R_P[grid.N, j], rel=1e-12, abs=1e-12)
            assert (dN.branch == cs.BRANCH_PRICE) == \
                bool(diag.price_controlled_kmax[j])

    def test_deterministic_bitwise(self):
        grid, U, Pf = random_state(41, 7, 7)
        r1, d1 = cs.assemble_residual(U, Pf, grid, P)
        r2, d2 = cs.assemble_residual(U.copy(), Pf.copy(), grid, P)
        assert np.array_equal(r1.R_U, r2.R_U) and np.array_equal(r1.R_P, r2.R_P)
        assert np.array_equal(d1.price_controlled_kmin, d2.price_controlled_kmin)

    def test_zero_fields_finite(self):
        grid = cs.make_grid(P, 6, 6)
        res, _ = cs.assemble_residual(np.zeros(grid.shape), np.zeros(grid.shape),
                                      grid, P)
        assert np.isfinite(res.R_U).all() and np.isfinite(res.R_P).all()

    def test_shape_mismatch_rejected(self):
        grid = cs.make_grid(P, 6, 6)
        with pytest.raises(ValueError):
            cs.assemble_residual(np.zeros((3, 3)), np.zeros((3, 3)), grid, P)

    def test_flux_telescoping(self):
        # without the technical forcing the per-column flux differences
        # telescope exactly to the two edge fluxes
        p_free = P.with_(b_tilde_amp=0.0)
        grid, U, Pf = random_state(51, 6, 12, p_free)
        op = cs.SchemeOperator(p_free, grid)
        i = 3
        phi = float(op.phi[i, 0])
        terms = []
        for j in range(grid.M + 1):
            p_below = Pf[i, j - 1] if j > 0 else Pf[i, j]
            p_above = Pf[i, j + 1] if j < grid.M else Pf[i, j]
            terms.append(cs.godunov_flux(phi, Pf[i, j], p_above, p_free)
                         - cs.godunov_flux(phi, p_below, Pf[i, j], p_free))
        total = sum(terms)
        edge = (cs.godunov_flux(phi, Pf[i, grid.M], Pf[i, grid.M], p_free)
                - cs.godunov_flux(phi, Pf[i, 0], Pf[i, 0], p_free))
        assert total == pytest.approx(edge, rel=1e-10, abs=1e-10)

    def test_flux_telescoping_interior_with_forcing(self):
        # with the default b_tilde, telescoping holds over the strip-free
        # interior where phi is constant along the column
        grid, U, Pf = random_state(52, 6, 40)
        op = cs.SchemeOperator(P, grid)
        i = 2
        inner = [j for j in range(1, grid.M)
                 if cs.b_tilde(grid.z[j], P) == 0.0
                 and cs.b_tilde(grid.z[j - 1], P) == 0.0
                 and cs.b_tilde(grid.z[j + 1], P) == 0.0]
        phi = float(op.phi[i, inner[0]])
        total = 0.0
        for j in inner:
            total += (cs.godunov_flux(phi, Pf[i, j], Pf[i, j + 1], P)
                      - cs.godunov_flux(phi, Pf[i, j - 1], Pf[i, j], P))
        edge = (cs.godunov_flux(phi, Pf[i, inner[-1]], Pf[i, inner[-1] + 1], P)
                - cs.godunov_flux(phi, Pf[i, inner[0] - 1], Pf[i, inner[0]], P))
        assert total == pytest.approx(edge, rel=1e-10, abs=1e-10)


class TestChiRoot:
    dz = 0.4 / 40

    def cases(self, n, seed):
        rng = np.random.default_rng(seed)
        for _ in range(n):
            yield (rng.uniform(-0.07, 0.07), rng.uniform(-200.0, 700.0),
                   rng.uniform(-200.0, 700.0), rng.uniform(0.0, 10.0))

    def test_residual_of_root(self):
        for phi, pb, pa, g in self.cases(400, 61):
            root = cs.chi_root(phi, pb, pa, g, self.dz, P)
            resid = cs.chi_value(root.rho, phi, pb, pa, self.dz, P)
            assert resid == pytest.approx(-g, abs=1e-10 * max(1.0, abs(g)))

    def test_bisection_oracle(self):
        pd = par_dict(P)
        for phi, pb, pa, g in self.cases(1000, 62):
            root = cs.chi_root(phi, pb, pa, g, self.dz, P)
            ref = bisect_chi_root(phi, pb, pa, g, self.dz, pd)
            assert root.rho == pytest.approx(ref, abs=1e-10 * max(1.0, abs(ref)))

    def test_vertex_neighbors_lower_branch(self):
        # both neighbors at the flux vertex: the linear-branch root -v is
        # negative, below the break point at 0, so the lower quadratic branch
        # is active and the root still satisfies chi(rho) = 0 exactly
        phi = 0.005
        kl = P.kappa * P.lambda_b
        v = P.mu_b / P.lambda_b - phi / kl
        root = cs.chi_root(phi, v, v, 0.0, self.dz, P)
        assert v > 0.0 and root.rho < 0.0
        assert cs.chi_value(root.rho, phi, v, v, self.dz, P) == \
            pytest.approx(0.0, abs=1e-10)
        klz = kl / self.dz
        expect = (P.r - np.sqrt(P.r**2 + 2.0 * klz * P.r * v)) / klz
        assert root.rho == pytest.approx(expect, rel=1e-12)

    @given(st.floats(-0.07, 0.07), st.floats(-200.0, 700.0),
           st.floats(-200.0, 700.0), st.floats(-300.0, 300.0),
           st.floats(1e-3, 100.0))
    def test_chi_strictly_increasing(self, phi, pb, pa, rho, step):
        lo = cs.chi_value(rho, phi, pb, pa, self.dz, P)
        hi = cs.chi_value(rho + step, phi, pb, pa, self.dz, P)
        fp_noise = 1e-9 * max(1.0, abs(lo), abs(hi))
        assert hi - lo >= P.r * step - fp_noise


class TestBoundaryPriceMax:
    def scan_reference(self, U, Pf, j, grid, params, side):
        z = grid.z[j]
        phi = cs.f_storage(params.k_min if side > 0 else params.k_max, params) \
            + cs.b_tilde(z, params)
        i = 0 if side > 0 else grid.N
        g = float(np.asarray(cs.storage_cost(grid.k[i], params)))
        pb = Pf[i, j - 1] if j > 0 else Pf[i, j]
        pa = Pf[i, j + 1] if j < grid.M else Pf[i, j]
        thr = cs.chi_root(phi, pb, pa, g, grid.dz, params).p_threshold
        s_r = (U[i, j + 1] - U[i, j]) / grid.dz if j < grid.M else 0.0
        s_l = (U[i, j] - U[i, j - 1]) / grid.dz if j > 0 else 0.0
        span = 40_000.0
        ps = np.linspace(thr, thr + span, 400_000) if side > 0 else \
            np.linspace(thr - span, thr, 400_000)
        # the objective is piecewise quadratic: the drift-sign kink at the
        # flux vertex and the feasibility endpoint join the candidate grid
        v = params.mu_b / params.lambda_b - phi / (params.kappa * params.lambda_b)
        extra = [thr] + ([v] if (ps[0] <= v <= ps[-1]) else [])
        ps = np.concatenate([ps, np.asarray(extra)])
        b = phi + params.kappa * (params.lambda_b * ps - params.mu_b)
        F = (cs.h_min(z, ps, params) + np.maximum(b, 0.0) * s_r
             + np.minimum(b, 0.0) * s_l)
        idx = int(np.argmax(F))
        return float(F[idx]), float(ps[idx])

    def test_scan_oracle_kmin(self):
        for seed in range(100, 110):
            grid, U, Pf = random_state(seed, 5, 6)
            for j in range(grid.M + 1):
                B, p_star = cs.boundary_price_max_kmin(U, Pf, j, grid, P)
                B_ref, p_ref = self.scan_reference(U, Pf, j, grid, P, +1)
                assert B >= B_ref - 1e-9
                assert B - B_ref <= 1e-4 * max(1.0, abs(B))
                assert abs(p_star - p_ref) <= 1.0   # scan grid spacing 0.2

    def test_scan_oracle_kmax(self):
        for seed in range(120, 130):
            grid, U, Pf = random_state(seed, 5, 6)
            for j in range(grid.M + 1):
                B, p_star = cs.boundary_price_max_kmax(U, Pf, j, grid, P)
                B_ref, p_ref = self.scan_reference(U, Pf, j, grid, P, -1)
                assert B >= B_ref - 1e-9
                assert B - B_ref <= 1e-4 * max(1.0, abs(B))
                assert abs(p_star - p_ref) <= 1.0

    def test_threshold_binds_when_above_vertex(self):
        # constant U makes the objective the bare concave quadratic h_min;
        # rigging a huge positive phi pushes the admissible threshold far
        # above its vertex, so the maximizer lands on the threshold
        grid = cs.make_grid(P, 5, 6)
        U = np.zeros(grid.shape)
        Pf = np.full(grid.shape, 2000.0)
        j = 3
        B, p_star = cs.boundary_price_max_kmin(U, Pf, j, grid, P)
        z = grid.z[j]
        phi = cs.f_storage(P.k_min, P) + cs.b_tilde(z, P)
        thr = cs.chi_root(phi, 2000.0, 2000.0, 0.0, grid.dz, P).p_threshold
        a2, a1, _ = sch._hmin_coeffs(z, P)
        assert thr > -a1 / (2 * a2)
        assert p_star == pytest.approx(thr)
        assert B == pytest.approx(float(cs.h_min(z, thr, P)), rel=1e-12)


class TestBoundaryBranches:
    def test_exact_tie_is_price_controlled_and_deterministic(self, monkeypatch):
        # at an exact value tie the dwell is tangential, so the price residual
        # must be the pinned-price form for the system to have an exact zero
        grid, U, Pf = random_state(71, 5, 5)
        j = 2
        z = grid.z[j]
        phi = cs.f_storage(P.k_min, P) + cs.b_tilde(z, P)
        b = phi + P.kappa * (P.lambda_b * Pf[0, j] - P.mu_b)
        xi_r = (U[1, j] - U[0, j]) / grid.dk
        s_r = (U[0, j + 1] - U[0, j]) / grid.dz
        s_l = (U[0, j] - U[0, j - 1]) / grid.dz
        A = float(cs.h_up(z, Pf[0, j], xi_r, P).value
                  + max(0.0, b) * s_r + min(0.0, b) * s_l)
        monkeypatch.setattr(sch, "boundary_price_max_kmin",
                            lambda *a, **k: (A, 123.45))
        rU, rP, diag = sch.residual_boundary_kmin(U, Pf, j, grid, P)
        rU2, rP2, diag2 = sch.residual_boundary_kmin(U, Pf, j, grid, P)
        assert diag.branch == cs.BRANCH_PRICE
        assert rP == pytest.approx(123.45 - Pf[0, j])
        assert (rU, rP, diag.branch) == (rU2, rP2, diag2.branch)

    def test_blend_weight_ramp(self):
        width = sch.SWITCH_BAND * 10.0
        assert sch._switch_weight(10.0, 10.0) == 0.0
        assert sch._switch_weight(9.0, 10.0) == 0.0
        assert sch._switch_weight(10.0 + 2 * width, 10.0) == pytest.approx(1.0)
        mid = sch._switch_weight(10.0 + 0.5 * width, 10.0)
        assert 0.0 < mid < 1.0

    def test_reflection_maps_kmax_to_kmin(self):
        # with zero production target, cost, price offset and storage cost,
        # the system is exactly invariant under (k, z, p, U) ->
        # (k_min+k_max-k, 2-z, -p, U-reflected); the full-storage residual is
        # the reflected empty-storage residual with the price sign flipped
        pr = cs.ModelParams(
            r=0.1, epsilon=4e-4, alpha=1e4, q_circ=0.0, c=0.0,
            kappa=2e-3, lambda_b=0.4, mu_b=0.0, a_f=0.01, nu_z=1e-4,
            k_min=0.0, k_max=0.05, z_min=0.8, z_max=1.2, g_coeff=0.0)
        rng = np.random.default_rng(81)
        grid = cs.make_grid(pr, 6, 8)
        U = 100.0 * rng.standard_normal(grid.shape)
        Pf = 120.0 * rng.standard_normal(grid.shape)
        U_ref = U[::-1, ::-1].copy()
        P_ref = -Pf[::-1, ::-1].copy()
        r1, d1 = cs.assemble_residual(U, Pf, grid, pr)
        r2, d2 = cs.assemble_residual(U_ref, P_ref, grid, pr)
        np.testing.assert_allclose(r2.R_U, r1.R_U[::-1, ::-1],
                                   rtol=1e-9, atol=1e-8)
        np.testing.assert_allclose(r2.R_P, -r1.R_P[::-1, ::-1],
                                   rtol=1e-9, atol=1e-8)
        np.testing.assert_array_equal(d2.price_controlled_kmax,
                                      d1.price_controlled_kmin[::-1])
        np.testing.assert_array_equal(d2.price_controlled_kmin,
                                      d1.price_controlled_kmax[::-1])
