import csv
import math

import numpy as np
import pytest
from conftest import closed_form_zero_hazard

from renewal_dividends import hjbgrid
from renewal_dividends.errors import CFLError, ConfigurationError, DomainError, NumericalFailure
from renewal_dividends.hjbgrid import (
    AnalyticBounds,
    GridSpec,
    ValueField,
    claim_integral,
    distance_to_boundary,
    extract_free_boundary,
    generator_apply,
    residual_check,
    solve_vi,
    subsolution_bound,
    supersolution_bound,
)
from renewal_dividends.model import ConstantHazard, DeterministicClaims, ExponentialClaims, ModelParams

PARAMS = ModelParams(p=1.0, c=0.05, T=1.0, Lambda=1.0)
ZERO = ModelParams(p=1.0, c=0.05, T=1.0, Lambda=1.0, validation_mode="degenerate")


class TestGridSpec:
    def test_steps(self):
        spec = GridSpec(400, 400, 5.0)
        assert spec.dt(PARAMS) == 0.0025
        assert spec.dx == 0.0125
        assert spec.tolerance(PARAMS) == pytest.approx(0.075)

    def test_cfl_violation(self):
        with pytest.raises(CFLError, match="CFL"):
            GridSpec(10, 400, 5.0).check(PARAMS)

    def test_pad_too_close(self):
        with pytest.raises(ConfigurationError):
            GridSpec(50, 20, 0.8).check(PARAMS)

    def test_bad_fields(self):
        for kw in ({"n_s": 0, "n_x": 10, "x_max": 1.0}, {"n_s": 10, "n_x": 10, "x_max": -1.0},
                   {"n_s": 10, "n_x": 10, "x_max": 1.0, "claim_refine": 0}):
            with pytest.raises(ConfigurationError):
                GridSpec(**kw)


class TestAnalyticBounds:
    def test_constants(self):
        b = AnalyticBounds.from_params(PARAMS)
        assert b.N1 == pytest.approx(3.70711, abs=1e-5)
        assert b.N2 == pytest.approx(math.sqrt(2) / 2 + 1 + 1.05 * 2 / (2 + math.sqrt(2)), abs=1e-14)
        assert b.N2 == pytest.approx(2.3221825, abs=1e-7)
        assert b.M2 == -b.N2 * PARAMS.T
        assert b.M1 == pytest.approx(b.N1 + 1 / (2 + math.sqrt(2)))
        assert b.N1 > 2 * PARAMS.p

    def test_distance_examples(self):
        assert distance_to_boundary(1.0, 1.0, 0.2, 1.0) == 0.0
        assert distance_to_boundary(0.5, 0.2, 0.3, 1.0) == pytest.approx(math.sqrt(2) / 2 * 0.2)
        a = 1 / (2 + math.sqrt(2))
        assert distance_to_boundary(1 - a, 10.0, a, 1.0) == pytest.approx(a)

    def test_distance_never_exceeds_max(self):
        rng = np.random.default_rng(0)
        s = rng.random(20_000)
        w = s * rng.random(20_000)
        x = 5 * rng.random(20_000)
        d = distance_to_boundary(s, x, w, 1.0)
        assert d.min() >= 0
        assert d.max() <= 1 / (2 + math.sqrt(2)) + 1e-15

    def test_bound_examples(self):
        b = AnalyticBounds.from_params(PARAMS)
        assert supersolution_bound(0.5, 0.2, 0.3, b) == pytest.approx(2.19497, abs=1e-5)
        assert subsolution_bound(0.5, 0.2, 0.3, b) == pytest.approx(-0.8196700, abs=1e-7)
        assert supersolution_bound(1.0, 0.7, 0.4, b) == 0.7
        assert subsolution_bound(1.0, 0.7, 0.4, b) == 0.7

    def test_bounds_within_constants(self):
        b = AnalyticBounds.from_params(PARAMS)
        rng = np.random.default_rng(1)
        s = rng.random(5000)
        w = s * rng.random(5000)
        x = 3 * rng.random(5000)
        for fn in (supersolution_bound, subsolution_bound):
            v = fn(s, x, w, b) - x
            assert v.min() >= b.M2 - 1e-12
            assert v.max() <= b.M1 + 1e-12

    @pytest.mark.parametrize("point", [(0.3, 1.0, 0.4), (1.2, 1.0, 0.1), (0.5, -0.1, 0.1), (-0.1, 1.0, 0.0)])
    def test_outside_domain(self, point):
        with pytest.raises(DomainError):
            distance_to_boundary(*point, 1.0)
        with pytest.raises(DomainError):
            supersolution_bound(*point, AnalyticBounds.from_params(PARAMS))


def identity_field(spec, params):
    return ValueField.from_function(spec, params, lambda s, x, w: x)


class TestClaimIntegral:
    def test_zero_surplus(self):
        f = identity_field(GridSpec(10, 100, 4.0), PARAMS)
        assert claim_integral(f, 3, 0.0, ExponentialClaims(1.0)) == 0.0

    @pytest.mark.parametrize("q,tol", [(1, 5e-3), (4, 1e-3)])
    def test_identity_exponential(self, q, tol):
        f = identity_field(GridSpec(10, 100, 4.0, claim_refine=q), PARAMS)
        assert claim_integral(f, 3, 1.0, ExponentialClaims(1.0)) == pytest.approx(math.exp(-1), abs=tol)

    def test_atom(self):
        # the atom sits on a claim-mesh node (dx = 0.05)
        f = identity_field(GridSpec(10, 80, 4.0), PARAMS)
        assert claim_integral(f, 3, 2.0, DeterministicClaims(0.5)) == pytest.approx(1.5, abs=1e-12)
        assert claim_integral(f, 3, 0.4, DeterministicClaims(0.5)) == 0.0

    def test_off_grid(self):
        f = identity_field(GridSpec(10, 100, 4.0), PARAMS)
        with pytest.raises(DomainError):
            claim_integral(f, 3, 1.013, ExponentialClaims(1.0))

    def test_weights_sum_to_cdf(self):
        spec = GridSpec(10, 50, 4.0, claim_refine=3)
        g = ExponentialClaims(0.7)
        quad = hjbgrid.ClaimQuadrature(g, spec)
        ones = quad.apply(np.ones(spec.n_x + 1))
        np.testing.assert_allclose(ones, g.cdf(hjbgrid.x_grid(spec)), atol=1e-14)


class TestGeneratorApply:
    spec = GridSpec(20, 40, 4.0)

    def test_constant_field(self):
        K = 2.5
        f = ValueField.from_function(self.spec, PARAMS, lambda s, x, w: np.full_like(x, K))
        f.slices[-1] = np.full_like(f.slices[-1], K)
        g = ExponentialClaims(1.0)
        for j in (0, 5, 20):
            val = generator_apply(f, (3, j, 2), PARAMS, ConstantHazard(1.0), g)
            expected = -PARAMS.c * K - 1.0 * K * (1 - g.cdf(f.x[j]))
            assert val == pytest.approx(expected, abs=1e-12)
            assert val <= 0

    def test_identity_zero_hazard(self):
        f = identity_field(self.spec, ZERO)
        for j in (0, 7, 30):
            val = generator_apply(f, (5, j, 1), ZERO, ConstantHazard(0.0), ExponentialClaims(1.0))
            assert val == pytest.approx(-ZERO.c * f.x[j] + ZERO.p, abs=1e-12)

    def test_closed_form_zero_hazard(self):
        f = ValueField.from_function(self.spec, ZERO, closed_form_zero_hazard)
        dt = f.dt
        for j in (0, 10, 39):
            val = generator_apply(f, (4, j, 2), ZERO, ConstantHazard(0.0), ExponentialClaims(1.0))
            assert val == pytest.approx(-ZERO.c * f.x[j], abs=ZERO.p * ZERO.c * dt + 1e-9)

    def test_terminal_node(self):
        f = identity_field(self.spec, PARAMS)
        with pytest.raises(DomainError):
            generator_apply(f, (20, 3, 0), PARAMS, ConstantHazard(1.0), ExponentialClaims(1.0))


class TestSolve:
    def test_zero_hazard_closed_form(self, zero_small):
        f = zero_small
        err = max(np.abs(sl - closed_form_zero_hazard(i * f.dt, f.x)).max() for i, sl in enumerate(f.slices))
        assert err <= f.spec.tolerance(f.params)

    def test_terminal_slice_exact(self, poisson_small, erlang_small, zero_small):
        for f in (poisson_small, erlang_small, zero_small):
            assert np.array_equal(f.slices[-1], np.tile(f.x, (f.n_s + 1, 1)))

    def test_monotone_in_x(self, poisson_small, erlang_small):
        for f in (poisson_small, erlang_small):
            for sl in f.slices:
                assert np.all(np.diff(sl, axis=1) >= f.dx * (1 - 1e-9))

    def test_envelope(self, poisson_small):
        f = poisson_small
        tol = f.spec.tolerance(f.params)
        for i, sl in enumerate(f.slices):
            assert np.all(sl >= f.x - tol)
            assert np.all(sl <= f.x + f.params.p * (f.params.T - i * f.dt) + tol)

    def test_cfl_rejected(self):
        with pytest.raises(CFLError):
            solve_vi(GridSpec(5, 100, 5.0), PARAMS, ConstantHazard(1.0), ExponentialClaims(1.0))

    def test_non_finite_reported(self, monkeypatch):
        def broken(self, row):
            out = np.zeros_like(row)
            out[3] = np.nan
            return out

        monkeypatch.setattr(hjbgrid.ClaimQuadrature, "apply", broken)
        with pytest.raises(NumericalFailure) as info:
            solve_vi(GridSpec(10, 10, 2.0), PARAMS, ConstantHazard(1.0), ExponentialClaims(1.0))
        assert info.value.node[0] == 9


class TestValueField:
    def test_interp_matches_nodes(self, erlang_small):
        f = erlang_small
        i = 25
        ks = np.arange(i + 1)
        for j in (0, 7, 40):
            vals = f.interp(i, np.full(ks.size, f.x[j]), ks * f.dt)
            np.testing.assert_allclose(vals, f.slices[i][:, j], atol=1e-12)

    def test_interp_pad(self, erlang_small):
        f = erlang_small
        top = f.slices[10][0, -1]
        assert f.interp(10, [f.x[-1] + 0.3], [0.0])[0] == pytest.approx(top + 0.3)

    def test_node_index(self, erlang_small):
        f = erlang_small
        assert f.node_index(0.5, 1.0, 0.25) == (20, 10, 10)
        with pytest.raises(DomainError):
            f.node_index(0.5, 1.01, 0.25)
        with pytest.raises(DomainError):
            f.node_index(0.5, 1.0, 0.75)


class TestResidual:
    def test_solved_field_small(self, poisson_small, erlang_small):
        for f in (poisson_small, erlang_small):
            r = residual_check(f, f.params, f.hazard, f.claims)
            assert r.max_abs <= 1e-9

    def test_closed_form_injected(self):
        spec = GridSpec(100, 100, 5.0)
        f = ValueField.from_function(spec, ZERO, closed_form_zero_hazard)
        r = residual_check(f, ZERO, ConstantHazard(0.0), ExponentialClaims(1.0))
        assert r.max_abs <= ZERO.c * spec.dx + 2 * ZERO.p * ZERO.c * f.dt + 1e-9

    def test_terminal_adjacent_nonpositive(self, erlang_small):
        f = erlang_small
        r = residual_check(f, f.params, f.hazard, f.claims)
        assert r.residuals[f.n_s - 1].max() <= 1e-9
        assert np.all(r.residuals[-1] == 0)

    def test_perturbation_localises(self, poisson_small):
        f = poisson_small
        slices = [s.copy() for s in f.slices]
        slices[20][5, 17] += 1.0
        g = f.replace(slices)
        r = residual_check(g, g.params, f.hazard, f.claims)
        i, j, k = r.argmax
        assert abs(i - 20) <= 1 and abs(j - 17) <= 1 and abs(k - 5) <= 1


class TestFreeBoundary:
    def test_zero_hazard(self, zero_small):
        fb = extract_free_boundary(zero_small)
        assert all(np.all(level == 0.0) for level in fb.levels)

    def test_terminal(self, erlang_small):
        fb = extract_free_boundary(erlang_small)
        assert np.all(fb.levels[-1] == 0.0)

    def test_defined_everywhere(self, erlang_small):
        fb = extract_free_boundary(erlang_small)
        for i, level in enumerate(fb.levels):
            assert level.shape == (i + 1,)
            assert np.all((level >= 0) & (level <= erlang_small.x[-1]))


class TestExport:
    def test_surface_csv(self, tmp_path, poisson_small):
        f = poisson_small
        r = residual_check(f, f.params, f.hazard, f.claims)
        path = tmp_path / "surface.csv"
        n = hjbgrid.write_surface_csv(f, path, r.residuals, stride=4)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["s", "x", "w", "V", "Vbar", "Vunder", "residual"]
        assert len(rows) == n + 1
        last = [float(v) for v in rows[-1]]
        assert last[0] == 1.0 and last[3] == last[1] == last[4] == last[5]

    def test_free_boundary_csv(self, tmp_path, poisson_small):
        path = tmp_path / "fb.csv"
        hjbgrid.write_free_boundary_csv(extract_free_boundary(poisson_small), path)
        lines = path.read_text().splitlines()
        assert lines[0] == "s,w,b"
        assert len(lines) == 1 + sum(i + 1 for i in range(poisson_small.n_s + 1))
