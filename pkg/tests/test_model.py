import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from renewal_dividends.errors import ConfigurationError, DomainError
from renewal_dividends.model import (
    ConstantHazard,
    DeterministicClaims,
    EmpiricalClaims,
    ErlangTwoHazard,
    ExponentialClaims,
    ModelParams,
    PiecewiseLinearHazard,
    claim_cdf,
    claims_from_dict,
    conditional_survival,
    hazard_at,
    hazard_from_dict,
    integrated_hazard,
    sample_claim,
    sample_waiting_time,
)

HAZARDS = [
    ConstantHazard(2.0),
    ErlangTwoHazard(1.0),
    ErlangTwoHazard(4.0),
    PiecewiseLinearHazard(((0.0, 1.0), (0.4, 0.2), (1.0, 3.0))),
]


class TestModelParams:
    """Construction and validation of the problem constants."""

    def test_valid(self):
        m = ModelParams(p=1, c=0.05, T=1, Lambda=1)
        assert m.validation_mode == "strict"
        assert not m.degenerate

    @pytest.mark.parametrize("field", ["p", "c", "T", "Lambda"])
    @pytest.mark.parametrize("bad", [0.0, -1.0, math.nan, math.inf])
    def test_rejects_nonpositive(self, field, bad):
        kw = dict(p=1.0, c=0.05, T=1.0, Lambda=1.0)
        kw[field] = bad
        with pytest.raises(ConfigurationError):
            ModelParams(**kw)

    def test_degenerate_allows_zero_discount(self):
        m = ModelParams(p=1, c=0.0, T=1, Lambda=1, validation_mode="degenerate")
        assert m.degenerate

    def test_unknown_mode(self):
        with pytest.raises(ConfigurationError):
            ModelParams(p=1, c=0.05, T=1, Lambda=1, validation_mode="lenient")

    def test_hazard_above_bound_rejected(self):
        with pytest.raises(ConfigurationError):
            ModelParams(p=1, c=0.05, T=1, Lambda=1).check_hazard(ConstantHazard(2.0))

    def test_zero_hazard_needs_degenerate_mode(self):
        with pytest.raises(ConfigurationError):
            ModelParams(p=1, c=0.05, T=1, Lambda=1).check_hazard(ConstantHazard(0.0))
        ModelParams(p=1, c=0.05, T=1, Lambda=1, validation_mode="degenerate").check_hazard(ConstantHazard(0.0))

    def test_short_hazard_table_rejected(self):
        h = PiecewiseLinearHazard(((0.0, 1.0), (0.5, 1.0)))
        with pytest.raises(ConfigurationError):
            ModelParams(p=1, c=0.05, T=1, Lambda=2).check_hazard(h)

    def test_hazard_bound_on_grid(self):
        for h in HAZARDS:
            lam = max(h.rate(w) for w in np.linspace(0, 1, 1000))
            ModelParams(p=1, c=0.05, T=1, Lambda=lam).check_hazard(h)


class TestHazard:
    def test_examples(self):
        assert hazard_at(ConstantHazard(2.0), 0.3) == 2.0
        assert hazard_at(ErlangTwoHazard(1.0), 1.0) == pytest.approx(0.5)
        assert hazard_at(PiecewiseLinearHazard(((0, 1), (1, 3))), 0.5) == pytest.approx(2.0)

    def test_integrated_examples(self):
        assert integrated_hazard(ConstantHazard(2.0), 0.1, 0.5) == pytest.approx(1.0)
        assert integrated_hazard(ErlangTwoHazard(1.0), 0.0, 1.0) == pytest.approx(1 - math.log(2), abs=1e-12)
        for h in HAZARDS:
            assert integrated_hazard(h, 0.3, 0.0) == 0.0

    def test_survival_examples(self):
        assert conditional_survival(ConstantHazard(2.0), 0.0, 0.5) == pytest.approx(math.exp(-1))
        assert conditional_survival(ErlangTwoHazard(1.0), 0.0, 1.0) == pytest.approx(2 * math.exp(-1))
        for h in HAZARDS:
            assert conditional_survival(h, 0.2, 0.0) == 1.0

    def test_piecewise_integral_is_trapezoid(self):
        h = PiecewiseLinearHazard(((0, 1), (1, 3)))
        assert integrated_hazard(h, 0.0, 1.0) == pytest.approx(2.0)
        assert integrated_hazard(h, 0.25, 0.5) == pytest.approx(0.5 * 2.0)

    def test_domain_errors(self):
        h = PiecewiseLinearHazard(((0, 1), (1, 3)))
        with pytest.raises(DomainError):
            hazard_at(h, 1.5)
        with pytest.raises(DomainError):
            hazard_at(h, -0.1)
        with pytest.raises(DomainError):
            integrated_hazard(h, 0.1, -0.2)

    def test_rate_clamps_beyond_table(self):
        h = PiecewiseLinearHazard(((0, 1), (1, 3)))
        assert h.rate(1.0 + 1e-9) == 3.0

    def test_bad_tables(self):
        with pytest.raises(ConfigurationError):
            PiecewiseLinearHazard(((0, 1),))
        with pytest.raises(ConfigurationError):
            PiecewiseLinearHazard(((0.1, 1), (1, 2)))
        with pytest.raises(ConfigurationError):
            PiecewiseLinearHazard(((0, 1), (0.5, 2), (0.5, 3)))
        with pytest.raises(ConfigurationError):
            PiecewiseLinearHazard(((0, 1), (1, -2)))
        with pytest.raises(ConfigurationError):
            ErlangTwoHazard(0.0)

    @settings(max_examples=200, deadline=None)
    @given(
        hi=st.integers(0, len(HAZARDS) - 1),
        w=st.floats(0, 0.5),
        t=st.floats(0, 0.5),
        frac=st.floats(0, 1),
    )
    def test_survival_is_multiplicative(self, hi, w, t, frac):
        h = HAZARDS[hi]
        t1 = frac * t
        lhs = conditional_survival(h, w, t)
        rhs = conditional_survival(h, w, t1) * conditional_survival(h, w + t1, t - t1)
        assert lhs == pytest.approx(rhs, abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(hi=st.integers(0, len(HAZARDS) - 1), w=st.floats(0, 0.9), u=st.floats(0, 0.999999))
    def test_waiting_time_inverts_survival(self, hi, w, u):
        h = HAZARDS[hi]
        t = sample_waiting_time(h, w, u)
        if math.isfinite(t):
            assert conditional_survival(h, w, t) == pytest.approx(1 - u, abs=1e-9)
        else:
            assert conditional_survival(h, w, h.horizon - w) >= 1 - u

    def test_waiting_time_examples(self):
        h = ConstantHazard(2.0)
        assert sample_waiting_time(h, 0.7, 0.0) == 0.0
        assert sample_waiting_time(h, 0.3, 1 - math.exp(-1)) == pytest.approx(0.5)
        assert sample_waiting_time(ConstantHazard(0.0), 0.1, 0.5) == math.inf

    def test_waiting_time_cap(self):
        h = ConstantHazard(1.0)
        # either infinity or a time beyond the cap: both mean no claim before it
        assert sample_waiting_time(h, 0.0, 0.9, cap=1.0) > 1.0
        assert sample_waiting_time(ErlangTwoHazard(1.0), 0.0, 0.9, cap=1.0) == math.inf
        assert sample_waiting_time(h, 0.0, 0.5, cap=1.0) == pytest.approx(math.log(2))

    def test_waiting_time_bad_uniform(self):
        for u in (-0.1, 1.0, 1.5):
            with pytest.raises(DomainError):
                sample_waiting_time(ConstantHazard(1.0), 0.0, u)

    def test_bisection_accuracy_erlang(self):
        h = ErlangTwoHazard(3.0)
        t = sample_waiting_time(h, 0.2, 0.4)
        assert integrated_hazard(h, 0.2, t) == pytest.approx(-math.log(0.6), abs=1e-9)


class TestClaims:
    def test_cdf_examples(self):
        assert claim_cdf(ExponentialClaims(1.0), 1.0) == pytest.approx(1 - math.exp(-1))
        for g in (ExponentialClaims(1.0), DeterministicClaims(0.5), EmpiricalClaims((0.5, 1.0), (0.3, 1.0))):
            assert claim_cdf(g, -0.5) == 0.0
        assert claim_cdf(DeterministicClaims(0.5), 0.6) == 1.0
        assert claim_cdf(DeterministicClaims(0.5), 0.5) == 1.0
        assert claim_cdf(DeterministicClaims(0.5), 0.49) == 0.0

    def test_sample_examples(self):
        assert sample_claim(ExponentialClaims(1.0), 1 - math.exp(-1)) == pytest.approx(1.0)
        assert sample_claim(DeterministicClaims(0.5), 0.77) == 0.5
        assert sample_claim(ExponentialClaims(2.0), 0.0) == 0.0

    def test_empirical_interpolates(self):
        g = EmpiricalClaims((1.0, 2.0), (0.5, 1.0))
        assert g.cdf(0.5) == pytest.approx(0.25)
        assert g.cdf(1.5) == pytest.approx(0.75)
        assert g.cdf(3.0) == 1.0
        assert g.sample(0.25) == pytest.approx(0.5)
        assert g.sample(0.75) == pytest.approx(1.5)

    def test_empirical_validation(self):
        with pytest.raises(ConfigurationError):
            EmpiricalClaims((1.0, 0.5), (0.5, 1.0))
        with pytest.raises(ConfigurationError):
            EmpiricalClaims((1.0, 2.0), (0.5, 0.9))
        with pytest.raises(ConfigurationError):
            EmpiricalClaims((1.0, 2.0), (0.6, 0.5))

    @pytest.mark.parametrize(
        "g", [ExponentialClaims(1.3), EmpiricalClaims((0.2, 1.0, 3.0), (0.1, 0.7, 1.0))], ids=["exp", "empirical"]
    )
    def test_kolmogorov_smirnov(self, g):
        u = np.random.default_rng(7).random(100_000)
        xs = np.sort([g.sample(v) for v in u])
        ecdf = np.arange(1, xs.size + 1) / xs.size
        ks = np.max(np.maximum(np.abs(ecdf - g.cdf(xs)), np.abs(ecdf - 1 / xs.size - g.cdf(xs))))
        assert ks < 0.01

    @settings(max_examples=100, deadline=None)
    @given(a=st.floats(-1, 10), b=st.floats(-1, 10))
    def test_cdf_monotone(self, a, b):
        lo, hi = min(a, b), max(a, b)
        for g in (ExponentialClaims(1.0), DeterministicClaims(0.5), EmpiricalClaims((0.5, 2.0), (0.4, 1.0))):
            assert 0.0 <= g.cdf(lo) <= g.cdf(hi) <= 1.0


class TestConfigParsing:
    def test_round_trip(self):
        for h in HAZARDS:
            assert hazard_from_dict(h.to_dict()) == h
        for g in (ExponentialClaims(2.0), DeterministicClaims(0.5), EmpiricalClaims((0.5, 2.0), (0.4, 1.0))):
            assert claims_from_dict(g.to_dict()) == g

    def test_unknown_types(self):
        with pytest.raises(ConfigurationError):
            hazard_from_dict({"type": "weibull"})
        with pytest.raises(ConfigurationError):
            claims_from_dict({"type": "pareto"})
        with pytest.raises(ConfigurationError):
            hazard_from_dict({"type": "constant"})
