import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from robust_sae.exceptions import ZeroScaleError
from robust_sae.psi import (
    AsymHuberConfig, HuberConfig, asym_huber_psi, bounded_terms, gamma_to_q,
    huber_k2, huber_psi, mad_scale, mq_psi, q_to_gamma, qn_scale, robust_scale,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)


def qn_brute(r):
    # k-th smallest pairwise distance, written out with explicit loops
    n = len(r)
    d = sorted(abs(r[i] - r[j]) for i in range(n) for j in range(i + 1, n))
    h = n // 2 + 1
    return 2.2219 * d[h * (h - 1) // 2 - 1]


class TestHuber:
    def test_clips(self):
        assert huber_psi(5.0, 1.345) == 1.345
        assert huber_psi(-5.0, 1.345) == -1.345
        assert huber_psi(0.3, 1.345) == 0.3

    @given(finite, st.floats(0.01, 100))
    def test_odd(self, r, c):
        assert huber_psi(-r, c) == -huber_psi(r, c)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            HuberConfig(0.0)
        with pytest.raises(ValueError):
            AsymHuberConfig(1.0, gamma=-1.0)

    def test_consistency_factor(self):
        rng = np.random.default_rng(3)
        z = rng.standard_normal(400_000)
        assert huber_k2(1.345) == pytest.approx(np.mean(np.clip(z, -1.345, 1.345) ** 2), abs=5e-3)
        assert huber_k2(np.inf) == 1.0
        assert huber_k2(1e6) == pytest.approx(1.0)


class TestAsymmetric:
    @pytest.mark.parametrize("r, expected", [
        (-5.0, -2.0 / 5.0 * 2.0),
        (-1.0, -2.0 / 5.0),
        (0.5, 0.5 * 8.0 / 5.0),
        (3.0, 2.0 * 8.0 / 5.0),
    ])
    def test_pieces(self, r, expected):
        # c = 2, gamma = 2: slopes 2/5 below zero and 8/5 above
        assert asym_huber_psi(r, 2.0, 2.0) == pytest.approx(expected, rel=1e-15)

    @given(arrays(float, 20, elements=finite), st.floats(0.1, 50))
    def test_gamma_one_is_huber(self, r, c):
        np.testing.assert_array_equal(asym_huber_psi(r, c, 1.0), huber_psi(r, c))

    @given(finite, st.floats(0.1, 10), st.floats(0.1, 10))
    def test_bounded(self, r, c, gamma):
        g2 = gamma * gamma
        v = asym_huber_psi(r, c, gamma)
        assert -c * 2 / (g2 + 1) - 1e-9 <= v <= c * 2 * g2 / (g2 + 1) + 1e-9

    @given(st.floats(0.1, 10), st.floats(0.1, 10))
    def test_mirror(self, c, gamma):
        # psi_{c,gamma}(-r) = -psi_{c,1/gamma}(r)
        r = np.linspace(-3 * c, 3 * c, 41)
        np.testing.assert_allclose(asym_huber_psi(-r, c, gamma),
                                   -asym_huber_psi(r, c, 1.0 / gamma), rtol=1e-12, atol=1e-12)

    @given(st.floats(0.05, 20))
    def test_mq_equivalence(self, gamma):
        # the asymmetric psi is the M-quantile psi at q = gamma^2 / (gamma^2 + 1)
        q = gamma_to_q(gamma)
        r = np.linspace(-5, 5, 101)
        np.testing.assert_allclose(asym_huber_psi(r, 1.5, gamma), mq_psi(r, 1.5, q),
                                   rtol=1e-12, atol=1e-14)
        assert q_to_gamma(q) == pytest.approx(gamma, rel=1e-10)


class TestScales:
    def test_mad(self):
        assert mad_scale([-2.0, -1.0, 0.0, 1.0, 2.0]).value == pytest.approx(1.4826)

    @given(arrays(float, st.integers(2, 25), elements=st.floats(-100, 100)))
    def test_qn_matches_brute_force(self, r):
        if np.ptp(r) == 0 or qn_brute(list(r)) == 0:
            with pytest.raises(ZeroScaleError):
                qn_scale(r)
        else:
            assert float(qn_scale(r)) == pytest.approx(qn_brute(list(r)), rel=1e-12)

    def test_qn_normal_consistency(self):
        rng = np.random.default_rng(0)
        vals = [float(qn_scale(rng.normal(0, 2.0, 400))) for _ in range(50)]
        assert np.mean(vals) == pytest.approx(2.0, rel=0.03)

    @given(arrays(float, 12, elements=st.integers(-500, 500).map(lambda k: k / 10)),
           st.floats(0.01, 100), st.floats(-50, 50))
    @settings(max_examples=50)
    def test_qn_equivariance(self, r, a, b):
        try:
            base = float(qn_scale(r))
        except ZeroScaleError:
            return
        assert float(qn_scale(a * r + b)) == pytest.approx(a * base, rel=1e-9)

    def test_zero_scale(self):
        with pytest.raises(ZeroScaleError):
            robust_scale(np.ones(5), "qn")
        with pytest.raises(ZeroScaleError):
            robust_scale(np.zeros(5), "mad")

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            robust_scale([1.0, 2.0], "iqr")


class TestBoundedTerms:
    def test_passthrough(self):
        r = np.array([-3.0, 1.0, 40.0])
        terms, w = bounded_terms(r, np.inf, 1.0)
        np.testing.assert_array_equal(terms, r)
        assert w is None

    def test_zero_residuals(self):
        terms, w = bounded_terms(np.zeros(4), 2.0, 1.5)
        np.testing.assert_array_equal(terms, 0.0)

    def test_clipped_at_scale(self):
        r = np.array([-1.0, -0.5, 0.0, 0.5, 1.0, 100.0])
        terms, w = bounded_terms(r, 2.0, 1.0, "mad")
        assert w == pytest.approx(1.4826 * 0.75)
        assert terms[-1] == pytest.approx(2.0 * w)
        np.testing.assert_array_equal(terms[:-1], r[:-1])

    def test_given_scale_must_be_positive(self):
        with pytest.raises(ZeroScaleError):
            bounded_terms([1.0, 2.0], 2.0, w=0.0)

    def test_collapsed_scale_gives_zero_limit(self):
        terms, w = bounded_terms([0.0, 0.0, 0.0, 1e-14, 5.0], 2.0, 1.5)
        assert w == 0.0
        np.testing.assert_array_equal(terms, 0.0)
