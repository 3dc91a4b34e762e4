import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from warmsim import (Atom, CallableRate, ConstantRate, GeneralizedIntensity,
                     HyperbolicRate, InfiniteMomentError, MassDeficitError,
                     PiecewiseRate, WeibullRate, atoms_from_jumps, eval_cdf,
                     eval_cdf_left, moment, sample, sample_batch)


class StubRng:
    """Feeds predetermined exponential marks / uniforms to samplers."""

    def __init__(self, exps=(), uniforms=()):
        self.exps = list(exps)
        self.uniforms = list(uniforms)

    def standard_exponential(self, n=None):
        if n is None:
            return self.exps.pop(0)
        return np.array([self.exps.pop(0) for _ in range(n)])

    def random(self):
        return self.uniforms.pop(0)


# -- eval_cdf ----------------------------------------------------------------


def test_cdf_constant_hazard_closed_form():
    gi = GeneralizedIntensity(ConstantRate(1.0))
    assert eval_cdf(gi, math.log(2)) == pytest.approx(0.5, abs=1e-12)


def test_cdf_hyperbolic_matches_quadrature_oracle():
    gamma = 2.0
    gi = GeneralizedIntensity(HyperbolicRate(gamma))
    # independent oracle: adaptive quadrature of the rate, then 1 - e^{-H}
    h, _ = integrate.quad(lambda v: gamma / (1.0 + v), 0.0, 1.0, epsrel=1e-12)
    assert eval_cdf(gi, 1.0) == pytest.approx(1.0 - math.exp(-h), abs=1e-10)
    assert eval_cdf(gi, 1.0) == pytest.approx(0.75, abs=1e-10)
    assert eval_cdf(gi, 1.0) == pytest.approx(1.0 - (1.0 + 1.0) ** -gamma, abs=1e-12)


def test_cdf_deterministic_unit_delay():
    gi = GeneralizedIntensity(support_bound=1.0)
    assert eval_cdf(gi, 0.0) == 0.0
    assert eval_cdf(gi, 0.999999) == 0.0
    assert eval_cdf(gi, 1.0) == 1.0
    assert eval_cdf_left(gi, 1.0) == 0.0


def test_cdf_right_continuous_at_atoms():
    gi = atoms_from_jumps([(1.0, 0.25)], ConstantRate(0.5))
    below = eval_cdf(gi, 1.0 - 1e-12)
    at = eval_cdf(gi, 1.0)
    assert at - eval_cdf_left(gi, 1.0) == pytest.approx(0.25, abs=1e-9)
    assert at > below


# -- atoms_from_jumps ---------------------------------------------------------


def test_full_mass_jump_becomes_support_bound():
    gi = atoms_from_jumps([(2.0, 1.0)])
    assert gi.support_bound == 2.0
    assert gi.atoms == ()
    assert eval_cdf(gi, 2.0) == 1.0


def test_two_point_distribution():
    gi = atoms_from_jumps([(1.0, 0.3), (2.0, 0.7)])
    assert eval_cdf(gi, 1.0) == pytest.approx(0.3, abs=1e-12)
    assert eval_cdf(gi, 1.5) == pytest.approx(0.3, abs=1e-12)
    assert eval_cdf(gi, 2.0) == pytest.approx(1.0, abs=1e-12)
    assert gi.support_bound == 2.0


def test_atom_on_continuous_background():
    # survival e^{-1} just before the atom; jump of half the remaining mass
    p = 0.5 * math.exp(-1.0)
    gi = atoms_from_jumps([(1.0, p)], ConstantRate(1.0))
    assert gi.atoms[0].weight == pytest.approx(-math.log(0.5), abs=1e-12)
    assert eval_cdf(gi, 1.0) == pytest.approx(1.0 - 0.5 * math.exp(-1.0), abs=1e-12)
    # brute-force CDF oracle on a fine grid: compose numeric survival pieces
    for s in np.linspace(0.0, 3.0, 61):
        h_cont, _ = integrate.quad(lambda v: 1.0, 0.0, s)
        surv = math.exp(-h_cont) * (0.5 if s >= 1.0 else 1.0)
        assert eval_cdf(gi, float(s)) == pytest.approx(1.0 - surv, abs=1e-9)


def test_jump_exceeding_survival_rejected():
    with pytest.raises(ValueError, match="exceeds available survival"):
        atoms_from_jumps([(1.0, 0.8)], ConstantRate(1.0))  # S(1-) = e^-1 < 0.8


def test_mass_deficient_atoms_rejected():
    with pytest.raises(ValueError, match="mass-deficient"):
        GeneralizedIntensity(atoms=(Atom(1.0, 0.5),))


def test_zero_hazard_without_atoms_is_allowed():
    gi = GeneralizedIntensity()
    assert eval_cdf(gi, 100.0) == 0.0


# -- sampling -----------------------------------------------------------------


def test_inverse_transform_known_mark():
    gi = GeneralizedIntensity(ConstantRate(2.0))
    t = sample(gi, StubRng(exps=[math.log(2)]))
    assert t == pytest.approx(math.log(2) / 2.0, abs=1e-12)


def test_two_point_frequencies():
    gi = atoms_from_jumps([(1.0, 0.3), (2.0, 0.7)])
    xs = sample_batch(gi, 100_000, np.random.default_rng(7))
    freq1 = np.mean(xs == 1.0)
    assert freq1 == pytest.approx(0.3, abs=0.005)
    assert np.mean(xs == 2.0) == pytest.approx(0.7, abs=0.005)


def test_hyperbolic_sampler_ks():
    gi = GeneralizedIntensity(HyperbolicRate(3.0))
    n = 100_000
    xs = sample_batch(gi, n, np.random.default_rng(11))
    xs = np.sort(xs)
    model = 1.0 - (1.0 + xs) ** -3.0
    emp_hi = np.arange(1, n + 1) / n
    emp_lo = np.arange(0, n) / n
    ks = max(np.max(np.abs(emp_hi - model)), np.max(np.abs(emp_lo - model)))
    assert ks < 1.5 * 1.36 / math.sqrt(n)


def test_scalar_and_batch_agree_in_law():
    gi = atoms_from_jumps([(0.7, 0.2)], WeibullRate(1.5, 1.0))
    rng = np.random.default_rng(3)
    scalar = np.array([sample(gi, rng) for _ in range(20_000)])
    batch = sample_batch(gi, 20_000, np.random.default_rng(4))
    qs = np.linspace(0.05, 0.95, 19)
    assert np.allclose(np.quantile(scalar, qs), np.quantile(batch, qs), atol=0.03)


@pytest.mark.parametrize("gi,cdf", [
    (GeneralizedIntensity(ConstantRate(1.3)), lambda s: 1 - np.exp(-1.3 * s)),
    (GeneralizedIntensity(WeibullRate(2.0, 1.5)), lambda s: 1 - np.exp(-(s / 1.5) ** 2)),
    (GeneralizedIntensity(HyperbolicRate(2.5)), lambda s: 1 - (1 + s) ** -2.5),
    (GeneralizedIntensity(PiecewiseRate((1.0,), (0.5, 2.0))),
     lambda s: 1 - np.exp(-np.where(s < 1, 0.5 * s, 0.5 + 2.0 * (s - 1)))),
])
def test_dkw_band_for_continuous_families(gi, cdf):
    # DKW at confidence 0.999: eps = sqrt(ln(2/alpha) / (2n))
    n = 100_000
    xs = np.sort(sample_batch(gi, n, np.random.default_rng(42)))
    eps = math.sqrt(math.log(2 / 0.001) / (2 * n))
    model = cdf(xs)
    emp = np.arange(1, n + 1) / n
    assert np.max(np.abs(emp - model)) < eps


def test_atom_mass_recovery_within_binomial_band():
    p = 0.35
    gi = atoms_from_jumps([(0.5, p)], ConstantRate(0.8))
    n = 100_000
    xs = sample_batch(gi, n, np.random.default_rng(5))
    freq = float(np.mean(xs == 0.5))
    band = 3.0 * math.sqrt(p * (1 - p) / n)
    assert abs(freq - p) <= band


def test_sampling_mass_deficit_raises():
    gi = GeneralizedIntensity(PiecewiseRate((1.0,), (0.1, 0.0)))  # total hazard 0.1
    with pytest.raises(MassDeficitError):
        sample_batch(gi, 100, np.random.default_rng(0))


# -- moments -------------------------------------------------------------------


def test_moment_exponential_closed_forms():
    assert moment(GeneralizedIntensity(ConstantRate(1.0)), 1) == pytest.approx(1.0, rel=1e-8)
    assert moment(GeneralizedIntensity(ConstantRate(2.0)), 2) == pytest.approx(0.5, rel=1e-8)


def test_moment_hyperbolic_vs_quadrature_oracle():
    gi = GeneralizedIntensity(HyperbolicRate(3.0))
    oracle, _ = integrate.quad(lambda s: (1.0 + s) ** -3.0, 0.0, np.inf)
    assert moment(gi, 1) == pytest.approx(oracle, rel=1e-7)
    assert moment(gi, 1) == pytest.approx(0.5, rel=1e-6)


def test_moment_with_atoms_matches_direct_sum():
    gi = atoms_from_jumps([(1.0, 0.3), (2.0, 0.7)])
    assert moment(gi, 1) == pytest.approx(0.3 * 1.0 + 0.7 * 2.0, rel=1e-9)
    assert moment(gi, 2) == pytest.approx(0.3 * 1.0 + 0.7 * 4.0, rel=1e-9)


def test_moment_divergence_detected():
    gi = GeneralizedIntensity(HyperbolicRate(1.5))  # only moments below 1.5 exist
    with pytest.raises(InfiniteMomentError):
        moment(gi, 2)


# -- property tests -------------------------------------------------------------


_rate_strategy = st.one_of(
    st.floats(0.1, 5.0).map(ConstantRate),
    st.floats(0.5, 4.0).map(HyperbolicRate),
    st.tuples(st.floats(0.6, 3.0), st.floats(0.3, 3.0)).map(lambda p: WeibullRate(*p)),
)


@st.composite
def _mixed_intensity(draw):
    cont = draw(_rate_strategy)
    locs = sorted(draw(st.lists(st.floats(0.1, 5.0), min_size=0, max_size=3,
                                unique=True)))
    weights = draw(st.lists(st.floats(0.05, 2.0), min_size=len(locs),
                            max_size=len(locs)))
    atoms = tuple(Atom(l, w) for l, w in zip(locs, weights))
    bound = draw(st.one_of(st.none(), st.floats(5.5, 9.0)))
    return GeneralizedIntensity(cont, atoms, support_bound=bound)


@given(_mixed_intensity(), st.lists(st.floats(0.0, 10.0), min_size=2, max_size=20))
@settings(max_examples=150, deadline=None)
def test_cdf_is_a_distribution_function(gi, grid):
    vals = [eval_cdf(gi, s) for s in sorted(grid)]
    assert all(0.0 <= v <= 1.0 for v in vals)
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


@given(st.lists(st.tuples(st.floats(0.2, 5.0), st.floats(0.05, 0.8)),
                min_size=1, max_size=4),
       st.floats(0.1, 2.0))
@settings(max_examples=150, deadline=None)
def test_reconstruction_roundtrip_exact(raw, rate):
    # masses are drawn as fractions of the survival remaining at each location
    locs = sorted({round(loc, 6): frac for loc, frac in raw}.items())
    jumps = []
    log_surv_atoms = 0.0
    for loc, frac in locs:
        s_left = math.exp(-rate * loc + log_surv_atoms)
        mass = frac * s_left
        jumps.append((loc, mass))
        log_surv_atoms += math.log1p(-frac)
    gi = atoms_from_jumps(jumps, ConstantRate(rate))
    for loc, mass in jumps:
        jump = eval_cdf(gi, loc) - eval_cdf_left(gi, loc)
        assert jump == pytest.approx(mass, abs=1e-12)
