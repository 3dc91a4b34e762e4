import math

import numpy as np
import pytest
from scipy import integrate

from warmsim import (CallableRate, ConditionGrid, ConstantRate, EnvelopePair,
                     GeneralizedIntensity, HyperbolicRate, IntensityField,
                     PhaseLaw, PiecewiseRate, check_condition_a,
                     check_condition_b, check_condition_c, check_condition_d,
                     envelope_moment_vector, eval_cdf, moment)


def _uniform_field(rate_fn, envelope=None):
    law = PhaseLaw(GeneralizedIntensity(rate_fn), envelope=envelope)
    return IntensityField.symmetric(law, law)


# -- condition a: envelope sandwich --------------------------------------------


def test_condition_a_constant_inside_envelope():
    env = EnvelopePair(phi=ConstantRate(0.5), q=ConstantRate(2.0))
    rep = check_condition_a(_uniform_field(ConstantRate(1.0)), env=env)
    assert rep.passed
    assert rep.violations == []


def test_condition_a_hyperbolic_family_passes():
    gamma = 1.0
    env = EnvelopePair(phi=HyperbolicRate(gamma), q=ConstantRate(1.0))
    rep = check_condition_a(_uniform_field(HyperbolicRate(gamma)), env=env)
    assert rep.passed


def test_condition_a_violations_cover_every_grid_point():
    env = EnvelopePair(phi=ConstantRate(0.0001), q=ConstantRate(2.0))
    grid = ConditionGrid(own_times=(0.0, 1.0, 5.0), other_clocks=(0.0,))
    rep = check_condition_a(_uniform_field(ConstantRate(3.0), envelope=env),
                            grid=grid)
    assert not rep.passed
    for element in (1, 2):
        for status in (0, 1):
            ss = {v[2] for v in rep.violations if v[:2] == (element, status)}
            assert ss == set(grid.own_times)


def test_condition_a_uses_declared_per_slot_envelopes():
    good = EnvelopePair(phi=ConstantRate(0.5), q=ConstantRate(2.0))
    field = _uniform_field(ConstantRate(1.0), envelope=good)
    assert check_condition_a(field).passed
    assert not check_condition_a(_uniform_field(ConstantRate(1.0))).passed  # none declared


# -- condition b: divergence plus k-th tail moment ------------------------------


def test_condition_b_constant_envelope():
    rep = check_condition_b(EnvelopePair(ConstantRate(1.0), ConstantRate(2.0), k=2))
    assert rep.passed and rep.hazard_diverges and rep.tail_converges
    assert rep.tail_value == pytest.approx(1.0, rel=1e-6)  # integral of x e^{-x}


def test_condition_b_slowly_divergent_hazard_passes():
    rep = check_condition_b(EnvelopePair(HyperbolicRate(3.0), ConstantRate(3.0), k=2))
    assert rep.passed
    oracle, _ = integrate.quad(lambda x: x * (1 + x) ** -3.0, 0, np.inf)
    assert rep.tail_value == pytest.approx(oracle, rel=1e-6)
    assert rep.tail_value == pytest.approx(0.5, rel=1e-6)


def test_condition_b_insufficient_decay_fails_tail_clause():
    rep = check_condition_b(EnvelopePair(HyperbolicRate(1.5), ConstantRate(1.5), k=2))
    assert not rep.passed
    assert rep.hazard_diverges          # the integral of 1.5/(1+s) still diverges
    assert not rep.tail_converges       # x (1+x)^{-1.5} is not integrable
    assert rep.tail_value is None


def test_condition_b_integrable_hazard_fails_divergence_clause():
    rate = CallableRate(lambda s: 1.0 / (1.0 + s) ** 2, bound=1.0)
    rep = check_condition_b(EnvelopePair(rate, ConstantRate(1.0), k=2))
    assert not rep.hazard_diverges


# -- condition c: upper-envelope mass near zero ----------------------------------


def test_condition_c_small_radius_passes():
    rep = check_condition_c(EnvelopePair(ConstantRate(1.0), ConstantRate(2.0),
                                         epsilon=0.1))
    assert rep.passed
    assert rep.integral == pytest.approx(0.2, abs=1e-9)
    assert rep.largest_passing_epsilon == 0.1


def test_condition_c_large_radius_fails_with_boundary():
    rep = check_condition_c(EnvelopePair(ConstantRate(1.0), ConstantRate(2.0),
                                         epsilon=0.6))
    assert not rep.passed
    assert rep.integral == pytest.approx(1.2, abs=1e-9)
    assert rep.largest_passing_epsilon < 0.5
    assert rep.largest_passing_epsilon > 0.5 - 1e-6


def test_condition_c_integrable_singularity():
    q = CallableRate(lambda s: 0.5 / math.sqrt(s) if s > 0 else math.inf)
    rep = check_condition_c(EnvelopePair(ConstantRate(1.0), q, epsilon=0.25))
    assert rep.passed
    assert rep.integral == pytest.approx(0.5, rel=1e-6)


# -- condition d: delayed positivity ----------------------------------------------


def test_condition_d_everywhere_positive():
    rep = check_condition_d(EnvelopePair(ConstantRate(1.0), ConstantRate(2.0),
                                         t_delay=0.0))
    assert rep.passed


def test_condition_d_delayed_positivity_passes_with_matching_threshold():
    phi = PiecewiseRate((2.0,), (0.0, 1.0))
    rep = check_condition_d(EnvelopePair(phi, ConstantRate(2.0), t_delay=2.0))
    assert rep.passed


def test_condition_d_fails_inside_dead_zone():
    phi = PiecewiseRate((2.0,), (0.0, 1.0))
    grid = tuple(np.linspace(1.05, 3.0, 20))
    rep = check_condition_d(EnvelopePair(phi, ConstantRate(2.0), t_delay=1.0),
                            grid=grid)
    assert not rep.passed
    assert all(1.0 < s < 2.0 for s in rep.violations)


# -- coherence across checks --------------------------------------------------------


@pytest.mark.parametrize("phi,k", [(ConstantRate(1.0), 2),
                                   (HyperbolicRate(3.5), 3),
                                   (HyperbolicRate(4.5), 4)])
def test_moment_condition_coherence(phi, k):
    env = EnvelopePair(phi, ConstantRate(phi.sup_rate()), k=k)
    assert check_condition_b(env).passed
    induced = GeneralizedIntensity(phi)
    for ell in range(1, k):
        assert math.isfinite(moment(induced, ell))


def test_envelope_ordering_of_induced_distributions():
    # higher hazard -> stochastically smaller -> larger distribution function
    env = EnvelopePair(HyperbolicRate(1.0), ConstantRate(1.0))
    law = PhaseLaw(GeneralizedIntensity(HyperbolicRate(1.0)), envelope=env)
    field = IntensityField.symmetric(law, law)
    assert check_condition_a(field).passed
    slice_gi = GeneralizedIntensity(HyperbolicRate(1.0))
    for s in np.geomspace(0.01, 20.0, 25):
        upper = env.upper_cdf(float(s))
        lower = env.lower_cdf(float(s))
        mid = eval_cdf(slice_gi, float(s))
        assert upper >= mid - 1e-12 >= lower - 1e-12
        assert upper >= lower


def test_envelope_moment_vector_entries():
    env = EnvelopePair(ConstantRate(2.0), ConstantRate(2.0), k=2)
    law = PhaseLaw(GeneralizedIntensity(ConstantRate(2.0)), envelope=env)
    field = IntensityField.symmetric(law, law)
    mv = envelope_moment_vector(field, 1.0)
    assert set(mv.entries) == {(1, 0), (1, 1), (2, 0), (2, 1)}
    for v in mv.entries.values():
        assert v == pytest.approx(0.5, rel=1e-8)
