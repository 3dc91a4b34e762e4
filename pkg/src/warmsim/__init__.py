"""Warm-standby reliability simulation and convergence diagnostics."""

from .rates import (CallableRate, ConstantRate, HyperbolicRate, MassDeficitError,
                    PiecewiseRate, RateFunction, WeibullRate, ZERO_RATE)
from .hazards import (Atom, GeneralizedIntensity, InfiniteMomentError,
                      atoms_from_jumps, eval_cdf, eval_cdf_left, moment, sample,
                      sample_batch)
from .conditions import (ConditionGrid, EnvelopePair, MomentVector,
                         check_condition_a, check_condition_b,
                         check_condition_c, check_condition_d,
                         envelope_moment_vector)
from .kernel import (AvailabilityCurve, CallableModulator, ElementPhase, Event,
                     IntensityField, NO_MODULATION, Phase, PhaseLaw,
                     StatusModulator, SwitchingDelay, SwitchingPolicy,
                     SystemState, Trajectory, advance, availability_indicator,
                     both_working_state, longrun_availability, simulate,
                     state_at, status_occupancy, transient_availability)
from .coupling import (BinningSpec, CouplingOutcome, EnvelopeFit, FitError,
                       FitRejectedError, TVCurve, estimate_coupling_tail,
                       fit_envelope, marginal_tv, run_coupled, sample_states_at)
from .oracles import (CTMCSpec, OvershootReport, ReducibleChainError,
                      availability_from_stationary, ctmc_from_field,
                      ctmc_stationary, ctmc_transient, ks_statistic,
                      lorden_overshoot_check)
from .streams import stream_fingerprint, substream

__version__ = "0.1.0"
