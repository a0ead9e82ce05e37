"""Data-driven Koopman-generator observers with LMI-certified convergence rates."""

from .core import (Dictionary, GeneratorSurrogate, Observable, OutputMap, SampleSet,
                   StateSelector, dictionary_from_spec, lift, lift_gradient, lift_reduced,
                   linear_dictionary, monomial_dictionary, pseudoinverse, spectral_abscissa)
from .edmd import build_data_matrices, empirical_remainder_bound, fit_generator, identify
from .bounds import BoundReport, build_bound_report
from .lmi import (LmiProblem, SynthesisResult, assemble_lmi, certify, lyapunov_decrease_check,
                  preflight_check, solve_feasibility, synthesize)
from .sim import SimulationRecord, fit_decay_rate, integrate_plant, run_observer, run_observer_batch
from .systems import BenchmarkSystem, CstrParameters, cstr_chain, example_a, sample_uniform

__version__ = "0.1.0"
