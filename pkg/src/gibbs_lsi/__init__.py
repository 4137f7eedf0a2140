"""Numerical workbench for log-Sobolev constants of lattice spin systems with
power-law phase and non-quadratic nearest-neighbor interactions."""
from .errors import (ConfigError, ConvergenceDiagnosticError, DegenerateInput, DivergenceError,
                     EvaluationError, FeasibilityError, GibbsLSIError, InsufficientDecay,
                     MissingGradient, ModelRejected, OutOfRange)
from .functionals import (ConstantLedger, DiscreteMeasure, GridFunction, covariance,
                          covariance_bound_check, dirichlet, entropic_bound, entropy,
                          lattice_family)
from .measures import (ConditionalMeasure, Hamiltonian, build_conditional, build_gibbs_proxy,
                       dlr_check, expectation)
from .model import (CouplingMatrix, HypothesisScan, Interaction, LatticeTorus, ModelSpec,
                    Phase, SiteGeometry, check_hypotheses, region_check)
from .quadrature import Grid1D, TensorGrid, choose_truncation, integrate

__version__ = "0.1.0"
