"""Dyadic lattices, adapted Haar systems and weighted norms of dyadic shifts."""
from . import kernels
from .errors import (ConfigError, CsvParseError, DegenerateMetric, DomainViolation, DyadicLabError,
                     InvalidArgument, NotIntegrable, ResourceLimit)
from .haar import HaarCoefficients, HaarSystem, build_haar, decompose, forward_transform, inverse_transform
from .lattice import (Cube, Lattice, MetricSpace, build_christ_lattice, build_interval_lattice, descendants_at,
                      verify_lattice)
from .measure import (Measure, Weight, a2_characteristic, cascade_weight, constant_weight, counting,
                      default_measure, doubling_constant, dual_weight, lebesgue, oscillation, power_weight)
from .norms import (CarlesonSequence, NormResult, bilinear_form, carleson_constant, carleson_embedding_check,
                    duality_probe, maximal_function, weighted_norm)
from .report import CheckRecord, VerificationReport
from .shift import ShiftOperator, apply, apply_adjoint, assemble_dense, build_shift

__version__ = "0.1.0"
