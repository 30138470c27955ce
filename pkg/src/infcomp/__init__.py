"""Infinite inner compositions and the difference equations they solve."""

from .composer import (DomainSpec, LeftStrip, Rect, SDisk, SolveResult, SummabilityReport,
                       TruncationPolicy, Verdict, ZDisk, compose_maps, infinite_compose,
                       inner_compose, summability_report, sup_norm_estimate, tail_distance)
from .dsolve import (ProblemSpec, builtin, builtin_names, gamma_solve, indefinite_sum,
                     periodic_perturbation, residual_functional, telescoping_check)
from .errors import *  # noqa: F401,F403
from .expr import diff, evaluate, parse, to_text

__version__ = "0.1.0"
