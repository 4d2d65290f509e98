"""Timed-automaton abstractions of ODEs from Lyapunov level-set slices."""

from .automaton import TimedAutomaton, build_cell_automaton, build_slice_automaton, parallel_compose
from .bounds import SliceBounds, slice_bounds
from .oracle import completeness_check, flow, mc_soundness_check, refinement_experiment
from .partition import SliceFamily, build_partition, locate, refine
from .problem import build, load_problem
from .reach import concretize, reach
from .system import QuadraticLyapunov, VectorField, solve_lyapunov_equation, verify_lyapunov

__version__ = "0.1.0"

__all__ = [
    "QuadraticLyapunov", "SliceBounds", "SliceFamily", "TimedAutomaton", "VectorField",
    "build", "build_cell_automaton", "build_partition", "build_slice_automaton", "completeness_check",
    "concretize", "flow", "load_problem", "locate", "mc_soundness_check", "parallel_compose", "reach",
    "refine", "refinement_experiment", "slice_bounds", "solve_lyapunov_equation", "verify_lyapunov",
]
