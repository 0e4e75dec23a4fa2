"""Signed chord-length, radii and distance distributions of 3D bodies by Monte Carlo.

The modules build on each other:

* :mod:`~signedchord.geometry`: CSG solids, line/interval intersection, analytic metrics;
* :mod:`~signedchord.sampling`: reproducible substreams and the line, ray and point measures;
* :mod:`~signedchord.signedhist`: charge-weighted histograms and moment accumulators;
* :mod:`~signedchord.estimators`: signed radii/chord decompositions and distribution estimators;
* :mod:`~signedchord.dirac`: the Dirac chord functional by four routes;
* :mod:`~signedchord.nonuniform`: piecewise-constant densities and optical lengths;
* :mod:`~signedchord.paths`: kink pairing and scattering walks;
* :mod:`~signedchord.cli`: the ``signedchord`` command.
"""
__version__ = "0.1.0"

from .geometry import Body, IntervalSet, box, intersect_line, load_body, metrics, shell, sphere
from .sampling import DEFAULT_SEED, RandomSource, StreamPlan
from .signedhist import MomentAccumulator, SignedHistogram
from .estimators import (chord_decompose, estimate_chords, estimate_distances, estimate_radii,
                         radii_decompose, signed_cld_from_gamma)
from .dirac import TestFunction, cross_check, dirac_chords, dirac_gamma, dirac_pairs, dirac_radii
from .nonuniform import DensityField, dirac_optical, estimate_G, estimate_mu_tilde, optical_length
from .paths import WalkConfig, kink_pair_check, mean_path_report, simulate_entering_walk

__all__ = [
    "Body", "IntervalSet", "box", "intersect_line", "load_body", "metrics", "shell", "sphere",
    "DEFAULT_SEED", "RandomSource", "StreamPlan", "MomentAccumulator", "SignedHistogram",
    "chord_decompose", "estimate_chords", "estimate_distances", "estimate_radii",
    "radii_decompose", "signed_cld_from_gamma", "TestFunction", "cross_check", "dirac_chords",
    "dirac_gamma", "dirac_pairs", "dirac_radii", "DensityField", "dirac_optical", "estimate_G",
    "estimate_mu_tilde", "optical_length", "WalkConfig", "kink_pair_check", "mean_path_report",
    "simulate_entering_walk",
]
