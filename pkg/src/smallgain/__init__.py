"""Small-gain certificates and simulations for infinite networks of ODEs."""
from .gainop import (BandedKernel, Certificate, GainOperator, GainSpec, GeometricKernel, SpecError, analyze,
                     compute_mu, spectral_radius, tridiagonal_spec)
from .netsim import DistPowV, InputSignal, NetworkSpec, QuadV, SubsystemSpec, integrate, truncate
from .rules import BlockDims, BlockRule, ScalarSeq
from .seqspace import Box, Diagonal, Full, Origin, Point, SetSpec, TruncSeq, set_dist

__version__ = "0.1.0"

__all__ = [
    "BandedKernel", "GeometricKernel", "GainSpec", "GainOperator", "Certificate", "SpecError",
    "analyze", "compute_mu", "spectral_radius", "tridiagonal_spec",
    "NetworkSpec", "SubsystemSpec", "QuadV", "DistPowV", "InputSignal", "integrate", "truncate",
    "BlockDims", "BlockRule", "ScalarSeq",
    "Origin", "Full", "Point", "Box", "Diagonal", "SetSpec", "TruncSeq", "set_dist",
]
