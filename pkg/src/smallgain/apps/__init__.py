"""Application transformers: clock augmentation, consensus error coordinates, observers."""
from .consensus import (ConsensusSpec, average_drift, build_consensus_error_system, build_original_system,
                        consensus_metrics, to_error_coordinates, weighted_average, write_consensus_csv)
from .observer import ObserverSpec, build_observer_composite, observer_error_decay
from .timevarying import ClockAugmented, clock_augment, simulate_from, ueiss_check

__all__ = [
    "ClockAugmented", "clock_augment", "simulate_from", "ueiss_check",
    "ConsensusSpec", "build_consensus_error_system", "build_original_system",
    "consensus_metrics", "to_error_coordinates", "weighted_average", "average_drift", "write_consensus_csv",
    "ObserverSpec", "build_observer_composite", "observer_error_decay",
]
