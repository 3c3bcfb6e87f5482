"""One-trial front end shared by the experiment harness and dataset generation:
snapshots -> covariances -> Root-MUSIC -> candidate expansion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arrays import AnalogCombiner, ArrayGeometry, SourceConfig, synthesize_snapshots
from .rootmusic import (
    expand_candidates,
    fd_root_music,
    group_root_music,
    noise_subspace,
    sample_covariance,
)


@dataclass
class FrontEndResult:
    theta_fd_deg: float
    candidate_sets: list  # CandidateSet per group, in group order


def run_front_end(geometry: ArrayGeometry, source: SourceConfig,
                  combiner: AnalogCombiner | None = None, seed=0,
                  noiseless: bool = False) -> FrontEndResult:
    """Synthesize one observation and estimate the coarse angle plus every
    group's ambiguous candidate set. Raises EstimationFailure when the FD
    root selection finds no angle in the visible region.
    """
    fd, groups = synthesize_snapshots(geometry, source, combiner, seed, noiseless)
    fd_sub = noise_subspace(sample_covariance(fd))
    theta_fd = fd_root_music(fd_sub, geometry).theta_deg
    cand_sets = []
    for p, snap in enumerate(groups):
        sub = noise_subspace(sample_covariance(snap))
        eta = group_root_music(sub, geometry, p).eta
        cand_sets.append(expand_candidates(eta, geometry, p))
    return FrontEndResult(theta_fd_deg=float(theta_fd), candidate_sets=cand_sets)
