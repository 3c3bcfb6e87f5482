"""Iterative bound-weighted fusion of the FD coarse angle and group picks.

Each iteration re-evaluates the per-part variance bounds at the current fused
angle, turns their inverses into convex weights, and recombines the fixed
inputs {theta_fd, theta_c,1..P}. The inputs never change across iterations;
only the weights are refreshed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .arrays import ArrayGeometry
from .clustering import TrueSolutionSet
from .crlb import FD_PART, VARIANT_FISHER, CrlbContext, crlb_part


class FusionError(RuntimeError):
    """Fusion produced a non-finite intermediate; carries the partial trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


@dataclass
class FusionWeights:
    w_fd: float
    w_groups: list

    @property
    def total(self) -> float:
        return self.w_fd + sum(self.w_groups)


@dataclass
class IwfConfig:
    tolerance_deg: float = 1e-4
    max_iterations: int = 20
    crlb_variant: str = VARIANT_FISHER
    relative_tolerance: bool = False  # compare |delta|/max(1,|angle|) instead

    def __post_init__(self):
        if self.tolerance_deg <= 0:
            raise ValueError("tolerance_deg must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class FusedEstimate:
    angle_deg: float
    iterations_used: int
    trace: list = field(default_factory=list)  # (angle_deg, FusionWeights) per iterate
    converged: bool = False


def compute_weights(theta_deg: float, geometry: ArrayGeometry, snr_linear: float,
                    snapshots: int = 1, variant: str = VARIANT_FISHER) -> FusionWeights:
    """Convex weights proportional to inverse per-part variance bounds at theta.

    Solves the equality-constrained minimum-variance combination: the weight
    of each part is its inverse bound over the summed inverse bounds, so the
    weights are positive and sum to one.
    """
    if not abs(theta_deg) < 90.0:
        raise ValueError("theta_deg must lie in (-90, 90)")
    ctx = CrlbContext(theta_deg=theta_deg, snr_linear=snr_linear,
                      snapshots=snapshots, geometry=geometry)
    inv_fd = 1.0 / crlb_part(ctx, FD_PART, variant)
    inv_groups = [1.0 / crlb_part(ctx, p, variant) for p in range(geometry.num_groups)]
    total = inv_fd + sum(inv_groups)
    return FusionWeights(w_fd=inv_fd / total, w_groups=[g / total for g in inv_groups])


def iwf_fuse(theta_fd_deg: float, true_set: TrueSolutionSet, geometry: ArrayGeometry,
             snr_linear: float, snapshots: int, config: IwfConfig | None = None,
             exhaust: bool = False) -> FusedEstimate:
    """Run the weighted-fusion iteration starting from the FD coarse angle.

    Stops when successive fused angles differ by at most the configured
    tolerance, or after max_iterations updates. ``exhaust=True`` ignores the
    tolerance and always performs exactly max_iterations updates (used by the
    iteration-count sweep).
    """
    if config is None:
        config = IwfConfig()
    if len(true_set.angles_deg) != geometry.num_groups:
        raise ValueError("true-solution set size does not match the group count")

    inputs = np.array([theta_fd_deg] + list(true_set.angles_deg), dtype=float)
    current = float(theta_fd_deg)
    trace = []
    converged = False
    iterations = 0
    for _ in range(config.max_iterations):
        try:
            weights = compute_weights(current, geometry, snr_linear, snapshots,
                                      config.crlb_variant)
        except ValueError as exc:
            raise FusionError(f"weight evaluation failed at {current} deg: {exc}", trace)
        trace.append((current, weights))
        nxt = weights.w_fd * inputs[0] + float(np.dot(weights.w_groups, inputs[1:]))
        if not np.isfinite(nxt):
            raise FusionError(f"non-finite fused angle at iteration {iterations + 1}", trace)
        delta = abs(nxt - current)
        if config.relative_tolerance:
            delta = delta / max(1.0, abs(current))
        current = float(nxt)
        iterations += 1
        if not exhaust and delta <= config.tolerance_deg:
            converged = True
            break
    # final iterate logged with the weights it would use next
    trace.append((current, compute_weights(current, geometry, snr_linear, snapshots,
                                           config.crlb_variant)))
    return FusedEstimate(angle_deg=current, iterations_used=iterations,
                         trace=trace, converged=converged)
