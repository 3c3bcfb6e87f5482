"""True-solution selection from each group's ambiguous candidate set.

The FD coarse angle serves as the reference sample point. Two selection rules
are kept: minimum squared angular distance (GMinD) and maximum cosine
similarity between unit direction vectors (GMaxCS). For angles confined to
(-90, 90) the two pick the same candidate; both stay available so sweeps can
report them side by side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rootmusic import CandidateSet

GMIND = "GMinD"
GMAXCS = "GMaxCS"


@dataclass
class TrueSolutionSet:
    """One selected angle per group, in group order."""

    angles_deg: list
    reference_deg: float
    method: str


def gmind_select(reference_deg: float, candidates: CandidateSet) -> float:
    """Candidate minimizing |reference - candidate|^2; ties go to the smaller angle."""
    angles = np.asarray(candidates.angles_deg, dtype=float)
    if angles.size == 0:
        raise ValueError("empty candidate set")
    # candidates are sorted ascending, argmin takes the first minimum
    return float(angles[np.argmin((reference_deg - angles) ** 2)])


def gmaxcs_select(reference_deg: float, candidates: CandidateSet) -> float:
    """Candidate maximizing cosine similarity of 2-D unit direction vectors.

    u = (cos ref, sin ref), v_q = (cos cand, sin cand); u . v_q = cos(ref - cand).
    Ties go to the smaller angle.
    """
    angles = np.asarray(candidates.angles_deg, dtype=float)
    if angles.size == 0:
        raise ValueError("empty candidate set")
    ref = np.deg2rad(reference_deg)
    cand = np.deg2rad(angles)
    sim = np.cos(ref) * np.cos(cand) + np.sin(ref) * np.sin(cand)
    return float(angles[np.argmax(sim)])


_SELECTORS = {GMIND: gmind_select, GMAXCS: gmaxcs_select}


def cluster_true_set(reference_deg: float, candidate_sets, method: str = GMIND) -> TrueSolutionSet:
    """Apply the chosen selector to every group's candidate set, in order."""
    try:
        select = _SELECTORS[method]
    except KeyError:
        raise ValueError(f"unknown clustering method {method!r}") from None
    picked = [select(reference_deg, cs) for cs in candidate_sets]
    return TrueSolutionSet(angles_deg=picked, reference_deg=reference_deg, method=method)
