"""Subspace estimation and Root-MUSIC for the FD subarray and the groups.

The FD subarray yields one coarse angle. Each group's combined channels form
a virtual array whose element spacing is M_p*d, so its Root-MUSIC phase wraps
modulo 2*pi and expands into M_p candidate angles; exactly one matches the
emitter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _polyroots
from .arrays import ArrayGeometry, SnapshotSet


class EstimationFailure(RuntimeError):
    """Root selection produced no angle in the visible region.

    Callers treat the trial as an outlier rather than aborting a sweep.
    """


@dataclass
class NoiseSubspace:
    """Orthonormal basis of the noise subspace plus the full eigenvalue list."""

    basis: np.ndarray          # channels x (channels - num_sources)
    eigenvalues: np.ndarray    # nonincreasing


@dataclass
class RootMusicResult:
    selected_root: complex
    all_roots: np.ndarray
    eta: float | None = None        # wrapped virtual-array phase, groups only
    theta_deg: float | None = None  # recovered angle, FD only


@dataclass
class CandidateSet:
    """Ambiguous DOA hypotheses of one group, sorted ascending."""

    group: int
    angles_deg: list = field(default_factory=list)
    ambiguity_indices: list = field(default_factory=list)


def sample_covariance(snapshots) -> np.ndarray:
    """Unweighted sample covariance R = (1/H) * Y Y^H.

    Accepts a SnapshotSet or a raw channels x H complex matrix.
    """
    data = snapshots.data if isinstance(snapshots, SnapshotSet) else np.asarray(snapshots, dtype=complex)
    if data.ndim != 2 or data.shape[1] == 0:
        raise ValueError("need at least one snapshot column")
    r = data @ data.conj().T / data.shape[1]
    # symmetrize to kill roundoff skew; keeps eigh honest
    return (r + r.conj().T) / 2.0


def noise_subspace(cov: np.ndarray, num_sources: int = 1) -> NoiseSubspace:
    """Eigenvectors of the (dim - num_sources) smallest eigenvalues of cov."""
    cov = np.asarray(cov)
    dim = cov.shape[0]
    if dim <= num_sources:
        raise ValueError(f"covariance dimension {dim} must exceed num_sources {num_sources}")
    vals, vecs = np.linalg.eigh(cov)  # ascending
    return NoiseSubspace(basis=vecs[:, : dim - num_sources], eigenvalues=vals[::-1].copy())


def solve_polynomial_roots(coeffs) -> np.ndarray:
    """All roots of a polynomial given ascending-degree coefficients.

    Low degrees go to the companion-matrix eigenvalue method; high degrees use
    a residual-gated Aberth-Ehrlich iteration with the companion method as
    fallback, so every returned root meets the relative-residual bound either
    way.
    """
    coeffs = np.atleast_1d(np.asarray(coeffs, dtype=complex))
    nz = np.nonzero(coeffs)[0]
    if nz.size == 0:
        raise ValueError("all-zero polynomial has no well-defined roots")
    trimmed = coeffs[: nz[-1] + 1]
    if trimmed.size == 1:
        return np.array([], dtype=complex)
    return _polyroots.all_roots(trimmed)


def _projector_polynomial(basis: np.ndarray) -> np.ndarray:
    """Ascending coefficients of z^(n-1) * a^T(1/z) B a(z) with B = E E^H.

    The coefficient of z^(l + n - 1) is the sum of B's l-th diagonal.
    """
    b = basis @ basis.conj().T
    n = b.shape[0]
    return np.array([np.trace(b, offset=l) for l in range(-(n - 1), n)], dtype=complex)


def _refine_if_paired(coeffs: np.ndarray, roots: np.ndarray, z: complex,
                      pair_tol: float = 1e-4) -> complex:
    """Re-extract the selected root from its refined quadratic factor when it
    belongs to a close conjugate-reciprocal pair.

    Near-noiseless spectra split their on-circle double root by ~1e-8, where
    individually computed roots carry sqrt(eps)-level angle error; the pair's
    quadratic factor is well conditioned and restores the angle.
    """
    others = roots[np.abs(roots - z) > 0]
    if others.size == 0:
        return z
    partner = others[np.argmin(np.abs(others - z))]
    if abs(partner - z) > pair_tol * max(1.0, abs(z)):
        return z
    r1, r2 = _polyroots.refine_root_pair(coeffs, z, partner)
    # keep the member on the selected side of the circle when distinguishable
    inside = [r for r in (r1, r2) if abs(r) <= 1.0]
    return inside[0] if inside else min((r1, r2), key=abs)


def _select_root(roots: np.ndarray, keep=None) -> complex:
    """Inside-unit-circle root closest to the circle.

    Among roots with |z| <= 1 (optionally filtered by ``keep``), pick the one
    with maximal modulus; break ties toward smaller |arg z|.
    """
    cands = roots[np.abs(roots) <= 1.0 + 1e-12]
    if keep is not None:
        cands = cands[keep(cands)]
    if cands.size == 0:
        raise EstimationFailure("no candidate root inside the unit circle")
    order = np.lexsort((np.abs(np.angle(cands)), -np.abs(cands)))
    return complex(cands[order[0]])


def fd_root_music(subspace: NoiseSubspace, geometry: ArrayGeometry) -> RootMusicResult:
    """Coarse angle from the FD subarray's noise subspace.

    Roots the degree 2(M-1) polynomial of the projected spectrum, keeps the
    inside-circle root nearest the circle whose phase maps into [-1, 1] under
    sin, and converts it to degrees.
    """
    if subspace.basis.shape[0] != geometry.fd_antennas:
        raise ValueError("subspace does not match the FD channel count")
    coeffs = _projector_polynomial(subspace.basis)
    roots = solve_polynomial_roots(coeffs)
    ratio = geometry.wavelength / (2.0 * np.pi * geometry.element_spacing)

    def feasible(z):
        return np.abs(np.angle(z)) * ratio <= 1.0

    try:
        z = _select_root(roots, keep=feasible)
    except EstimationFailure:
        raise EstimationFailure("FD root-MUSIC: no root maps into the visible region")
    z = _refine_if_paired(coeffs, roots, z)
    theta = np.rad2deg(np.arcsin(np.angle(z) * ratio))
    return RootMusicResult(selected_root=z, all_roots=roots, theta_deg=float(theta))


def group_root_music(subspace: NoiseSubspace, geometry: ArrayGeometry, p: int) -> RootMusicResult:
    """Wrapped virtual-array phase of group p from its K_p-channel subspace.

    Only the integer-power projector polynomial is rooted; the rational
    prefactor of the group spectrum has no zeros on the unit circle away from
    z = 1, so the spectrum's nulls are exactly the projector's.
    """
    kp = geometry.subarrays_per_group[p]
    if subspace.basis.shape[0] != kp:
        raise ValueError(f"subspace does not match group {p} channel count {kp}")
    coeffs = _projector_polynomial(subspace.basis)
    if not np.any(coeffs):
        raise EstimationFailure(f"group {p}: degenerate (all-zero) projector polynomial")
    roots = solve_polynomial_roots(coeffs)
    z = _select_root(roots)
    return RootMusicResult(selected_root=z, all_roots=roots, eta=float(np.angle(z)))


def expand_candidates(eta: float, geometry: ArrayGeometry, p: int) -> CandidateSet:
    """All angles consistent with a wrapped virtual-array phase.

    Enumerates every integer q with x_q = lambda*(eta + 2*pi*q)/(2*pi*M_p*d)
    in [-1, 1]; candidate angles are arcsin(x_q). With d = lambda/2 this gives
    M_p angles in the interior case. Values with |x_q| > 1 are excluded, never
    clamped; if both endpoints +-1 occur (the same wrapped phase), the +90
    duplicate is dropped.
    """
    mp = geometry.antennas_per_subarray[p]
    scale = geometry.wavelength / (2.0 * np.pi * mp * geometry.element_spacing)
    # q bounds from |x_q| <= 1, padded one step to be safe against rounding
    lo = int(np.floor((-1.0 / scale - eta) / (2.0 * np.pi))) - 1
    hi = int(np.ceil((1.0 / scale - eta) / (2.0 * np.pi))) + 1
    qs, angles = [], []
    seen_minus_one = False
    for q in range(lo, hi + 1):
        x = scale * (eta + 2.0 * np.pi * q)
        if abs(x) > 1.0:
            continue
        if x == -1.0:
            seen_minus_one = True
        if x == 1.0 and seen_minus_one:
            continue  # same wrapped phase as sin = -1
        qs.append(q)
        angles.append(float(np.rad2deg(np.arcsin(x))))
    return CandidateSet(group=p, angles_deg=angles, ambiguity_indices=qs)


def wrapped_group_phase(geometry: ArrayGeometry, p: int, theta_deg: float) -> float:
    """Forward phase map: wrap((2*pi/lambda) * M_p * d * sin(theta)) in (-pi, pi]."""
    mp = geometry.antennas_per_subarray[p]
    eta = 2.0 * np.pi * mp * geometry.element_spacing * np.sin(np.deg2rad(theta_deg)) / geometry.wavelength
    return float(np.angle(np.exp(1j * eta)))
