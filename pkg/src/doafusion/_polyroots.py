"""Polynomial rooting backends.

High-degree spectra are rooted by a vectorized Aberth-Ehrlich simultaneous
iteration; anything that fails its residual gate falls back to the
companion-matrix eigenvalue method, so callers always receive roots meeting
the residual bound. Low degrees go straight to the companion method, which is
cheap there.

The iteration is tuned for the self-inversive spectra this package produces
(roots in conjugate-reciprocal pairs hugging the unit circle): points start
on two interleaved rings bracketing the circle, points outside the circle are
updated through the reversed polynomial at 1/z to avoid overflow, and
polynomials are evaluated by blocked (Estrin-style) schemes to keep the
per-sweep cost flat.
"""

from __future__ import annotations

import numpy as np

# degree at which the companion-matrix eigensolve becomes the bottleneck
ABERTH_MIN_DEGREE = 64
RESIDUAL_TOL = 1e-6   # relative residual every returned root must satisfy
_CHUNK = 16


def _horner(c_desc: np.ndarray, z: np.ndarray) -> np.ndarray:
    p = np.full_like(z, c_desc[0])
    for a in c_desc[1:]:
        p = p * z + a
    return p


def relative_residuals(coeffs_asc: np.ndarray, roots: np.ndarray) -> np.ndarray:
    """|p(z)| / (||c|| * max(1,|z|)^deg), evaluated overflow-safely.

    For |z| > 1 the value is computed as |p_rev(1/z)| / ||c|| with the
    reversed-coefficient polynomial, which is algebraically identical.
    """
    c = np.asarray(coeffs_asc, dtype=complex)
    z = np.asarray(roots, dtype=complex)
    scale = np.linalg.norm(c)
    out = np.empty(z.shape, dtype=float)
    inside = np.abs(z) <= 1.0
    if inside.any():
        out[inside] = np.abs(_horner(c[::-1], z[inside])) / scale
    if (~inside).any():
        out[~inside] = np.abs(_horner(c, 1.0 / z[~inside])) / scale
    return out


class _BlockPoly:
    """Blocked evaluator returning p(z) and p'(z) with O(deg/chunk) kernel calls."""

    def __init__(self, coeffs_asc: np.ndarray):
        self.n = len(coeffs_asc) - 1
        self.cmat = self._blocks(coeffs_asc)
        deriv = coeffs_asc[1:] * np.arange(1, self.n + 1)
        self.dmat = self._blocks(deriv) if self.n >= 1 else None

    @staticmethod
    def _blocks(c_asc: np.ndarray) -> np.ndarray:
        pad = (-len(c_asc)) % _CHUNK
        padded = np.concatenate([c_asc, np.zeros(pad, dtype=complex)])
        return padded.reshape(-1, _CHUNK)

    @staticmethod
    def _eval_blocks(cmat: np.ndarray, powers: np.ndarray, zc: np.ndarray) -> np.ndarray:
        vals = powers @ cmat.T  # (npts, nblocks)
        acc = vals[:, -1]
        for b in range(cmat.shape[0] - 2, -1, -1):
            acc = acc * zc + vals[:, b]
        return acc

    def eval_pair(self, z: np.ndarray):
        powers = np.empty((z.size, _CHUNK), dtype=complex)
        powers[:, 0] = 1.0
        for j in range(1, _CHUNK):
            powers[:, j] = powers[:, j - 1] * z
        zc = powers[:, -1] * z  # z^chunk
        p = self._eval_blocks(self.cmat, powers, zc)
        dp = self._eval_blocks(self.dmat, powers, zc)
        return p, dp


def _two_ring_start(n: int, ring: float = 0.9) -> np.ndarray:
    """Interleaved inside/outside rings bracketing the unit circle."""
    half = n // 2
    z = np.empty(n, dtype=complex)
    z[:half] = ring * np.exp(1j * (2.0 * np.pi * np.arange(half) / half + 0.4))
    rest = n - half
    z[half:] = (1.0 / ring) * np.exp(
        1j * (2.0 * np.pi * np.arange(rest) / rest + 0.4 + np.pi / max(half, 1)))
    return z


def aberth_roots(coeffs_asc: np.ndarray, max_sweeps: int = 120):
    """All roots by Aberth-Ehrlich. Returns (roots, converged_flag).

    Deterministic: fixed initial configuration, no randomness. Points outside
    the unit circle take their Newton correction from the reversed polynomial
    at w = 1/z: N(z) = z*q(w) / (n*q(w) - w*q'(w)).
    """
    c = np.asarray(coeffs_asc, dtype=complex)
    monic = c / c[-1]
    n = len(c) - 1
    fwd = _BlockPoly(monic)
    rev = _BlockPoly(monic[::-1].copy())
    z = _two_ring_start(n)

    newton = np.empty(n, dtype=complex)
    settled = 0
    for _ in range(max_sweeps):
        inside = np.abs(z) <= 1.0
        with np.errstate(all="ignore"):
            if inside.any():
                p, dp = fwd.eval_pair(z[inside])
                newton[inside] = np.where(dp != 0, p / dp, 0.05)
            if (~inside).any():
                w = 1.0 / z[~inside]
                q, dq = rev.eval_pair(w)
                den = n * q - w * dq
                newton[~inside] = np.where(den != 0, z[~inside] * q / den, 0.05)
            newton = np.where(np.isfinite(newton), newton, 0.05)
            diff = z[:, None] - z[None, :]
            inv = np.where(diff != 0, 1.0 / np.where(diff == 0, 1.0, diff), 0.0)
            den = 1.0 - newton * inv.sum(axis=1)
            step = np.where(np.abs(den) > 1e-300, newton / den, newton)
        step = np.where(np.isfinite(step), step, 0.05)
        z = z - step
        rel = np.abs(step) / np.maximum(1.0, np.abs(z))
        settled = settled + 1 if rel.max() <= 1e-14 else 0
        if settled >= 2:
            break
    ok = bool(np.all(relative_residuals(c, z) <= RESIDUAL_TOL)) and not _has_duplicates(z)
    return z, ok


def _has_duplicates(z: np.ndarray, tol: float = 1e-4) -> bool:
    """Near-coincident returned points send the call to the fallback solver.

    They mean one of two things, and both want the companion method: either
    the iteration collapsed two points onto one root and lost another (the
    residual gate cannot see that), or the spectrum genuinely has an
    ultra-close root pair (noise-free covariances split their on-circle
    double root by ~1e-8) where the simultaneous iteration resolves the pair
    too coarsely for the angle precision downstream. Noisy spectra keep their
    root pairs several orders of magnitude wider than the threshold, so the
    Monte Carlo path stays on the fast solver.
    """
    d = np.abs(z[:, None] - z[None, :])
    np.fill_diagonal(d, np.inf)
    return bool(np.any(d.min(axis=1) <= tol * np.maximum(1.0, np.abs(z))))


def companion_roots(coeffs_asc: np.ndarray) -> np.ndarray:
    """Companion-matrix eigenvalue rooting (np.roots)."""
    return np.roots(np.asarray(coeffs_asc, dtype=complex)[::-1])


def refine_root_pair(coeffs_asc: np.ndarray, z1: complex, z2: complex,
                     sweeps: int = 12):
    """Jointly refine a close root pair by Newton on its quadratic factor.

    Individual roots of a near-double pair are only sqrt(eps)-accurate, but
    the pair's monic quadratic factor z^2 + u*z + v is well conditioned; the
    classical two-term synthetic-division iteration recovers (u, v) to
    machine precision and the pair is re-extracted from it.
    """
    a = (np.asarray(coeffs_asc, dtype=complex) / coeffs_asc[-1])[::-1]  # monic, descending
    n = len(a) - 1

    def remainder(u, v):
        """(r1, r0) of p mod (z^2 + u z + v) by synthetic division."""
        bm2 = a[0]
        bm1 = a[1] - u * bm2
        for k in range(2, n - 1):
            bm2, bm1 = bm1, a[k] - u * bm1 - v * bm2
        r1 = a[n - 1] - u * bm1 - v * bm2
        r0 = a[n] - v * bm1
        return r1, r0

    u = -(z1 + z2)
    v = z1 * z2
    res = np.inf
    for _ in range(sweeps):
        r1, r0 = remainder(u, v)
        new_res = abs(r1) + abs(r0)
        if new_res >= res:
            break
        res = new_res
        h = 1e-7 * max(1.0, abs(u), abs(v))
        r1u, r0u = remainder(u + h, v)
        r1v, r0v = remainder(u, v + h)
        j11, j12 = (r1u - r1) / h, (r1v - r1) / h
        j21, j22 = (r0u - r0) / h, (r0v - r0) / h
        det = j11 * j22 - j12 * j21
        if det == 0:
            break
        du = (r1 * j22 - r0 * j12) / det
        dv = (r0 * j11 - r1 * j21) / det
        u = u - du
        v = v - dv
    disc = np.sqrt(u * u - 4.0 * v)
    r1_, r2_ = (-u + disc) / 2.0, (-u - disc) / 2.0
    # keep the association with the inputs
    if abs(r1_ - z1) + abs(r2_ - z2) > abs(r1_ - z2) + abs(r2_ - z1):
        r1_, r2_ = r2_, r1_
    return complex(r1_), complex(r2_)


def all_roots(coeffs_asc: np.ndarray) -> np.ndarray:
    """Roots of a trimmed, nonzero-leading-coefficient polynomial.

    Degrees below ABERTH_MIN_DEGREE use the companion method directly; higher
    degrees try Aberth first and fall back to the companion method whenever a
    residual exceeds the gate.
    """
    c = np.asarray(coeffs_asc, dtype=complex)
    if len(c) - 1 < ABERTH_MIN_DEGREE:
        return companion_roots(c)
    roots, ok = aberth_roots(c)
    if ok:
        return roots
    return companion_roots(c)
