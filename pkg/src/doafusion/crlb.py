"""Closed-form estimation bounds and their numeric cross-check.

Per-snapshot Fisher information is computed for the FD subarray and for each
analog-combined group under the single-emitter Gaussian snapshot model; the
hybrid variance bound is the inverse of the summed information scaled by the
snapshot count. A finite-difference oracle built directly on the covariance
model validates every closed form without sharing any algebra with it.

Angles are degrees at this module's interfaces; information values are
radians^-2 and bounds are converted to degrees^2 only on return.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arrays import (
    AnalogCombiner,
    ArrayGeometry,
    fd_steering_vector,
    group_gain_vector,
)

RAD2DEG_SQ = (180.0 / np.pi) ** 2

VARIANT_FISHER = "fisher"  # bound = 1 / (H * Fisher information); the default
VARIANT_ALT = "alt"        # second closed form of the group weight bound, kept
                           # for comparison (differs by an SNR power and a Psi
                           # placement in its first term)

FD_PART = "fd"


@dataclass(frozen=True)
class CrlbContext:
    """Evaluation point for the bounds: angle, linear SNR, snapshots, geometry."""

    theta_deg: float
    snr_linear: float
    snapshots: int
    geometry: ArrayGeometry

    def __post_init__(self):
        if not abs(self.theta_deg) < 90.0:
            raise ValueError("theta_deg must lie in (-90, 90)")
        if self.snr_linear <= 0:
            raise ValueError("snr_linear must be positive")
        if self.snapshots < 1:
            raise ValueError("snapshots must be >= 1")


@dataclass
class CrlbReport:
    crlb_fd_deg2: float
    crlb_groups_deg2: list
    hybrid_deg2: float
    fisher_fd: float
    fisher_groups: list


def virtual_gain_r(geometry: ArrayGeometry, p: int, theta_deg: float) -> complex:
    """Coherent-sum gain of one M_p-antenna subarray.

    r_p(theta) = (1 - e^{j*M_p*psi}) / (1 - e^{j*psi}) with
    psi = (2*pi/lambda)*d*sin(theta); the removable singularity at psi = 0
    evaluates to M_p.
    """
    mp = geometry.antennas_per_subarray[p]
    psi_ = 2.0 * np.pi * geometry.element_spacing * np.sin(np.deg2rad(theta_deg)) / geometry.wavelength
    den = 1.0 - np.exp(1j * psi_)
    if abs(den) < 1e-12:
        return complex(mp)
    return complex((1.0 - np.exp(1j * mp * psi_)) / den)


def varsigma(geometry: ArrayGeometry, p: int, theta_deg: float) -> complex:
    """Position-weighted conjugate phase sum over one subarray, in meters:
    sum_{m=0}^{M_p-1} m*d*e^{-j*m*psi}.
    """
    mp = geometry.antennas_per_subarray[p]
    d = geometry.element_spacing
    psi_ = 2.0 * np.pi * d * np.sin(np.deg2rad(theta_deg)) / geometry.wavelength
    m = np.arange(mp)
    return complex(np.sum(m * d * np.exp(-1j * m * psi_)))


def psi(geometry: ArrayGeometry, p: int, theta_deg: float, snr_linear: float) -> float:
    """Effective group excitation Psi = M_p + K_p * SNR * |r_p|^2 (>= M_p)."""
    mp = geometry.antennas_per_subarray[p]
    kp = geometry.subarrays_per_group[p]
    return float(mp + kp * snr_linear * abs(virtual_gain_r(geometry, p, theta_deg)) ** 2)


def _centered_position_spread(geometry: ArrayGeometry) -> float:
    """Sum of squared centroid-centered FD element positions, meters^2.

    For the uniform grid this equals d^2 * M * (M^2 - 1) / 12 and is the
    position spread that makes 1/(H*F) the standard single-source ULA bound.
    """
    pos = np.arange(geometry.fd_antennas) * geometry.element_spacing
    pos = pos - pos.mean()
    return float(np.sum(pos**2))


def fisher_fd(ctx: CrlbContext) -> float:
    """Per-snapshot information of the FD subarray:
    8*pi^2 * SNR * cos^2(theta) * spread / lambda^2.
    """
    c = np.cos(np.deg2rad(ctx.theta_deg))
    if c == 0.0:
        raise ValueError("Fisher information vanishes at +-90 degrees")
    spread = _centered_position_spread(ctx.geometry)
    return float(8.0 * np.pi**2 * ctx.snr_linear * c**2 * spread / ctx.geometry.wavelength**2)


def fisher_group(ctx: CrlbContext, p: int, variant: str = VARIANT_FISHER) -> float:
    """Per-snapshot information of group p's combined channels.

    Default form (validated against the numeric oracle):

        (8*pi^2*SNR^2*cos^2(theta) / (lambda^2*M_p*Psi)) *
        [ |r|^4*M_p^2*K_p^2*(K_p^2-1)*d^2/12
          + (M_p*K_p^2/Psi) * (|r*vs|^2 - Re{(r*vs)^2}) ]

    The ``alt`` variant swaps the second bracket term for
    (M_p*K_p/Psi) * (|r*vs|^2 + K_p*Re{r^2*vs}), an alternative closed form
    retained only for side-by-side comparison; it is not oracle-consistent.
    """
    c = np.cos(np.deg2rad(ctx.theta_deg))
    if c == 0.0:
        raise ValueError("Fisher information vanishes at +-90 degrees")
    geo = ctx.geometry
    mp = geo.antennas_per_subarray[p]
    kp = geo.subarrays_per_group[p]
    d = geo.element_spacing
    lam = geo.wavelength
    snr = ctx.snr_linear

    r = virtual_gain_r(geo, p, ctx.theta_deg)
    vs = varsigma(geo, p, ctx.theta_deg)
    big_psi = psi(geo, p, ctx.theta_deg, snr)

    term1 = abs(r) ** 4 * mp**2 * kp**2 * (kp**2 - 1) * d**2 / 12.0
    if variant == VARIANT_FISHER:
        x = r * vs
        term2 = (mp * kp**2 / big_psi) * (abs(x) ** 2 - (x**2).real)
    elif variant == VARIANT_ALT:
        term2 = (mp * kp / big_psi) * (abs(r * vs) ** 2 + kp * (r**2 * vs).real)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    pref = 8.0 * np.pi**2 * snr**2 * c**2 / (lam**2 * mp * big_psi)
    return float(pref * (term1 + term2))


def hybrid_crlb(ctx: CrlbContext, variant: str = VARIANT_FISHER) -> float:
    """Variance bound of the full receiver in degrees^2:
    (1/H) / (F_fd + sum_p F_p), converted from radians^2.
    """
    total = fisher_fd(ctx) + sum(fisher_group(ctx, p, variant) for p in range(ctx.geometry.num_groups))
    return float(RAD2DEG_SQ / (ctx.snapshots * total))


def crlb_part(ctx: CrlbContext, part, variant: str = VARIANT_FISHER) -> float:
    """Per-part variance bound in degrees^2.

    ``part`` is the string "fd" or a 0-based group index. The default variant
    inverts the per-part Fisher information. The ``alt`` variant evaluates the
    standalone weight-bound expression for a group (for the FD part the two
    coincide):

        lambda^2*M_p*Psi / (8*H*pi^2*SNR*cos^2) /
        [ term1/Psi + (M_p*K_p/Psi)*(|r*vs|^2 + K_p*Re{r^2*vs}) ]
    """
    if part == FD_PART:
        return float(RAD2DEG_SQ / (ctx.snapshots * fisher_fd(ctx)))
    p = int(part)
    if variant == VARIANT_FISHER:
        return float(RAD2DEG_SQ / (ctx.snapshots * fisher_group(ctx, p, VARIANT_FISHER)))
    if variant != VARIANT_ALT:
        raise ValueError(f"unknown variant {variant!r}")

    geo = ctx.geometry
    mp = geo.antennas_per_subarray[p]
    kp = geo.subarrays_per_group[p]
    d = geo.element_spacing
    lam = geo.wavelength
    snr = ctx.snr_linear
    c = np.cos(np.deg2rad(ctx.theta_deg))
    if c == 0.0:
        raise ValueError("bound diverges at +-90 degrees")
    r = virtual_gain_r(geo, p, ctx.theta_deg)
    vs = varsigma(geo, p, ctx.theta_deg)
    big_psi = psi(geo, p, ctx.theta_deg, snr)
    term1 = abs(r) ** 4 * mp**2 * kp**2 * (kp**2 - 1) * d**2 / 12.0
    denom = term1 / big_psi + (mp * kp / big_psi) * (abs(r * vs) ** 2 + kp * (r**2 * vs).real)
    num = lam**2 * mp * big_psi / (8.0 * ctx.snapshots * np.pi**2 * snr * c**2)
    return float(RAD2DEG_SQ * num / denom)


def crlb_report(ctx: CrlbContext, variant: str = VARIANT_FISHER) -> CrlbReport:
    """Bundle of per-part bounds, the hybrid bound, and the information values."""
    f_fd = fisher_fd(ctx)
    f_groups = [fisher_group(ctx, p, variant) for p in range(ctx.geometry.num_groups)]
    h = ctx.snapshots
    return CrlbReport(
        crlb_fd_deg2=float(RAD2DEG_SQ / (h * f_fd)),
        crlb_groups_deg2=[float(RAD2DEG_SQ / (h * f)) for f in f_groups],
        hybrid_deg2=float(RAD2DEG_SQ / (h * (f_fd + sum(f_groups)))),
        fisher_fd=f_fd,
        fisher_groups=f_groups,
    )


def _part_gain(ctx: CrlbContext, part, theta_rad: float) -> np.ndarray:
    """Channel gain vector of a part at an angle given in radians.

    Built from explicit steering vectors and the block combining matrix, so
    the oracle shares no algebra with the closed forms above.
    """
    theta_deg = np.rad2deg(theta_rad)
    if part == FD_PART:
        return fd_steering_vector(ctx.geometry, theta_deg)
    return group_gain_vector(ctx.geometry, int(part), theta_deg, AnalogCombiner.zero_phases(ctx.geometry))


def numeric_fim_at_step(ctx: CrlbContext, part, step: float) -> float:
    """Per-snapshot Fisher information from the covariance model at one
    finite-difference step (radians).

    The snapshot vector of a part is zero-mean complex Gaussian with
    covariance R(theta) = g g^H + I/SNR; its information is
    tr(R^-1 R' R^-1 R'), with R' taken by central differences.
    """
    sigma2 = 1.0 / ctx.snr_linear
    theta = np.deg2rad(ctx.theta_deg)

    def cov(t):
        g = _part_gain(ctx, part, t)
        return np.outer(g, g.conj()) + sigma2 * np.eye(g.size)

    r0 = cov(theta)
    rdot = (cov(theta + step) - cov(theta - step)) / (2.0 * step)
    ri = np.linalg.inv(r0)
    m = ri @ rdot
    return float(np.trace(m @ m).real)


def numeric_fim_oracle(ctx: CrlbContext, part, step: float = 1e-4, max_halvings: int = 6) -> float:
    """Finite-difference information estimate with verified convergence.

    Halves the step until two successive estimates agree to 1e-6 relative,
    then returns the Richardson extrapolation of the last pair. Raises if the
    differencing never settles.
    """
    prev = numeric_fim_at_step(ctx, part, step)
    for _ in range(max_halvings):
        step /= 2.0
        cur = numeric_fim_at_step(ctx, part, step)
        extrap = (4.0 * cur - prev) / 3.0
        if abs(cur - prev) <= 1e-6 * abs(extrap):
            return float(extrap)
        prev = cur
    raise RuntimeError("finite-difference information estimate did not converge")
