"""Array geometry and baseband snapshot synthesis.

The receiver has a fully digital (FD) uniform linear subarray of M antennas
plus P heterogeneous groups; group p consists of K_p subarrays of M_p
antennas each, analog-combined down to one digital channel per subarray.
All elements share a common half-wavelength grid with the phase reference at
the leftmost element.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    for k in range(2, int(n**0.5) + 1):
        if n % k == 0:
            return False
    return True


@dataclass(frozen=True)
class ArrayGeometry:
    """Static description of the FD subarray and the P analog-combined groups.

    Attributes
    ----------
    num_groups : int
        Number of heterogeneous groups P.
    antennas_per_subarray : tuple of int
        M_p for each group (ideally pairwise distinct primes).
    subarrays_per_group : tuple of int
        K_p for each group.
    fd_antennas : int
        M, element count of the fully digital subarray.
    element_spacing : float
        Inter-element spacing d in meters.
    wavelength : float
        Carrier wavelength in meters.
    """

    num_groups: int
    antennas_per_subarray: tuple
    subarrays_per_group: tuple
    fd_antennas: int
    element_spacing: float = 0.5
    wavelength: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "antennas_per_subarray", tuple(int(m) for m in self.antennas_per_subarray))
        object.__setattr__(self, "subarrays_per_group", tuple(int(k) for k in self.subarrays_per_group))
        if self.num_groups < 1:
            raise ValueError("num_groups must be >= 1")
        if len(self.antennas_per_subarray) != self.num_groups:
            raise ValueError("antennas_per_subarray must have num_groups entries")
        if len(self.subarrays_per_group) != self.num_groups:
            raise ValueError("subarrays_per_group must have num_groups entries")
        if any(m < 2 for m in self.antennas_per_subarray):
            raise ValueError("every M_p must be >= 2")
        if any(k < 2 for k in self.subarrays_per_group):
            raise ValueError("every K_p must be >= 2")
        if self.fd_antennas < 2:
            raise ValueError("fd_antennas must be >= 2")
        if self.element_spacing <= 0:
            raise ValueError("element_spacing must be positive")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        nonprime = [m for m in self.antennas_per_subarray if not _is_prime(m)]
        if nonprime or len(set(self.antennas_per_subarray)) != self.num_groups:
            # Pairwise-distinct primes keep the groups' ambiguity lattices from
            # sharing false solutions; estimation itself never uses primality.
            warnings.warn(
                "antennas_per_subarray should be pairwise distinct primes; got %s"
                % (self.antennas_per_subarray,),
                stacklevel=2,
            )

    def group_size(self, p: int) -> int:
        """Total antenna count N_p = K_p * M_p of group p (0-based)."""
        return self.subarrays_per_group[p] * self.antennas_per_subarray[p]

    @property
    def hybrid_antennas(self) -> int:
        """Sum of K_p * M_p over all groups."""
        return sum(self.group_size(p) for p in range(self.num_groups))


@dataclass(frozen=True)
class SourceConfig:
    """Single far-field emitter: incident angle, per-element SNR, snapshots."""

    true_angle_deg: float
    snr_db: float
    snapshots: int

    def __post_init__(self):
        if not abs(self.true_angle_deg) < 90.0:
            raise ValueError("true_angle_deg must lie in (-90, 90)")
        if self.snapshots < 1:
            raise ValueError("snapshots must be >= 1")


@dataclass(frozen=True)
class AnalogCombiner:
    """Per-antenna analog phases for every group.

    phases[p] has shape (K_p, M_p); combining vector for subarray k of group p
    is (1/sqrt(M_p)) * exp(j * phases[p][k]).
    """

    phases: tuple = field(default=())

    @classmethod
    def zero_phases(cls, geometry: ArrayGeometry) -> "AnalogCombiner":
        """All-zero phases: each subarray does a normalized coherent sum."""
        return cls(
            phases=tuple(
                np.zeros((geometry.subarrays_per_group[p], geometry.antennas_per_subarray[p]))
                for p in range(geometry.num_groups)
            )
        )


@dataclass
class SnapshotSet:
    """Complex baseband matrix, rows = digital channels, columns = snapshots."""

    data: np.ndarray
    channel_kind: str  # "fd" or "group"
    group: int | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.ndim != 2:
            raise ValueError("snapshot data must be a 2-D matrix")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("snapshot data must be finite")

    @property
    def snapshots(self) -> int:
        return self.data.shape[1]


def fd_steering_vector(geometry: ArrayGeometry, theta_deg: float) -> np.ndarray:
    """Unit-modulus phase response of the FD subarray to a plane wave.

    Entry m (0-based) is exp(j*2*pi*m*d*sin(theta)/lambda); the reference
    element has response exactly 1.
    """
    if not abs(theta_deg) < 90.0:
        raise ValueError("theta_deg must lie in (-90, 90)")
    m = np.arange(geometry.fd_antennas)
    phase = 2.0 * np.pi * m * geometry.element_spacing * np.sin(np.deg2rad(theta_deg)) / geometry.wavelength
    return np.exp(1j * phase)


def group_steering_vector(geometry: ArrayGeometry, p: int, theta_deg: float) -> np.ndarray:
    """Phase response across all N_p = K_p*M_p antennas of group p (0-based)."""
    if not 0 <= p < geometry.num_groups:
        raise IndexError(f"group index {p} out of range for {geometry.num_groups} groups")
    if not abs(theta_deg) < 90.0:
        raise ValueError("theta_deg must lie in (-90, 90)")
    m = np.arange(geometry.group_size(p))
    phase = 2.0 * np.pi * m * geometry.element_spacing * np.sin(np.deg2rad(theta_deg)) / geometry.wavelength
    return np.exp(1j * phase)


def analog_combining_matrix(geometry: ArrayGeometry, p: int, combiner: AnalogCombiner) -> np.ndarray:
    """Block-diagonal N_p x K_p combining matrix for group p.

    Column k holds the subarray-k combining vector in rows k*M_p..(k+1)*M_p-1
    and exact zeros elsewhere.
    """
    if not 0 <= p < geometry.num_groups:
        raise IndexError(f"group index {p} out of range for {geometry.num_groups} groups")
    kp = geometry.subarrays_per_group[p]
    mp = geometry.antennas_per_subarray[p]
    phases = np.asarray(combiner.phases[p], dtype=float)
    if phases.shape != (kp, mp):
        raise ValueError(f"group {p} phases must have shape ({kp}, {mp}), got {phases.shape}")
    mat = np.zeros((kp * mp, kp), dtype=complex)
    scale = 1.0 / np.sqrt(mp)
    for k in range(kp):
        mat[k * mp:(k + 1) * mp, k] = scale * np.exp(1j * phases[k])
    return mat


def group_gain_vector(geometry: ArrayGeometry, p: int, theta_deg: float,
                      combiner: AnalogCombiner | None = None) -> np.ndarray:
    """Post-combining channel response Xi^H a_p(theta) of group p (length K_p)."""
    if combiner is None:
        combiner = AnalogCombiner.zero_phases(geometry)
    xi = analog_combining_matrix(geometry, p, combiner)
    return xi.conj().T @ group_steering_vector(geometry, p, theta_deg)


def synthesize_snapshots(geometry: ArrayGeometry, source: SourceConfig,
                         combiner: AnalogCombiner | None = None,
                         seed=0, noiseless: bool = False):
    """Draw H baseband snapshots for the FD subarray and every group.

    The emitted waveform e(n) is unit-power circular complex Gaussian and is
    shared by the FD subarray and all groups within the trial (one physical
    wavefront); receiver noises are independent with per-channel variance
    10^(-snr_db/10). Pass ``noiseless=True`` to zero the noise (the SNR field
    is then ignored).

    Returns (fd: SnapshotSet, groups: list[SnapshotSet]). Bit-deterministic
    for a fixed seed: the draw order is e, FD noise, then group noises.
    """
    if combiner is None:
        combiner = AnalogCombiner.zero_phases(geometry)
    rng = np.random.default_rng(seed)
    h = source.snapshots
    emitted = _draw_cn(rng, (h,))
    sigma = 0.0 if noiseless else 10.0 ** (-source.snr_db / 20.0)

    a_fd = fd_steering_vector(geometry, source.true_angle_deg)
    fd_data = np.outer(a_fd, emitted)
    if not noiseless:
        fd_data = fd_data + sigma * _draw_cn(rng, (geometry.fd_antennas, h))
    fd = SnapshotSet(fd_data, "fd")

    groups = []
    for p in range(geometry.num_groups):
        gain = group_gain_vector(geometry, p, source.true_angle_deg, combiner)
        data = np.outer(gain, emitted)
        if not noiseless:
            data = data + sigma * _draw_cn(rng, (geometry.subarrays_per_group[p], h))
        groups.append(SnapshotSet(data, "group", group=p))
    return fd, groups


def _draw_cn(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-variance circular complex Gaussian samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def benchmark_geometry() -> ArrayGeometry:
    """The benchmark configuration used throughout the test suite:
    3 groups of 16 subarrays with 7/11/13 antennas each, 128-element FD array.
    """
    return ArrayGeometry(
        num_groups=3,
        antennas_per_subarray=(7, 11, 13),
        subarrays_per_group=(16, 16, 16),
        fd_antennas=128,
    )
