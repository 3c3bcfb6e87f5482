import numpy as np
import pytest

from doafusion import ArrayGeometry, benchmark_geometry, fd_steering_vector, group_gain_vector


@pytest.fixture(scope="session")
def geo() -> ArrayGeometry:
    return benchmark_geometry()


@pytest.fixture(scope="session")
def small_geo() -> ArrayGeometry:
    return ArrayGeometry(num_groups=2, antennas_per_subarray=(3, 5),
                         subarrays_per_group=(4, 4), fd_antennas=8)


def exact_fd_covariance(geometry, theta_deg, snr_linear):
    """Asymptotic (infinite-snapshot) FD covariance: snr * a a^H + I."""
    a = fd_steering_vector(geometry, theta_deg)
    return snr_linear * np.outer(a, a.conj()) + np.eye(geometry.fd_antennas)


def exact_group_covariance(geometry, p, theta_deg, snr_linear):
    """Asymptotic group covariance: snr * g g^H + I."""
    g = group_gain_vector(geometry, p, theta_deg)
    return snr_linear * np.outer(g, g.conj()) + np.eye(geometry.subarrays_per_group[p])
