import numpy as np
import pytest

from doafusion import (
    CrlbContext,
    crlb_part,
    crlb_report,
    fisher_fd,
    fisher_group,
    hybrid_crlb,
    psi,
    varsigma,
    virtual_gain_r,
)
from doafusion.crlb import FD_PART, VARIANT_ALT, numeric_fim_at_step, numeric_fim_oracle

# regression anchor: numeric-oracle hybrid bound at (41 deg, 0 dB, H=100) on
# the benchmark geometry, computed once and frozen
HYBRID_ORACLE_ANCHOR_DEG2 = 1.628899544112e-05


def ctx_at(geo, theta=41.0, snr=10.0, h=100):
    return CrlbContext(theta_deg=theta, snr_linear=snr, snapshots=h, geometry=geo)


# --- component quantities -------------------------------------------------------

def test_virtual_gain_broadside_limit(geo):
    for p, mp in enumerate((7, 11, 13)):
        assert virtual_gain_r(geo, p, 0.0) == pytest.approx(mp)


def test_virtual_gain_bounded_by_antenna_count(geo):
    for theta in np.arange(-89.9, 89.91, 0.1):
        for p, mp in enumerate((7, 11, 13)):
            assert abs(virtual_gain_r(geo, p, theta)) <= mp + 1e-9


def test_virtual_gain_matches_geometric_sum(geo):
    """Direct-summation oracle for the closed ratio form."""
    theta = 41.0
    psi_ = np.pi * np.sin(np.deg2rad(theta))
    direct = sum(np.exp(1j * psi_ * m) for m in range(7))
    assert virtual_gain_r(geo, 0, theta) == pytest.approx(direct, abs=1e-12)


def test_varsigma_broadside(geo):
    for p, mp in enumerate((7, 11, 13)):
        expected = 0.5 * mp * (mp - 1) / 2.0
        v = varsigma(geo, p, 0.0)
        assert v.imag == pytest.approx(0.0, abs=1e-12)
        assert v.real == pytest.approx(expected, abs=1e-12)


def test_varsigma_matches_term_sum(geo):
    theta = 41.0
    psi_ = np.pi * np.sin(np.deg2rad(theta))
    direct = sum(m * 0.5 * np.exp(-1j * m * psi_) for m in range(7))
    assert varsigma(geo, 0, theta) == pytest.approx(direct, abs=1e-12)


def test_psi_low_snr_limit_and_value(geo):
    assert psi(geo, 0, 33.0, 1e-30) == pytest.approx(7.0)
    # broadside, unit SNR: M + K*M^2
    assert psi(geo, 0, 0.0, 1.0) == pytest.approx(7 + 16 * 49)


def test_psi_monotone_in_snr(geo):
    vals = [psi(geo, 2, 41.0, s) for s in (0.1, 1.0, 10.0, 100.0)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert all(v >= 13.0 for v in vals)


# --- Fisher information -----------------------------------------------------------

def test_fisher_fd_cosine_scaling(geo):
    r = fisher_fd(ctx_at(geo, theta=0.0)) / fisher_fd(ctx_at(geo, theta=60.0))
    assert r == pytest.approx(np.cos(0.0) ** 2 / np.cos(np.deg2rad(60.0)) ** 2, rel=1e-9)


def test_fisher_fd_linear_in_snr(geo):
    assert fisher_fd(ctx_at(geo, snr=20.0)) == pytest.approx(2 * fisher_fd(ctx_at(geo, snr=10.0)), rel=1e-12)


def test_fisher_fd_against_oracle(geo):
    ctx = ctx_at(geo)
    assert fisher_fd(ctx) == pytest.approx(numeric_fim_oracle(ctx, FD_PART), rel=0.01)


def test_fisher_group_continuous_at_broadside(geo):
    for p in range(3):
        lo = fisher_group(ctx_at(geo, theta=-1e-6), p)
        mid = fisher_group(ctx_at(geo, theta=0.0), p)
        hi = fisher_group(ctx_at(geo, theta=1e-6), p)
        assert lo == pytest.approx(mid, rel=1e-6)
        assert hi == pytest.approx(mid, rel=1e-6)


def test_fisher_group_against_oracle(geo):
    ctx = ctx_at(geo)
    for p in range(3):
        assert fisher_group(ctx, p) == pytest.approx(numeric_fim_oracle(ctx, p), rel=0.01)


def test_fisher_rejects_endfire(geo):
    with pytest.raises(ValueError):
        CrlbContext(theta_deg=90.0, snr_linear=1.0, snapshots=10, geometry=geo)


# --- bounds ------------------------------------------------------------------------

def test_hybrid_snapshot_scaling(geo):
    assert hybrid_crlb(ctx_at(geo, h=200)) == pytest.approx(hybrid_crlb(ctx_at(geo, h=100)) / 2, rel=1e-12)


def test_hybrid_below_fd_only_bound(geo):
    ctx = ctx_at(geo)
    assert hybrid_crlb(ctx) <= crlb_part(ctx, FD_PART)


def test_hybrid_matches_frozen_oracle_anchor(geo):
    assert hybrid_crlb(ctx_at(geo, snr=1.0, h=100)) == pytest.approx(
        HYBRID_ORACLE_ANCHOR_DEG2, rel=0.01)


def test_hybrid_monotone_in_snr_and_snapshots(geo):
    snr_vals = [hybrid_crlb(ctx_at(geo, snr=s)) for s in (0.1, 1.0, 10.0, 100.0)]
    assert all(b < a for a, b in zip(snr_vals, snr_vals[1:]))
    h_vals = [hybrid_crlb(ctx_at(geo, h=h)) for h in (50, 100, 200, 400)]
    assert all(b < a for a, b in zip(h_vals, h_vals[1:]))


def test_report_structure_and_ordering(geo):
    rep = crlb_report(ctx_at(geo))
    assert len(rep.crlb_groups_deg2) == 3
    assert rep.hybrid_deg2 > 0
    assert rep.hybrid_deg2 <= rep.crlb_fd_deg2
    assert rep.hybrid_deg2 <= min(rep.crlb_groups_deg2)
    assert rep.fisher_fd > 0 and all(f > 0 for f in rep.fisher_groups)


def test_crlb_part_fd_variants_identical(geo):
    ctx = ctx_at(geo)
    assert crlb_part(ctx, FD_PART) == pytest.approx(crlb_part(ctx, FD_PART, VARIANT_ALT), rel=1e-12)


def test_crlb_part_group_variant_ratio_logged(geo):
    ctx = ctx_at(geo)
    for p in range(3):
        default = crlb_part(ctx, p)
        alt = crlb_part(ctx, p, VARIANT_ALT)
        ratio = alt / default
        assert np.isfinite(ratio) and ratio > 0
        print(f"group {p}: alt/fisher bound ratio {ratio:.6g}")


def test_crlb_parts_positive_across_grid(geo):
    for theta in np.arange(-80.0, 80.001, 5.0):
        ctx = ctx_at(geo, theta=theta)
        assert crlb_part(ctx, FD_PART) > 0
        for p in range(3):
            assert crlb_part(ctx, p) > 0


# --- numeric oracle internals --------------------------------------------------------

def test_oracle_quadratic_convergence(geo):
    """Central differencing: halving the step cuts the error about 4x."""
    ctx = ctx_at(geo, theta=23.0, snr=3.0)
    ref = numeric_fim_oracle(ctx, 1, step=1e-4)
    h = 2e-3
    e1 = abs(numeric_fim_at_step(ctx, 1, h) - ref)
    e2 = abs(numeric_fim_at_step(ctx, 1, h / 2) - ref)
    assert e2 == pytest.approx(e1 / 4.0, rel=0.15)


def test_oracle_invariant_to_phase_reference_shift(geo):
    """Shifting the array reference multiplies the gain by a theta-dependent
    phase; the covariance-based information is unchanged. Verified with a
    test-local evaluation of the same trace formula."""
    from doafusion.arrays import group_gain_vector

    theta = np.deg2rad(31.0)
    snr = 4.0
    shift_cycles = 5.0  # reference moved five element spacings

    def fim(gain_fn):
        s2 = 1.0 / snr
        h = 1e-5

        def cov(t):
            g = gain_fn(t)
            return np.outer(g, g.conj()) + s2 * np.eye(g.size)

        ri = np.linalg.inv(cov(theta))
        rd = (cov(theta + h) - cov(theta - h)) / (2 * h)
        m = ri @ rd
        return float(np.trace(m @ m).real)

    def plain(t):
        return group_gain_vector(geo, 0, np.rad2deg(t))

    def shifted(t):
        return plain(t) * np.exp(1j * 2 * np.pi * shift_cycles * 0.5 * np.sin(t))

    assert fim(shifted) == pytest.approx(fim(plain), rel=1e-6)


def test_oracle_nonconvergent_raises(geo):
    ctx = ctx_at(geo)
    with pytest.raises(RuntimeError):
        numeric_fim_oracle(ctx, FD_PART, step=1e-4, max_halvings=0)
