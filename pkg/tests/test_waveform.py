import math

import numpy as np
import pytest

from isac_uav.exceptions import DomainError
from isac_uav.scene import ArrayGeometry, RadialParams
from isac_uav.waveform import (
    ChannelMatrix,
    NoiseModel,
    WaveformConfig,
    array_snapshots,
    range_vector,
    snr_to_sigma2,
    steering_vector,
    synthesize_channel,
    velocity_vector,
)

C = 299_792_458.0
CFG = WaveformConfig()
GEOM = ArrayGeometry.for_carrier(CFG.carrier_hz)


@pytest.mark.parametrize("snr, expected", [(0.0, 1.0), (-10.0, 10.0), (-12.0, 15.848931924611133)])
def test_snr_to_sigma2(snr, expected):
    assert snr_to_sigma2(snr, 1.0) == pytest.approx(expected, rel=1e-14)


def test_snr_scales_with_amplitude():
    assert snr_to_sigma2(0.0, 2.0) == pytest.approx(4.0)
    with pytest.raises(DomainError):
        snr_to_sigma2(0.0, 0.0)


def test_config_rejects_short_symbol():
    with pytest.raises(DomainError):
        WaveformConfig(symbol_duration_s=1e-6)


def test_channel_range_phase():
    ch = synthesize_channel(RadialParams(62.5, 0.0, -0.2, 0.0), CFG)
    # -2 pi df (2R / c) with the exact light speed; c = 3e8 would give -0.62832
    assert np.angle(ch.entries[1, 0]) == pytest.approx(-0.6287535065855046, abs=1e-12)


def test_channel_doppler_phase():
    ch = synthesize_channel(RadialParams(50.0, 0.0, -0.2, 23.0), CFG)
    # 2 pi f0 (2v / c) Ts; 0.12042 with c = 3e8
    assert np.angle(ch.entries[0, 1]) == pytest.approx(0.12050337605254091, abs=1e-12)


def test_channel_origin_entry_is_amplitude():
    ch = synthesize_channel(RadialParams(80.0, 0.0, -0.2, 7.0), CFG, amplitude=0.7)
    assert ch.entries[0, 0] == pytest.approx(0.7 + 0j, abs=1e-15)


def test_noiseless_channel_is_outer_product():
    rp = RadialParams(99.26, 0.3, -0.2, 15.4)
    ch = synthesize_channel(rp, CFG)
    m = np.arange(CFG.n_subcarriers)[:, None]
    mu = np.arange(CFG.n_symbols)[None, :]
    direct = np.exp(-2j * np.pi * m * CFG.subcarrier_spacing_hz * 2 * rp.range / C) * np.exp(
        2j * np.pi * CFG.carrier_hz * 2 * rp.radial_speed / C * mu * CFG.symbol_duration_s)
    assert np.abs(ch.entries - direct).max() < 1e-12
    assert np.allclose(np.abs(ch.entries), 1.0)


def test_noise_variance():
    cfg = WaveformConfig(400, 256)
    ch = synthesize_channel(RadialParams(50.0, 0.0, -0.2, 0.0), cfg, NoiseModel(2.5, seed=3))
    noise = ch.entries - synthesize_channel(RadialParams(50.0, 0.0, -0.2, 0.0), cfg).entries
    assert noise.size >= 100_000
    assert np.var(noise) == pytest.approx(2.5, rel=0.03)
    assert np.var(noise.real) == pytest.approx(1.25, rel=0.03)
    assert abs(np.mean(noise)) < 0.02


def test_same_seed_bit_identical():
    rp = RadialParams(50.0, 0.0, -0.2, 3.0)
    a = synthesize_channel(rp, CFG, NoiseModel(1.0, seed=11)).entries
    b = synthesize_channel(rp, CFG, NoiseModel(1.0, seed=11)).entries
    c = synthesize_channel(rp, CFG, NoiseModel(1.0, seed=12)).entries
    assert a.tobytes() == b.tobytes()
    assert a.tobytes() != c.tobytes()


def test_steering_reference_element():
    for az, el in [(0.1, -0.2), (2.5, -1.2), (-2.0, -0.7)]:
        k = steering_vector(az, el, GEOM)
        assert k[0] == 1 + 0j
        np.testing.assert_allclose(np.abs(k), 1.0)


def test_steering_broadside_second_row():
    # element (f=2, g=1) is index 1; path difference lambda/2
    assert steering_vector(0.0, 0.0, GEOM)[1] == pytest.approx(-1 + 0j, abs=1e-15)


def test_steering_sign_flip_is_conjugate():
    k = steering_vector(0.4, -0.3, GEOM)
    flipped = steering_vector(0.4 + np.pi, -0.3, GEOM)
    np.testing.assert_allclose(flipped, k.conj(), atol=1e-12)


def test_steering_vectorised_matches_scalar():
    az = np.array([0.1, -2.0, 3.0])
    el = np.array([-0.2, -0.5, -1.0])
    batch = steering_vector(az, el, GEOM)
    for i in range(3):
        np.testing.assert_allclose(batch[i], steering_vector(az[i], el[i], GEOM))


def test_range_vector_zero_and_wrap():
    np.testing.assert_array_equal(range_vector(0.0, CFG), np.ones(CFG.n_subcarriers))
    wrap = C / (2 * 240e3)
    assert wrap == pytest.approx(624.5676208333333)
    np.testing.assert_allclose(range_vector(wrap, CFG), 1.0, atol=1e-9)


@pytest.mark.parametrize("r", [0.0, 12.3, 99.26, 600.0])
def test_range_vector_norm(r):
    k = range_vector(r, CFG)
    assert np.vdot(k, k).real == pytest.approx(CFG.n_subcarriers)


def test_velocity_vector_values():
    np.testing.assert_array_equal(velocity_vector(0.0, CFG), np.ones(CFG.n_symbols))
    assert np.angle(velocity_vector(23.0, CFG)[1]) == pytest.approx(0.12050337605254091, abs=1e-12)
    vmax = C / (2 * 24e9 * 5.208e-6)
    assert CFG.max_unambiguous_speed == pytest.approx(vmax)
    np.testing.assert_allclose(velocity_vector(vmax, CFG), 1.0, atol=1e-9)


@pytest.mark.parametrize("r", [3.0, 99.26])
def test_range_vector_periodic(r):
    np.testing.assert_allclose(range_vector(r + CFG.max_unambiguous_range, CFG), range_vector(r, CFG), atol=1e-9)


def test_array_snapshots_noiseless():
    ch = synthesize_channel(RadialParams(99.26, 0.3, -0.2, 15.4), CFG)
    snap = array_snapshots(ch, 5, np.ones(GEOM.n_elements))
    for row in snap.entries:
        np.testing.assert_array_equal(row, ch.entries[5])
    steer = steering_vector(0.3, -0.2, GEOM)
    y = array_snapshots(ch, 7, steer).entries
    assert np.linalg.matrix_rank(y) == 1
    p, mu = 9, 33
    assert y[p, mu] == pytest.approx(steer[p] * ch.entries[7, mu], abs=1e-15)


def test_array_snapshots_noise_and_bounds():
    ch = ChannelMatrix(np.ones((4, 1000), dtype=complex))
    snap = array_snapshots(ch, 0, np.ones(16), NoiseModel(0.5, seed=1))
    assert np.var(snap.entries - 1) == pytest.approx(0.5, rel=0.05)
    with pytest.raises(IndexError):
        array_snapshots(ch, 4, np.ones(16))
