import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xaichest.phy import (
    OfdmConfig,
    build_frame,
    demap_bpsk,
    demap_qpsk,
    frame_to_time,
    ls_preamble_estimate,
    modulate_qpsk,
    ofdm_demodulate,
    ofdm_modulate,
    receive_frame,
)

S = 1 / np.sqrt(2)


def test_gray_mapping_table():
    got = modulate_qpsk([0, 0, 0, 1, 1, 0, 1, 1])
    want = S * np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j])
    np.testing.assert_allclose(got, want)


def test_modulate_rejects_bad_input():
    with pytest.raises(ValueError):
        modulate_qpsk([0, 1, 1])
    with pytest.raises(ValueError):
        modulate_qpsk([0, 2])


@pytest.mark.parametrize(
    "sym, want",
    [(0.9 + 0.8j, S * (1 + 1j)), (0j, S * (1 + 1j)), (-0.1 + 0j, S * (-1 + 1j)), (S * (1 - 1j), S * (1 - 1j))],
)
def test_demap_points(sym, want):
    pts, _ = demap_qpsk(np.array([sym]))
    assert pts[0] == pytest.approx(want)


def test_demap_bits_invert_modulation(rng):
    bits = rng.integers(0, 2, 400)
    _, back = demap_qpsk(modulate_qpsk(bits))
    np.testing.assert_array_equal(back, bits)


@settings(max_examples=200, deadline=None)
@given(st.complex_numbers(max_magnitude=1e6, allow_nan=False, allow_infinity=False))
def test_demap_idempotent(s):
    once, _ = demap_qpsk(np.array([s]))
    twice, _ = demap_qpsk(once)
    np.testing.assert_array_equal(once, twice)


def test_bpsk_demap():
    np.testing.assert_array_equal(demap_bpsk(np.array([0.3, -0.1, 0.0])), [1, -1, 1])


def test_config_layout(cfg):
    assert cfg.k_on == 52 and cfg.n_data == 48
    assert cfg.frame_len == 52 * 80
    pilots, data, nulls = cfg.pilot_indices, cfg.data_indices, cfg.null_indices
    allidx = np.concatenate([pilots, data, nulls])
    assert len(allidx) == 64 and len(set(allidx.tolist())) == 64
    assert allidx.min() >= 0 and allidx.max() < 64
    assert len(pilots) + len(data) == 52
    np.testing.assert_array_equal(cfg.pilot_pos, [5, 19, 32, 46])
    np.testing.assert_array_equal(cfg.logical_used[cfg.pilot_pos], [-21, -7, 7, 21])
    assert 0 in nulls and 32 in nulls


def test_config_rejects_pilot_outside_used():
    with pytest.raises(ValueError):
        OfdmConfig(pilot_subcarriers=(-21, -7, 7, 30))


def test_build_frame_all_zero_bits(cfg):
    fr = build_frame(cfg, bits=np.zeros(cfg.bits_per_frame, dtype=int))
    np.testing.assert_allclose(fr.tx_grid[cfg.data_pos], S * (1 + 1j))
    np.testing.assert_array_equal(fr.tx_grid[cfg.pilot_pos], np.tile(cfg.pilot_values[:, None], 50))


def test_build_frame_bit_length(cfg):
    with pytest.raises(ValueError):
        build_frame(cfg, bits=np.zeros(10, dtype=int))


def test_frame_cells_unit_modulus(cfg, rng):
    fr = build_frame(cfg, rng=rng)
    np.testing.assert_allclose(np.abs(fr.tx_grid), 1.0)


def test_ofdm_zero_and_tone(cfg):
    np.testing.assert_array_equal(ofdm_modulate(cfg, np.zeros(64)), np.zeros(80))
    x = np.zeros(64, complex)
    x[5] = 1
    y = ofdm_demodulate(cfg, ofdm_modulate(cfg, x))
    np.testing.assert_allclose(y, x, atol=1e-14)


def test_ofdm_cp_and_parseval(cfg, rng):
    x = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    t = ofdm_modulate(cfg, x)
    np.testing.assert_allclose(t[:16], t[-16:])
    assert np.sum(np.abs(t[16:]) ** 2) == pytest.approx(np.sum(np.abs(x) ** 2))
    np.testing.assert_allclose(ofdm_demodulate(cfg, t), x, atol=1e-12)


def test_ofdm_length_errors(cfg):
    with pytest.raises(ValueError):
        ofdm_modulate(cfg, np.zeros(63))
    with pytest.raises(ValueError):
        ofdm_demodulate(cfg, np.zeros(79))


def test_null_bins_zero_in_time_signal(cfg, rng):
    fr = build_frame(cfg, rng=rng)
    t = frame_to_time(cfg, fr).reshape(-1, 80)[:, 16:]
    spec = np.fft.fft(t, norm="ortho")
    assert np.max(np.abs(spec[:, cfg.null_indices])) < 1e-12


def test_ideal_channel_round_trip(cfg, rng):
    fr = build_frame(cfg, rng=rng)
    rx = receive_frame(cfg, fr, frame_to_time(cfg, fr))
    np.testing.assert_allclose(rx.rx_grid, fr.tx_grid, atol=1e-10)
    _, bits = demap_qpsk(rx.rx_grid[cfg.data_pos].T)
    np.testing.assert_array_equal(bits, fr.tx_bits)


def test_ls_flat_half_gain(cfg, rng):
    fr = build_frame(cfg, rng=rng)
    rx = receive_frame(cfg, fr, 0.5 * frame_to_time(cfg, fr))
    np.testing.assert_allclose(ls_preamble_estimate(rx), 0.5)


def test_ls_noise_variance(cfg):
    # averaging two preambles halves the per-subcarrier noise variance
    rng = np.random.default_rng(7)
    fr = build_frame(cfg, rng=rng)
    clean = frame_to_time(cfg, fr)
    sigma2 = 0.1
    errs = []
    for _ in range(400):
        noise = np.sqrt(sigma2 / 2) * (rng.standard_normal(clean.size) + 1j * rng.standard_normal(clean.size))
        errs.append(ls_preamble_estimate(receive_frame(cfg, fr, clean + noise)) - 1)
    var = np.mean(np.abs(np.concatenate(errs)) ** 2)
    assert var == pytest.approx(sigma2 / 2, rel=0.05)
