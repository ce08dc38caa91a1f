import struct

import numpy as np
import pytest

from xaichest.channel import VTV_US
from xaichest.errors import ConfigError, MissingArtifactError
from xaichest.estimators import nmse, run_conventional
from xaichest.harness import (
    BerReport,
    EstimatorSpec,
    ModelStore,
    RunConfig,
    compare_variants,
    emit_reports,
    frame_seed,
    generate_dataset,
    generate_datasets,
    read_ber_csv,
    read_dataset,
    run_ber,
    run_ber_many,
    simulate_frame,
    snr_at_ber,
    write_dataset,
)
from xaichest.neural import TrainConfig, complex_to_real, train_utility
from xaichest.xai import MaskReport, classify_subcarriers


def fake_report(label, snr, ber, frames=10, bpf=4800):
    ber = np.asarray(ber, float)
    errs = np.rint(ber * frames * bpf).astype(int)
    per_frame = [np.full(frames, e // frames) for e in errs]
    return BerReport(label, "vtv-us", np.asarray(snr, float), errs, np.full(len(snr), frames * bpf),
                     per_frame, np.full(len(snr), 0.01), bpf, {"scheme": label, "variant": "full"})


def test_frame_seed_streams_differ():
    a = np.random.default_rng(frame_seed(0, 1, "vtv-us", 10, 0)).random()
    b = np.random.default_rng(frame_seed(0, 2, "vtv-us", 10, 0)).random()
    c = np.random.default_rng(frame_seed(0, 1, "vti-us", 10, 0)).random()
    d = np.random.default_rng(frame_seed(0, 1, "vtv-us", 10, 0)).random()
    assert len({a, b, c}) == 3 and a == d


def test_run_config_parsing_and_manifest(tmp_path):
    run = RunConfig(snr_grid="0, 10,20", hidden="8,8", channels="vtv-us", pooled_snr="yes")
    assert run.snr_grid == (0.0, 10.0, 20.0) and run.hidden == (8, 8) and run.pooled_snr
    p = tmp_path / "manifest.txt"
    p.write_text(run.to_manifest())
    assert RunConfig.from_manifest(p) == run
    with pytest.raises(ConfigError):
        RunConfig(frames="many")
    with pytest.raises(ConfigError):
        RunConfig.from_mapping({"nonsense": 1})
    with pytest.raises(ConfigError):
        RunConfig(channels=("mars",))
    with pytest.raises(ConfigError):
        RunConfig(snr_grid=())


def test_dataset_count_and_format(tmp_path):
    run = RunConfig(seed=3)
    p = tmp_path / "d.xchd"
    x, y = generate_dataset(run, "vtv-us", "STA", 20.0, p, n_symbols=100)
    assert x.shape == y.shape == (100, 104)
    raw = p.read_bytes()
    assert raw[:4] == b"XCHD"
    assert struct.unpack("<IIQ", raw[4:20]) == (1, 52, 100)
    assert len(raw) == 20 + 100 * 208 * 4
    rx, ry = read_dataset(p)
    np.testing.assert_array_equal(rx, x)
    np.testing.assert_array_equal(ry, y)
    q = tmp_path / "e.xchd"
    generate_dataset(run, "vtv-us", "STA", 20.0, q, n_symbols=100)
    assert q.read_bytes() == raw


def test_dataset_contents_match_estimators(cfg):
    run = RunConfig(seed=1)
    sets = generate_datasets(run, "vti-us", ["STA", "TRFI"], 30.0, n_symbols=60)
    frame, true_h = simulate_frame(cfg, run.channel_model("vti-us"), 30.0, frame_seed(1, 1, "vti-us", 30.0, 0))
    want = complex_to_real(run_conventional(frame, cfg, "TRFI").estimates.T)
    np.testing.assert_allclose(sets["TRFI"][0][:50], want, rtol=1e-6, atol=1e-6)
    np.testing.assert_allclose(sets["STA"][1][:50], complex_to_real(true_h.T), rtol=1e-6, atol=1e-6)
    np.testing.assert_array_equal(sets["STA"][1], sets["TRFI"][1])


def test_write_dataset_shape_check(tmp_path):
    with pytest.raises(ValueError):
        write_dataset(tmp_path / "x", np.zeros((3, 104)), np.zeros((3, 100)))


def test_missing_dataset(tmp_path):
    with pytest.raises(MissingArtifactError):
        read_dataset(tmp_path / "none.xchd")


def test_spec_parsing():
    assert EstimatorSpec.parse("ls-hold").scheme == "LS"
    assert EstimatorSpec.parse("sta-fnn", "relevant").label == "STA-FNN_relevant"
    with pytest.raises(ConfigError):
        EstimatorSpec.parse("MMSE")
    with pytest.raises(ConfigError):
        EstimatorSpec.parse("STA", "relevant")


def test_perfect_csi_and_accounting():
    run = RunConfig(seed=0)
    rep = run_ber(run, "vtv-us", EstimatorSpec("perfect"), snr_grid=[40.0], frames=200)
    assert rep.total_bits[0] == 2 * 48 * 50 * 200
    assert 0 <= rep.bit_errors[0] <= rep.total_bits[0]
    assert rep.ber[0] < 1e-4


def test_ls_hold_error_floor():
    run = RunConfig(seed=0)
    rep = run_ber(run, "vtv-us", EstimatorSpec("LS"), snr_grid=[30.0, 40.0], frames=150)
    assert rep.ber[1] > rep.ber[0] / 2


def test_ber_statistically_monotone():
    run = RunConfig(seed=0)
    reps = run_ber_many(run, "vtv-us", [EstimatorSpec("STA"), EstimatorSpec("DPA")], snr_grid=[10.0, 20.0, 30.0], frames=80)
    for r in reps:
        se = r.ber_se
        for j in range(len(r.ber) - 1):
            assert r.ber[j + 1] <= r.ber[j] + 3 * np.hypot(se[j], se[j + 1])


def test_fnn_without_models_errors():
    with pytest.raises(MissingArtifactError):
        run_ber(RunConfig(), "vtv-us", EstimatorSpec("STA-FNN"), snr_grid=[20.0], frames=1)


def test_model_store_missing_names_command(tmp_path):
    store = ModelStore(tmp_path, "vtv-us")
    with pytest.raises(MissingArtifactError, match="xaichest train-utility"):
        store(EstimatorSpec("STA-FNN"), 40.0)
    with pytest.raises(MissingArtifactError, match="xaichest train-utility"):
        run_ber(RunConfig(), "vtv-us", EstimatorSpec("STA-FNN"), store, snr_grid=[40.0], frames=1)


def test_snr_at_ber():
    assert snr_at_ber([0, 10, 20], [1e-1, 1e-3, 1e-5], 1e-4) == pytest.approx(15.0)
    assert snr_at_ber([0, 10], [1e-1, 1e-2], 1e-4) is None
    assert snr_at_ber([0, 10], [1e-5, 1e-6], 1e-4) is None


def test_compare_identical_and_shifted():
    snr = np.arange(0, 45, 5)
    curve = 10.0 ** (-0.2 * snr - 0.5)
    a = fake_report("A", snr, curve, frames=10_000)
    cmp = compare_variants([a, a], 1e-4)
    assert cmp.gain_db[1] == pytest.approx(0.0)
    shifted = np.concatenate([curve[1:], [curve[-1] * 10 ** -1]])
    b = fake_report("B", snr, shifted, frames=10_000)
    cmp = compare_variants([a, b], 1e-4)
    assert cmp.gain_db[1] == pytest.approx(5.0, abs=0.05)
    text = cmp.format()
    assert "gain_dB" in text and "+5.0" in text


def test_compare_not_reached():
    snr = [0.0, 10.0]
    cmp = compare_variants([fake_report("A", snr, [0.2, 0.1]), fake_report("B", snr, [0.1, 1e-5])], 1e-4)
    assert cmp.snr_at_target[0] is None and cmp.gain_db[1] is None
    assert "not reached" in cmp.format()
    with pytest.raises(ValueError):
        compare_variants([fake_report("A", snr, [0.2, 0.1]), fake_report("B", [0.0, 5.0], [0.2, 0.1])])


def test_emit_reports(tmp_path):
    snr = np.arange(0, 45, 5)
    reps = [fake_report("STA", snr, np.full(9, 0.01)), fake_report("TRFI", snr, np.full(9, 0.02))]
    b = np.linspace(0, 1, 52)
    rel, irr = classify_subcarriers(b, 0.3)
    mask = MaskReport(np.concatenate([b, b]), b, rel, irr, 0.3, {"scheme": "STA-FNN"})
    written = emit_reports(reps, [mask], tmp_path, RunConfig())
    names = sorted(p.name for p in written)
    assert names == ["ber_STA_full.csv", "ber_TRFI_full.csv", "manifest.txt", "mask_STA-FNN.csv"]
    for r in reps:
        lines = (tmp_path / f"ber_{r.label}_full.csv").read_text().splitlines()
        assert lines[0] == "snr_db,ber,nmse_db" and len(lines) == 1 + len(snr)
    body = [l for l in (tmp_path / "mask_STA-FNN.csv").read_text().splitlines() if not l.startswith("#")]
    assert len(body) == 1 + 52
    back = read_ber_csv(tmp_path / "ber_STA_full.csv")
    np.testing.assert_allclose(back.ber, 0.01, rtol=1e-3)


@pytest.mark.slow
def test_sta_fnn_beats_sta_nmse(cfg):
    run = RunConfig(seed=0)
    x, y = generate_dataset(run, "vtv-us", "STA", 40.0, n_symbols=10_000)
    res = train_utility(x, y, (15, 15, 15), TrainConfig(epochs=100, seed=0))
    xt, yt = x[res.test_idx], y[res.test_idx]
    fnn = np.mean((res.model(xt) - yt) ** 2) / np.mean(yt ** 2)
    sta = np.mean((xt - yt) ** 2) / np.mean(yt ** 2)
    assert fnn < sta
