"""Datasets, BER Monte-Carlo sweeps, comparison tables and the end-to-end pipeline."""

from __future__ import annotations

import csv
import dataclasses
import logging
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import ChannelModel, apply_channel, get_channel_model, make_channel
from .errors import ConfigError, MissingArtifactError
from .estimators import StaParams, nmse, run_conventional
from .neural import FnnModel, TrainConfig, complex_to_real, real_to_complex, split_indices, train_utility
from .phy import FrequencyFrame, OfdmConfig, build_frame, demap_qpsk, frame_to_time, receive_frame
from .xai import (
    DEFAULT_THRESHOLDS,
    MaskReport,
    XaiConfig,
    aggregate_mask,
    build_reduced_dataset,
    read_mask_csv,
    reduce_inputs,
    train_interpreter,
    write_mask_csv,
)

logger = logging.getLogger(__name__)

DATASET_MAGIC = b"XCHD"
DATASET_VERSION = 1
VARIANTS = ("full", "relevant", "irrelevant")
FNN_BASES = ("STA", "TRFI")

# seed-stream tags; evaluation never shares a stream with dataset generation
_DATASET_STREAM = 1
_EVAL_STREAM = 2


def _snr_key(snr_db: float) -> int:
    return int(round(snr_db * 1000)) & 0xFFFFFFFF


def frame_seed(master: int, stream: int, channel: str, snr_db: float, frame: int) -> np.random.SeedSequence:
    """Per-frame seed: SeedSequence over (master, stream, crc32(channel), snr, frame)."""
    return np.random.SeedSequence(
        [master, stream, zlib.crc32(channel.lower().encode()), _snr_key(snr_db), frame]
    )


# --------------------------------------------------------------------------- config


def _parse_list(value, cast):
    if isinstance(value, str):
        return tuple(cast(v.strip()) for v in value.split(",") if v.strip())
    return tuple(cast(v) for v in value)


@dataclass
class RunConfig:
    channels: tuple[str, ...] = ("vtv-us", "vti-us")
    snr_grid: tuple[float, ...] = tuple(range(0, 41, 5))
    frames: int = 2000
    dataset_symbols: int = 100_000
    seed: int = 0
    out_dir: str = "runs/default"
    schemes: tuple[str, ...] = FNN_BASES
    variants: tuple[str, ...] = VARIANTS
    epochs: int = 500
    batch_size: int = 128
    lr: float = 1e-3
    split: float = 0.8
    hidden: tuple[int, ...] = (15, 15, 15)
    xai_lambda: float = 0.2
    xai_snr: float = 40.0
    xai_epochs: int = 500
    threshold_sta: float = DEFAULT_THRESHOLDS["STA"]
    threshold_trfi: float = DEFAULT_THRESHOLDS["TRFI"]
    alpha: float = 2.0
    beta: int = 2
    trfi_span: int = 1
    doppler_hz: float = 1000.0
    pooled_snr: bool = False

    _types = {
        "channels": lambda v: _parse_list(v, str),
        "snr_grid": lambda v: _parse_list(v, float),
        "schemes": lambda v: _parse_list(v, lambda s: s.upper()),
        "variants": lambda v: _parse_list(v, str),
        "hidden": lambda v: _parse_list(v, int),
        "pooled_snr": lambda v: v if isinstance(v, bool) else str(v).lower() in ("1", "true", "yes"),
    }

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            cast = self._types.get(f.name)
            if cast is None:
                cast = {"int": int, "float": float, "str": str}[f.type]
            try:
                setattr(self, f.name, cast(value))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {f.name}: {value!r}") from exc
        if not self.snr_grid:
            raise ConfigError("snr_grid must not be empty")
        if self.frames < 1 or self.dataset_symbols < 1:
            raise ConfigError("frames and dataset_symbols must be >= 1")
        for v in self.variants:
            if v not in VARIANTS:
                raise ConfigError(f"unknown variant {v!r}")
        for s in self.schemes:
            if s not in FNN_BASES:
                raise ConfigError(f"unknown FNN base scheme {s!r}")
        for c in self.channels:
            get_channel_model(c)
        if not 0 < self.split < 1:
            raise ConfigError("split must lie in (0, 1)")

    def threshold(self, scheme: str) -> float:
        return {"STA": self.threshold_sta, "TRFI": self.threshold_trfi}[scheme.upper()]

    def channel_model(self, name: str) -> ChannelModel:
        return get_channel_model(name).with_doppler(self.doppler_hz)

    def sta_params(self) -> StaParams:
        return StaParams(self.alpha, self.beta, self.trfi_span)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.epochs, self.batch_size, self.lr, self.split, self.seed)

    def xai_config(self, scheme: str) -> XaiConfig:
        return XaiConfig(
            lam=self.xai_lambda,
            threshold=self.threshold(scheme),
            epochs=self.xai_epochs,
            batch_size=self.batch_size,
            lr=self.lr,
            seed=self.seed,
            hidden=self.hidden,
        )

    def to_manifest(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, mapping: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(mapping) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**mapping)

    @classmethod
    def from_manifest(cls, path) -> "RunConfig":
        return cls.from_mapping(read_kv_file(path))


def read_kv_file(path) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


# --------------------------------------------------------------------------- simulation


def simulate_frame(
    cfg: OfdmConfig,
    model: ChannelModel,
    snr_db: float,
    seed,
) -> tuple[FrequencyFrame, np.ndarray]:
    """Random bits through a fresh channel realization; returns (received frame, true h)."""
    rng = np.random.default_rng(seed)
    frame = build_frame(cfg, rng=rng)
    real = make_channel(model, cfg, rng)
    rx = apply_channel(frame_to_time(cfg, frame), real, snr_db, rng)
    return receive_frame(cfg, frame, rx), real.true_h


def generate_datasets(
    run: RunConfig,
    channel: str,
    schemes,
    snr_db: float,
    n_symbols: int | None = None,
    cfg: OfdmConfig | None = None,
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """(estimate, truth) pairs for several schemes from one shared set of frames."""
    cfg = cfg or OfdmConfig()
    n_symbols = run.dataset_symbols if n_symbols is None else n_symbols
    model = run.channel_model(channel)
    params = run.sta_params()
    n_frames = -(-n_symbols // cfg.symbols_per_frame)
    ests = {s: [] for s in schemes}
    truth = []
    for f in range(n_frames):
        frame, true_h = simulate_frame(cfg, model, snr_db, frame_seed(run.seed, _DATASET_STREAM, channel, snr_db, f))
        truth.append(true_h.T)
        for s in schemes:
            ests[s].append(run_conventional(frame, cfg, s, params).estimates.T)
    y = complex_to_real(np.concatenate(truth)[:n_symbols]).astype(np.float32)
    return {
        s: (complex_to_real(np.concatenate(ests[s])[:n_symbols]).astype(np.float32), y)
        for s in schemes
    }


def generate_dataset(run: RunConfig, channel: str, scheme: str, snr_db: float, path=None, n_symbols=None, cfg=None):
    """One scheme's dataset; written to ``path`` when given."""
    x, y = generate_datasets(run, channel, [scheme], snr_db, n_symbols, cfg)[scheme]
    if path is not None:
        write_dataset(path, x, y)
    return x, y


def write_dataset(path, x, y) -> None:
    x = np.ascontiguousarray(x, dtype="<f4")
    y = np.ascontiguousarray(y, dtype="<f4")
    if x.shape != y.shape or x.ndim != 2 or x.shape[1] % 2:
        raise ValueError("inputs and targets must both be (n, 2*K_on)")
    k_on = x.shape[1] // 2
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<IIQ", DATASET_VERSION, k_on, len(x)))
        fh.write(np.concatenate([x, y], axis=1).tobytes())


def read_dataset(path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"dataset {path} not found; create it with `xaichest dataset`")
    with open(path, "rb") as fh:
        head = fh.read(20)
    if head[:4] != DATASET_MAGIC:
        raise ValueError(f"{path}: not a dataset file")
    version, k_on, count = struct.unpack("<IIQ", head[4:])
    if version != DATASET_VERSION:
        raise ValueError(f"{path}: unsupported dataset version {version}")
    data = np.memmap(path, dtype="<f4", mode="r", offset=20, shape=(count, 4 * k_on))
    return np.array(data[:, : 2 * k_on]), np.array(data[:, 2 * k_on:])


# --------------------------------------------------------------------------- BER


@dataclass(frozen=True)
class EstimatorSpec:
    """One curve: a base scheme, optionally post-processed by an FNN."""

    scheme: str  # LS, DPA, STA, TRFI, perfect, STA-FNN, TRFI-FNN
    variant: str = "full"

    @property
    def is_fnn(self) -> bool:
        return self.scheme.endswith("-FNN")

    @property
    def base(self) -> str:
        return self.scheme[:-4] if self.is_fnn else self.scheme

    @property
    def label(self) -> str:
        return f"{self.scheme}_{self.variant}" if self.is_fnn else self.scheme

    @classmethod
    def parse(cls, scheme: str, variant: str = "full") -> "EstimatorSpec":
        s = scheme.strip()
        upper = s.upper()
        if upper in ("LS-HOLD", "LS"):
            s = "LS"
        elif upper == "PERFECT":
            s = "perfect"
        elif upper in ("DPA", "STA", "TRFI"):
            s = upper
        elif upper in ("STA-FNN", "TRFI-FNN"):
            s = upper
        else:
            raise ConfigError(f"unknown scheme {scheme!r}")
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant {variant!r}")
        spec = cls(s, variant)
        if not spec.is_fnn and variant != "full":
            raise ConfigError("relevant/irrelevant variants apply only to FNN schemes")
        return spec


@dataclass
class BerReport:
    label: str
    channel: str
    snr_db: np.ndarray
    bit_errors: np.ndarray
    total_bits: np.ndarray
    frame_errors: list  # per SNR: per-frame error counts
    nmse: np.ndarray  # linear, per SNR
    bits_per_frame: int
    meta: dict = field(default_factory=dict)

    @property
    def ber(self) -> np.ndarray:
        return self.bit_errors / self.total_bits

    @property
    def ber_se(self) -> np.ndarray:
        """Standard error of the BER from frame-to-frame spread (errors cluster within frames)."""
        out = []
        for errs in self.frame_errors:
            per_frame = np.asarray(errs) / self.bits_per_frame
            out.append(per_frame.std(ddof=1) / np.sqrt(len(per_frame)) if len(per_frame) > 1 else np.nan)
        return np.array(out)

    @property
    def nmse_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10 * np.log10(self.nmse)


class ModelStore:
    """Looks up trained utility models and masks inside a models directory."""

    def __init__(self, root, channel: str, pooled: bool = False):
        self.root = Path(root)
        self.channel = channel.lower()
        self.pooled = pooled
        self._cache = {}

    def utility_path(self, scheme: str, variant: str, snr_db: float) -> Path:
        tag = "pooled" if self.pooled else f"snr{snr_db:g}"
        return self.root / f"{self.channel}_{scheme}_{variant}_{tag}.xcfn"

    def interpreter_path(self, scheme: str) -> Path:
        return self.root / f"{self.channel}_{scheme}_xai.xcfn"

    def mask_path(self, scheme: str) -> Path:
        return self.root / f"mask_{scheme}.csv"

    def subcarriers(self, scheme: str, variant: str):
        if variant == "full":
            return None
        path = self.mask_path(scheme)
        if not path.exists():
            raise MissingArtifactError(
                f"mask {path} not found; run `xaichest classify ... --out {path}` first"
            )
        key = ("mask", scheme)
        if key not in self._cache:
            self._cache[key] = read_mask_csv(path)
        mask = self._cache[key]
        return mask.relevant if variant == "relevant" else mask.irrelevant

    def __call__(self, spec: EstimatorSpec, snr_db: float):
        path = self.utility_path(spec.scheme, spec.variant, snr_db)
        if path not in self._cache:
            if not path.exists():
                raise MissingArtifactError(
                    f"model {path} not found; train it with `xaichest train-utility "
                    f"--dataset <{spec.base} dataset at {snr_db:g} dB> --out {path}`"
                    + ("" if spec.variant == "full" else f" --mask {self.mask_path(spec.scheme)} --variant {spec.variant}")
                )
            self._cache[path] = FnnModel.load(path)
        return self._cache[path], self.subcarriers(spec.scheme, spec.variant)


def _apply_fnn(model: FnnModel, est: np.ndarray, subcarriers, k_on: int) -> np.ndarray:
    x = complex_to_real(est.T)
    if subcarriers is not None:
        x = reduce_inputs(x, subcarriers, k_on)
    return real_to_complex(model(x).astype(np.float64)).T


def count_bit_errors(cfg: OfdmConfig, frame: FrequencyFrame, h_est: np.ndarray) -> int:
    """Zero-forcing equalization and hard QPSK decisions on every data subcarrier."""
    eq = frame.rx_grid[cfg.data_pos] / h_est[cfg.data_pos]
    _, bits = demap_qpsk(eq.T)
    return int(np.count_nonzero(bits != frame.tx_bits))


def run_ber_many(
    run: RunConfig,
    channel: str,
    specs,
    models=None,
    snr_grid=None,
    frames: int | None = None,
    cfg: OfdmConfig | None = None,
) -> list[BerReport]:
    """Evaluate several estimators on common frames (paired comparison).

    ``models(spec, snr_db)`` must return ``(FnnModel, subcarriers_or_None)``
    for every FNN spec.
    """
    cfg = cfg or OfdmConfig()
    specs = list(specs)
    snr_grid = np.asarray(run.snr_grid if snr_grid is None else snr_grid, dtype=float)
    frames = run.frames if frames is None else frames
    model = run.channel_model(channel)
    params = run.sta_params()
    bases = sorted({s.base for s in specs} - {"perfect"})
    bpf = cfg.bits_per_frame

    errs = np.zeros((len(specs), len(snr_grid), frames), dtype=np.int64)
    sq_err = np.zeros((len(specs), len(snr_grid)))
    power = np.zeros(len(snr_grid))
    for j, snr in enumerate(snr_grid):
        nets = {}
        for s in specs:
            if s.is_fnn:
                if models is None:
                    raise MissingArtifactError(f"{s.label} needs trained models")
                nets[s] = models(s, snr)
        for f in range(frames):
            frame, true_h = simulate_frame(cfg, model, snr, frame_seed(run.seed, _EVAL_STREAM, channel, snr, f))
            conv = {b: run_conventional(frame, cfg, b, params).estimates for b in bases}
            conv["perfect"] = true_h
            power[j] += np.sum(np.abs(true_h) ** 2)
            for i, s in enumerate(specs):
                h = conv[s.base]
                if s.is_fnn:
                    net, sc = nets[s]
                    h = _apply_fnn(net, h, sc, cfg.k_on)
                errs[i, j, f] = count_bit_errors(cfg, frame, h)
                sq_err[i, j] += np.sum(np.abs(h - true_h) ** 2)

    reports = []
    for i, s in enumerate(specs):
        reports.append(
            BerReport(
                label=s.label,
                channel=channel,
                snr_db=snr_grid.copy(),
                bit_errors=errs[i].sum(axis=1),
                total_bits=np.full(len(snr_grid), frames * bpf, dtype=np.int64),
                frame_errors=[errs[i, j] for j in range(len(snr_grid))],
                nmse=sq_err[i] / power,
                bits_per_frame=bpf,
                meta={"scheme": s.scheme, "variant": s.variant},
            )
        )
    return reports


def run_ber(run: RunConfig, channel: str, spec: EstimatorSpec, models=None, **kw) -> BerReport:
    return run_ber_many(run, channel, [spec], models, **kw)[0]


# --------------------------------------------------------------------------- comparison


def snr_at_ber(snr_db, ber, target: float) -> float | None:
    """First SNR where the curve crosses ``target``, interpolated in (dB, log10 BER).

    Zero-BER points are floored at 1e-12. Returns None when the target is
    outside the measured range.
    """
    snr = np.asarray(snr_db, dtype=float)
    b = np.maximum(np.asarray(ber, dtype=float), 1e-12)
    lt = np.log10(target)
    lb = np.log10(b)
    if lb[0] <= lt:
        return float(snr[0]) if lb[0] == lt else None
    for i in range(len(snr) - 1):
        if lb[i] >= lt >= lb[i + 1]:
            if lb[i] == lb[i + 1]:
                return float(snr[i])
            return float(snr[i] + (lt - lb[i]) * (snr[i + 1] - snr[i]) / (lb[i + 1] - lb[i]))
    return None


@dataclass
class Comparison:
    snr_db: np.ndarray
    labels: list[str]
    ber: np.ndarray  # reports x snr
    snr_at_target: list  # float or None
    gain_db: list  # vs the first report; None when either side not reached
    target_ber: float

    def format(self) -> str:
        head = ["snr_db"] + self.labels
        rows = [head]
        for j, snr in enumerate(self.snr_db):
            rows.append([f"{snr:g}"] + [f"{b:.3e}" for b in self.ber[:, j]])
        reach = [f"{v:.2f}" if v is not None else "not reached" for v in self.snr_at_target]
        gain = [f"{v:+.2f}" if v is not None else "n/a" for v in self.gain_db]
        rows.append([f"SNR@{self.target_ber:g}"] + reach)
        rows.append(["gain_dB"] + gain)
        widths = [max(len(r[c]) for r in rows) for c in range(len(head))]
        return "\n".join("  ".join(cell.rjust(w) for cell, w in zip(r, widths)) for r in rows) + "\n"


def compare_variants(reports, target_ber: float = 1e-4) -> Comparison:
    """BER table plus SNR-at-target and gain of each report over the first one."""
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to compare")
    grid = np.asarray(reports[0].snr_db)
    for r in reports[1:]:
        if not np.array_equal(np.asarray(r.snr_db), grid):
            raise ValueError("reports do not share an SNR grid")
    at = [snr_at_ber(r.snr_db, r.ber, target_ber) for r in reports]
    ref = at[0]
    gains = [None if (ref is None or a is None) else ref - a for a in at]
    return Comparison(grid, [r.label for r in reports], np.array([r.ber for r in reports]), at, gains, target_ber)


# --------------------------------------------------------------------------- reports


def write_ber_csv(report: BerReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["snr_db", "ber", "nmse_db"])
        for snr, ber, nm in zip(report.snr_db, report.ber, report.nmse_db):
            w.writerow([repr(float(snr)), repr(float(ber)), repr(float(nm))])


@dataclass
class CsvReport:
    """BER curve loaded back from CSV (enough for `compare_variants`)."""

    label: str
    snr_db: np.ndarray
    ber: np.ndarray
    nmse_db: np.ndarray


def read_ber_csv(path) -> CsvReport:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"report {path} not found; produce it with `xaichest ber`")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    col = lambda k: np.array([float(r[k]) for r in rows])
    label = path.stem[4:] if path.stem.startswith("ber_") else path.stem
    return CsvReport(label, col("snr_db"), col("ber"), col("nmse_db"))


def ber_filename(report: BerReport) -> str:
    scheme = report.meta.get("scheme", report.label)
    variant = report.meta.get("variant", "full")
    return f"ber_{scheme}_{variant}.csv"


def emit_reports(reports, mask_reports, out_dir, run: RunConfig | None = None) -> list[Path]:
    """Write one BER CSV per report, one mask CSV per mask report, and the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for r in reports:
        p = out / ber_filename(r)
        write_ber_csv(r, p)
        written.append(p)
    for m in mask_reports:
        p = out / f"mask_{m.meta.get('scheme', 'unknown')}.csv"
        write_mask_csv(m, p)
        written.append(p)
    if run is not None:
        p = out / "manifest.txt"
        p.write_text(run.to_manifest())
        written.append(p)
    return written


# --------------------------------------------------------------------------- pipeline


@dataclass
class ChannelResult:
    reports: list[BerReport]
    masks: dict  # scheme -> MaskReport


def _train(x, y, run: RunConfig, path: Path) -> FnnModel:
    result = train_utility(x, y, run.hidden, run.train_config())
    # persist then reload so in-memory and on-disk models are identical (float32)
    result.model.save(path)
    logger.info("%s: test MSE %.3e", path.name, result.test_loss)
    return FnnModel.load(path)


def run_channel(run: RunConfig, channel: str, out_dir, cfg: OfdmConfig | None = None) -> ChannelResult:
    """Datasets, utility and interpretability training, masks and BER sweep for one channel."""
    cfg = cfg or OfdmConfig()
    out = Path(out_dir) / channel.lower()
    data_dir = out / "datasets"
    model_dir = out / "models"
    data_dir.mkdir(parents=True, exist_ok=True)
    model_dir.mkdir(parents=True, exist_ok=True)
    store = ModelStore(model_dir, channel, run.pooled_snr)
    fnn = [f"{s}-FNN" for s in run.schemes]

    train_snrs = sorted(set(run.snr_grid) | {run.xai_snr})
    data = {}
    for snr in train_snrs:
        sets = generate_datasets(run, channel, run.schemes, snr, cfg=cfg)
        for s, (x, y) in sets.items():
            write_dataset(data_dir / f"{s}_snr{snr:g}.xchd", x, y)
            data[s, snr] = (x, y)

    def training_rows(scheme, snr, transform=None):
        snrs = train_snrs if run.pooled_snr else [snr]
        xs, ys = [], []
        for s_ in snrs:
            x, y = data[scheme, s_]
            if transform is not None:
                x, y = transform(x, y)
            xs.append(x)
            ys.append(y)
        return np.concatenate(xs), np.concatenate(ys)

    model_snrs = [None] if run.pooled_snr else train_snrs
    masks = {}
    for base, name in zip(run.schemes, fnn):
        for snr in model_snrs:
            _train(*training_rows(base, snr), run, store.utility_path(name, "full", snr))

        # interpretability model: one per scheme, at the configured SNR
        x, y = data[base, run.xai_snr]
        train_idx, test_idx = split_indices(len(x), run.split, run.seed)
        utility = FnnModel.load(store.utility_path(name, "full", run.xai_snr))
        xcfg = run.xai_config(base)
        interp = train_interpreter(utility, x[train_idx], y[train_idx], xcfg).model
        interp.save(store.interpreter_path(name))
        interp = FnnModel.load(store.interpreter_path(name))
        meta = {
            "scheme": name,
            "channel": channel,
            "snr_db": run.xai_snr,
            "lambda": run.xai_lambda,
            "seed": run.seed,
        }
        mask = aggregate_mask(interp, x[test_idx], xcfg.threshold, meta)
        write_mask_csv(mask, store.mask_path(name))
        masks[name] = mask
        logger.info("%s %s: %d relevant subcarriers", channel, name, len(mask.relevant))

        for variant in run.variants:
            if variant == "full":
                continue
            sc = mask.relevant if variant == "relevant" else mask.irrelevant
            if len(sc) == 0:
                logger.warning("%s %s: no %s subcarriers, variant skipped", channel, name, variant)
                continue
            reduce = lambda x_, y_, sc=sc: build_reduced_dataset(x_, y_, sc, cfg.k_on)
            for snr in model_snrs:
                _train(*training_rows(base, snr, reduce), run, store.utility_path(name, variant, snr))

    specs = [EstimatorSpec("perfect"), EstimatorSpec("LS")]
    specs += [EstimatorSpec(b) for b in run.schemes]
    for base, name in zip(run.schemes, fnn):
        for variant in run.variants:
            if variant == "full" or len(masks[name].relevant if variant == "relevant" else masks[name].irrelevant):
                specs.append(EstimatorSpec(name, variant))
    reports = run_ber_many(run, channel, specs, store, cfg=cfg)
    emit_reports(reports, masks.values(), out)
    return ChannelResult(reports, masks)


def run_pipeline(run: RunConfig, out_dir=None, cfg: OfdmConfig | None = None) -> dict[str, ChannelResult]:
    """Full reproduction for every configured channel, plus the run manifest."""
    out = Path(out_dir or run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.txt").write_text(run.to_manifest())
    return {ch: run_channel(run, ch, out, cfg) for ch in run.channels}
