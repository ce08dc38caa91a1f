"""Command-line entry point.

Every subcommand also accepts ``--config FILE`` holding ``key = value``
lines named like its long flags (``snr_grid = 0,10,20``); explicit flags
win over the file. Exit codes: 0 success, 2 configuration error,
3 missing artifact, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, MissingArtifactError, NumericalError
from .harness import (
    EstimatorSpec,
    ModelStore,
    RunConfig,
    compare_variants,
    generate_dataset,
    read_ber_csv,
    read_dataset,
    read_kv_file,
    run_ber_many,
    run_pipeline,
    write_ber_csv,
)
from .neural import FnnModel, TrainConfig, split_indices, train_utility
from .phy import OfdmConfig
from .xai import (
    DEFAULT_THRESHOLDS,
    XaiConfig,
    aggregate_mask,
    build_reduced_dataset,
    read_mask_csv,
    train_interpreter,
    write_mask_csv,
)

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC = 0, 2, 3, 4

logger = logging.getLogger("xaichest")


def _floats(text) -> tuple[float, ...]:
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _ints(text) -> tuple[int, ...]:
    return tuple(int(v) for v in str(text).split(",") if v.strip())


# (flag, type, default, help); default None means required
_COMMANDS = {
    "dataset": [
        ("channel", str, None, "vtv-us or vti-us"),
        ("scheme", str, None, "STA or TRFI (any conventional scheme)"),
        ("snr", float, None, "SNR in dB"),
        ("symbols", int, 100_000, "number of (estimate, truth) records"),
        ("seed", int, 0, "master seed"),
        ("doppler", float, 1000.0, "maximum Doppler shift in Hz"),
        ("out", str, None, "output dataset file"),
    ],
    "train-utility": [
        ("dataset", str, None, "dataset file"),
        ("arch", _ints, (15, 15, 15), "hidden layer sizes, comma separated"),
        ("epochs", int, 500, "training epochs"),
        ("batch", int, 128, "mini-batch size"),
        ("lr", float, 1e-3, "Adam learning rate"),
        ("split", float, 0.8, "train fraction"),
        ("seed", int, 0, "training seed"),
        ("mask", str, "", "mask CSV; restricts inputs to one subcarrier class"),
        ("variant", str, "full", "full, relevant or irrelevant"),
        ("out", str, None, "output model file"),
    ],
    "train-xai": [
        ("utility", str, None, "frozen utility model"),
        ("dataset", str, None, "dataset file (its train split is used)"),
        ("lambda", float, XaiConfig.lam, "mask penalty weight"),
        ("arch", _ints, (15, 15, 15), "hidden layer sizes"),
        ("epochs", int, 500, "training epochs"),
        ("batch", int, 128, "mini-batch size"),
        ("lr", float, 1e-3, "Adam learning rate"),
        ("split", float, 0.8, "train fraction"),
        ("seed", int, 0, "training seed"),
        ("out", str, None, "output interpreter model"),
    ],
    "classify": [
        ("xai_model", str, None, "trained interpreter model"),
        ("dataset", str, None, "dataset file (its test split is used)"),
        ("threshold", float, DEFAULT_THRESHOLDS["STA"], "irrelevance threshold on b_bar"),
        ("split", float, 0.8, "train fraction"),
        ("seed", int, 0, "split seed"),
        ("out", str, None, "output mask CSV"),
    ],
    "ber": [
        ("channel", str, None, "vtv-us or vti-us"),
        ("scheme", str, None, "perfect, LS, DPA, STA, TRFI, STA-FNN or TRFI-FNN"),
        ("variant", str, "full", "FNN input variant"),
        ("models", str, "", "model directory (pipeline naming) or a single model file"),
        ("mask", str, "", "mask CSV for reduced variants with a single model file"),
        ("snr_grid", _floats, tuple(range(0, 41, 5)), "comma separated SNRs in dB"),
        ("frames", int, 2000, "frames per SNR"),
        ("seed", int, 0, "master seed"),
        ("doppler", float, 1000.0, "maximum Doppler shift in Hz"),
        ("out", str, None, "output BER CSV"),
    ],
    "report": [
        ("inputs", str, None, "BER CSVs; the first one is the reference"),
        ("target_ber", float, 1e-4, "target BER for the gain column"),
        ("out", str, "", "optional text file for the table"),
    ],
    "pipeline": [
        ("out_dir", str, "", "output directory (default: out_dir from the config)"),
    ],
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xaichest", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, options in _COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value file; flags override it")
        for flag, _, _, help_ in options:
            kw = {"nargs": "+"} if flag == "inputs" else {}
            p.add_argument("--" + flag.replace("_", "-"), dest=flag, default=None, help=help_, **kw)
    return parser


def resolve_options(command: str, args: argparse.Namespace) -> dict:
    """Merge flags over the config file over defaults, casting every value."""
    options = _COMMANDS[command]
    from_file = read_kv_file(args.config) if args.config else {}
    if command != "pipeline":
        known = {flag for flag, *_ in options}
        unknown = set(from_file) - known
        if unknown:
            raise ConfigError(f"unknown keys for {command}: {sorted(unknown)}")
    out = {}
    for flag, cast, default, _ in options:
        value = getattr(args, flag)
        if value is None:
            value = from_file.get(flag, default)
        if value is None:
            raise ConfigError(f"--{flag.replace('_', '-')} is required")
        if flag == "inputs" and isinstance(value, str):
            value = value.split()
        try:
            out[flag] = value if flag == "inputs" or value == default else cast(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for --{flag}: {value!r}") from exc
    return out


def _cmd_dataset(o: dict) -> None:
    run = RunConfig(channels=(o["channel"],), seed=o["seed"], doppler_hz=o["doppler"], schemes=("STA",))
    generate_dataset(run, o["channel"], o["scheme"].upper(), o["snr"], o["out"], o["symbols"])
    logger.info("wrote %d records to %s", o["symbols"], o["out"])


def _load_model(path) -> FnnModel:
    if not Path(path).exists():
        raise MissingArtifactError(f"model {path} not found")
    return FnnModel.load(path)


def _cmd_train_utility(o: dict) -> None:
    x, y = read_dataset(o["dataset"])
    if o["variant"] != "full":
        if not o["mask"]:
            raise ConfigError("--mask is required for the relevant/irrelevant variants")
        if not Path(o["mask"]).exists():
            raise MissingArtifactError(f"mask {o['mask']} not found; run `xaichest classify` first")
        mask = read_mask_csv(o["mask"])
        sc = {"relevant": mask.relevant, "irrelevant": mask.irrelevant}.get(o["variant"])
        if sc is None:
            raise ConfigError(f"unknown variant {o['variant']!r}")
        if len(sc) == 0:
            raise ConfigError(f"mask {o['mask']} has no {o['variant']} subcarriers")
        x, y = build_reduced_dataset(x, y, sc, y.shape[1] // 2)
    cfg = TrainConfig(o["epochs"], o["batch"], o["lr"], o["split"], o["seed"])
    result = train_utility(x, y, o["arch"], cfg)
    result.model.save(o["out"])
    logger.info("test MSE %.4e, model %s", result.test_loss, o["out"])


def _cmd_train_xai(o: dict) -> None:
    utility = _load_model(o["utility"])
    x, y = read_dataset(o["dataset"])
    train_idx, _ = split_indices(len(x), o["split"], o["seed"])
    cfg = XaiConfig(
        lam=o["lambda"],
        epochs=o["epochs"],
        batch_size=o["batch"],
        lr=o["lr"],
        seed=o["seed"],
        hidden=o["arch"],
    )
    result = train_interpreter(utility, x[train_idx], y[train_idx], cfg)
    result.model.save(o["out"])
    logger.info("final L_N %.4e, model %s", result.loss[-1], o["out"])


def _cmd_classify(o: dict) -> None:
    interp = _load_model(o["xai_model"])
    x, _ = read_dataset(o["dataset"])
    _, test_idx = split_indices(len(x), o["split"], o["seed"])
    meta = {"xai_model": Path(o["xai_model"]).name, "dataset": Path(o["dataset"]).name}
    report = aggregate_mask(interp, x[test_idx], o["threshold"], meta)
    write_mask_csv(report, o["out"])
    print(f"{len(report.relevant)} relevant, {len(report.irrelevant)} irrelevant subcarriers")


class _SingleModel:
    def __init__(self, path, mask_path, variant):
        self.model = _load_model(path)
        self.subcarriers = None
        if variant != "full":
            if not mask_path:
                raise ConfigError("--mask is required for reduced variants with a single model file")
            if not Path(mask_path).exists():
                raise MissingArtifactError(f"mask {mask_path} not found")
            mask = read_mask_csv(mask_path)
            self.subcarriers = mask.relevant if variant == "relevant" else mask.irrelevant

    def __call__(self, spec, snr_db):
        return self.model, self.subcarriers


def _cmd_ber(o: dict) -> None:
    spec = EstimatorSpec.parse(o["scheme"], o["variant"])
    run = RunConfig(
        channels=(o["channel"],),
        snr_grid=o["snr_grid"],
        frames=o["frames"],
        seed=o["seed"],
        doppler_hz=o["doppler"],
    )
    models = None
    if spec.is_fnn:
        if not o["models"]:
            raise ConfigError("--models is required for FNN schemes")
        path = Path(o["models"])
        if path.is_dir():
            models = ModelStore(path, o["channel"])
        else:
            models = _SingleModel(path, o["mask"], spec.variant)
    (report,) = run_ber_many(run, o["channel"], [spec], models, cfg=OfdmConfig())
    write_ber_csv(report, o["out"])
    for snr, ber in zip(report.snr_db, report.ber):
        print(f"{snr:6g} dB  BER {ber:.4e}")


def _cmd_report(o: dict) -> None:
    reports = [read_ber_csv(p) for p in o["inputs"]]
    text = compare_variants(reports, o["target_ber"]).format()
    print(text, end="")
    if o["out"]:
        Path(o["out"]).write_text(text)


def _cmd_pipeline(o: dict, config_path) -> None:
    if not config_path:
        raise ConfigError("pipeline needs --config <manifest>")
    mapping = read_kv_file(config_path)
    if o["out_dir"]:
        mapping["out_dir"] = o["out_dir"]
    run = RunConfig.from_mapping(mapping)
    results = run_pipeline(run, run.out_dir)
    for channel, res in results.items():
        for rep in res.reports:
            print(f"{channel} {rep.label}: " + " ".join(f"{b:.3e}" for b in rep.ber))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "pipeline":
            # the pipeline's config file is a full run manifest, checked by RunConfig
            _cmd_pipeline(resolve_options("pipeline", args), args.config)
        else:
            o = resolve_options(args.command, args)
            handler = {
                "dataset": _cmd_dataset,
                "train-utility": _cmd_train_utility,
                "train-xai": _cmd_train_xai,
                "classify": _cmd_classify,
                "ber": _cmd_ber,
                "report": _cmd_report,
            }[args.command]
            handler(o)
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
