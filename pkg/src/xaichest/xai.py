"""Learned noise masks that expose which estimator inputs a utility network relies on.

An interpretability network N maps a stacked channel estimate h' to a
sigmoid mask B'. The input is perturbed as h'' = h' + B' * eps with
eps ~ N(0, 1), passed through the frozen utility network U, and N is
trained to minimise

    MSE(U(h''), h_true) - lam * mean(log B')

so it pushes noise onto inputs U can ignore and keeps it off the ones U
needs. Averaging the real/imaginary mask weights per subcarrier and
thresholding splits the subcarriers into relevant and irrelevant sets.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .neural import (
    AdamState,
    FnnModel,
    adam_step,
    check_finite,
    minibatches,
    mse_grad,
    mse_loss,
)

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = {"STA": 0.3, "TRFI": 0.6}


@dataclass(frozen=True)
class XaiConfig:
    lam: float = 0.2
    threshold: float = 0.3
    epochs: int = 500
    batch_size: int = 128
    lr: float = 1e-3
    seed: int = 0
    hidden: tuple[int, ...] = (15, 15, 15)
    dtype: str = "float32"

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if not 0 <= self.threshold <= 1:
            raise ValueError("threshold must lie in [0, 1]")


@dataclass
class MaskReport:
    b_prime_mean: np.ndarray  # 2*K_on
    b_bar: np.ndarray  # K_on
    relevant: np.ndarray
    irrelevant: np.ndarray
    threshold: float
    meta: dict = field(default_factory=dict)


def perturb(h_prime, b_prime, eps) -> np.ndarray:
    return np.asarray(h_prime) + np.asarray(b_prime) * np.asarray(eps)


def xai_loss(l_u: float, b_prime, lam: float) -> float:
    """Utility loss plus the log-barrier reward for large masks (natural log, mean-reduced)."""
    b = np.asarray(b_prime)
    if np.any(b <= 0):
        raise ValueError("mask weights must be strictly positive")
    return float(l_u - lam * np.mean(np.log(b)))


@dataclass
class InterpreterResult:
    model: FnnModel
    loss: list[float]  # mean L_N per epoch
    utility_loss: list[float]  # mean L_U per epoch
    initial_mask_mean: float


def train_interpreter(utility: FnnModel, x, y, cfg: XaiConfig = XaiConfig()) -> InterpreterResult:
    """Train the mask network against a frozen utility network.

    ``x``/``y`` are the training rows (stacked estimates and true channels).
    Gradients reach the mask through U's input gradient; U itself is never
    updated.
    """
    dtype = np.dtype(cfg.dtype)
    x = np.asarray(x, dtype=dtype)
    y = np.asarray(y, dtype=dtype)
    if x.shape[1] != utility.input_dim or y.shape[1] != utility.output_dim:
        raise ValueError(
            f"dataset dims ({x.shape[1]}, {y.shape[1]}) do not match utility "
            f"({utility.input_dim}, {utility.output_dim})"
        )
    if len(x) == 0 or len(x) != len(y):
        raise ValueError("x and y must be non-empty with matching rows")
    frozen = utility.astype(dtype) if utility.dtype != dtype else utility
    rng = np.random.default_rng([cfg.seed, 2])
    dim = x.shape[1]
    net = FnnModel.create(
        [dim, *cfg.hidden, dim],
        output_activation="sigmoid",
        rng=rng,
        dtype=dtype,
    )
    opt = AdamState.for_model(net, cfg.lr)
    initial = float(net(x).mean())

    losses, u_losses = [], []
    for epoch in range(cfg.epochs):
        tot_n = tot_u = 0.0
        for idx in minibatches(len(x), cfg.batch_size, rng):
            h = x[idx]
            b, n_cache = net.forward_cached(h)
            eps = rng.standard_normal(h.shape).astype(dtype)
            out, u_cache = frozen.forward_cached(perturb(h, b, eps))
            l_u = mse_loss(out, y[idx])
            l_n = xai_loss(l_u, b, cfg.lam)
            _, g_in = frozen.backward(u_cache, mse_grad(out, y[idx]))
            g_b = g_in * eps - cfg.lam / (b.size * b)
            grads, _ = net.backward(n_cache, g_b, input_grad=False)
            adam_step(net, grads, opt)
            tot_n += l_n * len(idx)
            tot_u += l_u * len(idx)
        losses.append(tot_n / len(x))
        u_losses.append(tot_u / len(x))
        check_finite(losses[-1], "interpretability loss", epoch)
    logger.debug("interpreter: mask mean %.3f -> %.3f", initial, float(net(x).mean()))
    return InterpreterResult(net, losses, u_losses, initial)


def classify_subcarriers(b_bar, threshold: float) -> tuple[np.ndarray, np.ndarray]:
    """Subcarriers with mask weight strictly above ``threshold`` are irrelevant."""
    if not 0 <= threshold <= 1:
        raise ValueError("threshold must lie in [0, 1]")
    b_bar = np.asarray(b_bar)
    irrelevant = np.flatnonzero(b_bar > threshold)
    relevant = np.flatnonzero(~(b_bar > threshold))
    return relevant, irrelevant


def aggregate_mask(interpreter: FnnModel, x_test, threshold: float, meta: dict | None = None) -> MaskReport:
    """Average the mask over test inputs and fold real/imag halves per subcarrier."""
    x_test = np.asarray(x_test)
    if x_test.ndim != 2 or len(x_test) == 0:
        raise ValueError("need a non-empty 2-D set of test inputs")
    b_mean = interpreter(x_test).astype(np.float64).mean(axis=0)
    k_on = b_mean.size // 2
    b_bar = 0.5 * (b_mean[:k_on] + b_mean[k_on:])
    relevant, irrelevant = classify_subcarriers(b_bar, threshold)
    return MaskReport(b_mean, b_bar, relevant, irrelevant, threshold, dict(meta or {}))


def reduce_inputs(x, subcarriers, k_on: int) -> np.ndarray:
    """Keep the real and imaginary entries of the given subcarriers."""
    sc = np.asarray(subcarriers, dtype=int)
    return np.asarray(x)[..., np.concatenate([sc, sc + k_on])]


def build_reduced_dataset(x, y, subcarriers, k_on: int) -> tuple[np.ndarray, np.ndarray]:
    """Restrict inputs to a subcarrier subset; targets stay full-width."""
    if len(subcarriers) == 0:
        raise ValueError("subcarrier set is empty")
    return reduce_inputs(x, subcarriers, k_on), np.asarray(y)


def write_mask_csv(report: MaskReport, path) -> None:
    rel = set(report.relevant.tolist())
    with open(path, "w", newline="") as fh:
        for key, value in report.meta.items():
            fh.write(f"# {key} = {value}\n")
        fh.write(f"# threshold = {report.threshold!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subcarrier_index", "b_bar", "class"])
        for k, b in enumerate(report.b_bar):
            w.writerow([k, repr(float(b)), "relevant" if k in rel else "irrelevant"])


def read_mask_csv(path) -> MaskReport:
    meta, rows = {}, []
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            meta[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    for row in csv.DictReader(body):
        rows.append((int(row["subcarrier_index"]), float(row["b_bar"]), row["class"]))
    rows.sort()
    b_bar = np.array([r[1] for r in rows])
    relevant = np.array([r[0] for r in rows if r[2] == "relevant"], dtype=int)
    irrelevant = np.array([r[0] for r in rows if r[2] == "irrelevant"], dtype=int)
    threshold = float(meta.pop("threshold", "nan"))
    return MaskReport(np.concatenate([b_bar, b_bar]), b_bar, relevant, irrelevant, threshold, meta)
