"""Conventional symbol-by-symbol channel trackers: DPA, STA and TRFI.

All vectors here are over the K_on used subcarriers in frequency order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .phy import FrequencyFrame, OfdmConfig, demap_bpsk, demap_qpsk, ls_preamble_estimate

logger = logging.getLogger(__name__)

SCHEMES = ("LS", "DPA", "STA", "TRFI")
DIVISION_FLOOR = 1e-12
MIN_SPLINE_KNOTS = 4


@dataclass(frozen=True)
class StaParams:
    """Averaging coefficients for STA plus the TRFI reliability-test span."""

    alpha: float = 2.0
    beta: int = 2
    trfi_span: int = 1

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")
        if self.beta < 0 or int(self.beta) != self.beta:
            raise ValueError(f"beta must be a non-negative integer, got {self.beta}")
        if self.trfi_span < 0:
            raise ValueError(f"trfi_span must be >= 0, got {self.trfi_span}")


@dataclass
class EstimateSequence:
    scheme: str
    estimates: np.ndarray  # K_on x I
    rs_masks: np.ndarray | None = None  # K_on x I bool, TRFI only
    guarded: int = 0  # entries hit by the division guard
    fallback_symbols: list[int] = field(default_factory=list)


def _guard(h: np.ndarray) -> tuple[np.ndarray, int]:
    small = np.abs(h) < DIVISION_FLOOR
    n = int(small.sum())
    if not n:
        return h, 0
    h = h.copy()
    phase = np.where(h[small] == 0, 1.0, h[small] / np.maximum(np.abs(h[small]), 1e-300))
    h[small] = DIVISION_FLOOR * phase
    return h, n


def dpa_step(y, h_prev, pilot_values, pilot_pos) -> tuple[np.ndarray, np.ndarray, int]:
    """One data-pilot-aided update.

    Data subcarriers are equalized with ``h_prev`` and hard-demapped; pilot
    subcarriers use their known values. Returns ``(d, h_dpa, n_guarded)``.
    """
    h_prev, n_guarded = _guard(np.asarray(h_prev))
    d, _ = demap_qpsk(y / h_prev)
    d[pilot_pos] = pilot_values
    return d, y / d, n_guarded


def sta_frequency_average(h, beta: int) -> np.ndarray:
    """Moving average over 2*beta+1 neighbouring subcarriers.

    The window is truncated at the band edges and its weights renormalized,
    so constant vectors are preserved everywhere.
    """
    h = np.asarray(h)
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if beta == 0:
        return h.copy()
    kernel = np.ones(2 * beta + 1)
    sums = np.convolve(h, kernel, mode="same")
    counts = np.convolve(np.ones(h.shape[0]), kernel, mode="same")
    return sums / counts


def sta_time_update(h_sta_prev, h_fd, alpha: float) -> np.ndarray:
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    return (1 - 1 / alpha) * np.asarray(h_sta_prev) + np.asarray(h_fd) / alpha


def cubic_fill(x, values, known_mask) -> np.ndarray:
    """Natural cubic spline through the known points, evaluated at the unknown ones.

    Real and imaginary parts are interpolated independently; points outside
    the knot hull use the boundary polynomial.
    """
    x = np.asarray(x, dtype=float)
    out = np.array(values, dtype=complex, copy=True)
    xk = x[known_mask]
    miss = ~known_mask
    if not miss.any():
        return out
    re = CubicSpline(xk, out.real[known_mask], bc_type="natural", extrapolate=True)
    im = CubicSpline(xk, out.imag[known_mask], bc_type="natural", extrapolate=True)
    out[miss] = re(x[miss]) + 1j * im(x[miss])
    return out


def trfi_step(
    y,
    y_prev,
    h_trfi_prev,
    cfg: OfdmConfig,
    prev_demap=None,
    test_span: int = 1,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool, int]:
    """One time-reliability frequency-interpolation update.

    A DPA update against the previous TRFI estimate comes first. The
    previous received symbol is then equalized twice, by the previous TRFI
    estimate and by the new DPA estimate averaged over ``test_span``
    neighbours on each side; subcarrier k is reliable when both decode to the
    same point. Pilots are always reliable. Unreliable subcarriers are filled
    by cubic interpolation over the logical subcarrier index.

    With QPSK and ``test_span=0`` the test can never fail: at a reliable
    subcarrier the previous estimate is exactly ``y_prev / d_prev`` and the
    second equalization only rotates ``d_prev`` by less than 45 degrees.

    ``prev_demap`` is the hard decision applied to the previous symbol
    (QPSK by default; BPSK when the previous symbol is the preamble).

    Returns ``(rs_mask, h_dpa, h_trfi, fell_back, n_guarded)``.
    """
    demap = prev_demap or (lambda s: demap_qpsk(s)[0])
    _, h_dpa, n_guarded = dpa_step(y, h_trfi_prev, cfg.pilot_values, cfg.pilot_pos)
    h_ref, g1 = _guard(sta_frequency_average(h_dpa, test_span))
    h_trfi_prev, g2 = _guard(np.asarray(h_trfi_prev))
    n_guarded += g1 + g2

    rs = demap(y_prev / h_trfi_prev) == demap(y_prev / h_ref)
    rs[cfg.pilot_pos] = True
    if rs.sum() < MIN_SPLINE_KNOTS:
        return rs, h_dpa, h_dpa.copy(), True, n_guarded
    return rs, h_dpa, cubic_fill(cfg.logical_used, h_dpa, rs), False, n_guarded


def run_conventional(
    frame: FrequencyFrame,
    cfg: OfdmConfig,
    scheme: str,
    params: StaParams | None = None,
    h_ls: np.ndarray | None = None,
) -> EstimateSequence:
    """Track the channel across the frame with one conventional scheme.

    ``LS`` holds the preamble estimate for every symbol. The STA chain demaps
    against its own previous (smoothed) estimate; TRFI against its previous
    interpolated estimate.
    """
    scheme = scheme.upper()
    if scheme == "LS-HOLD":
        scheme = "LS"
    if scheme not in SCHEMES:
        raise ValueError(f"unknown conventional scheme {scheme!r}")
    if frame.rx_grid is None:
        raise ValueError("frame has not been received")
    params = params or StaParams()
    h_ls = ls_preamble_estimate(frame) if h_ls is None else np.asarray(h_ls)
    y = frame.rx_grid
    n_sym = y.shape[1]
    est = np.empty_like(y)
    seq = EstimateSequence(scheme, est)

    if scheme == "LS":
        est[:] = h_ls[:, None]
        return seq

    if scheme == "TRFI":
        seq.rs_masks = np.zeros(y.shape, dtype=bool)

    h_prev = h_ls
    for i in range(n_sym):
        if scheme == "TRFI":
            if i == 0:
                y_prev = frame.preamble_rx[:, -1]
                prev_demap = demap_bpsk
            else:
                y_prev = y[:, i - 1]
                prev_demap = None
            rs, _, h_new, fell_back, g = trfi_step(
                y[:, i], y_prev, h_prev, cfg, prev_demap, params.trfi_span
            )
            seq.rs_masks[:, i] = rs
            if fell_back:
                seq.fallback_symbols.append(i)
        else:
            _, h_dpa, g = dpa_step(y[:, i], h_prev, cfg.pilot_values, cfg.pilot_pos)
            if scheme == "STA":
                h_fd = sta_frequency_average(h_dpa, params.beta)
                h_new = sta_time_update(h_prev, h_fd, params.alpha)
            else:
                h_new = h_dpa
        seq.guarded += g
        est[:, i] = h_new
        h_prev = h_new

    if seq.guarded or seq.fallback_symbols:
        logger.debug(
            "%s: %d guarded divisions, %d spline fallbacks",
            scheme, seq.guarded, len(seq.fallback_symbols),
        )
    return seq


def nmse(estimates, true_h) -> float:
    """Normalized MSE (linear) over all entries."""
    err = np.sum(np.abs(np.asarray(estimates) - true_h) ** 2)
    return float(err / np.sum(np.abs(true_h) ** 2))
