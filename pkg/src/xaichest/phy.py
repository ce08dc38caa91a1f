"""OFDM frame construction, QPSK mapping and CP-OFDM (de)modulation.

Subcarriers are addressed two ways:

* *logical* index relative to DC (``-26 .. 26`` for the 802.11p layout),
* *bin* index into the length-``fft_size`` DFT (``logical mod fft_size``).

Per-frame grids only store the ``K_on`` used subcarriers, ordered by
increasing logical frequency, so neighbouring rows are neighbouring
subcarriers (the DC gap is skipped).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

_SQRT_HALF = 1.0 / np.sqrt(2.0)

QPSK_POINTS = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) * _SQRT_HALF

# 802.11a/p long training sequence, logical subcarriers -26..26 (DC included).
_LTS = np.array(
    [1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1,
     0,
     1, -1, -1, 1, 1, -1, 1, -1, 1, -1, -1, -1, -1, -1, 1, 1, -1, -1, 1, -1, 1, -1, 1, 1, 1, 1],
    dtype=float,
)


def _default_used() -> tuple[int, ...]:
    return tuple(k for k in range(-26, 27) if k != 0)


@dataclass(frozen=True)
class OfdmConfig:
    """Numerology and subcarrier allocation (802.11p defaults, 10 MHz)."""

    fft_size: int = 64
    cp_len: int = 16
    used_subcarriers: tuple[int, ...] = field(default_factory=_default_used)
    pilot_subcarriers: tuple[int, ...] = (-21, -7, 7, 21)
    pilot_symbols: tuple[complex, ...] = (1, 1, 1, -1)
    symbols_per_frame: int = 50
    preamble_count: int = 2
    sample_rate: float = 10e6

    def __post_init__(self):
        k = self.fft_size
        used = list(self.used_subcarriers)
        if len(set(used)) != len(used):
            raise ValueError("used_subcarriers contains duplicates")
        if any(not -k // 2 <= s < k // 2 for s in used):
            raise ValueError("used subcarrier outside the FFT band")
        if not set(self.pilot_subcarriers) <= set(used):
            raise ValueError("pilot subcarriers must be a subset of used subcarriers")
        if len(self.pilot_symbols) != len(self.pilot_subcarriers):
            raise ValueError("one pilot symbol per pilot subcarrier required")
        if self.cp_len < 0 or self.symbols_per_frame < 1 or self.preamble_count < 1:
            raise ValueError("cp_len >= 0, symbols_per_frame >= 1, preamble_count >= 1 required")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    # logical indices, frequency-ordered
    @cached_property
    def logical_used(self) -> np.ndarray:
        return np.array(sorted(self.used_subcarriers))

    @property
    def k_on(self) -> int:
        return len(self.used_subcarriers)

    @property
    def symbol_len(self) -> int:
        return self.fft_size + self.cp_len

    @property
    def frame_len(self) -> int:
        """Samples in one frame (preambles + data symbols, CPs included)."""
        return (self.preamble_count + self.symbols_per_frame) * self.symbol_len

    @cached_property
    def used_bins(self) -> np.ndarray:
        return self.logical_used % self.fft_size

    @cached_property
    def pilot_pos(self) -> np.ndarray:
        """Positions of the pilots inside a K_on vector."""
        return np.searchsorted(self.logical_used, sorted(self.pilot_subcarriers))

    @cached_property
    def data_pos(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.k_on), self.pilot_pos)

    @property
    def n_data(self) -> int:
        return self.k_on - len(self.pilot_subcarriers)

    @property
    def bits_per_frame(self) -> int:
        return 2 * self.n_data * self.symbols_per_frame

    # bin-index sets
    @cached_property
    def pilot_indices(self) -> np.ndarray:
        return np.sort(np.asarray(self.pilot_subcarriers) % self.fft_size)

    @cached_property
    def data_indices(self) -> np.ndarray:
        return np.sort(self.used_bins[self.data_pos])

    @cached_property
    def null_indices(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.fft_size), self.used_bins)

    @cached_property
    def pilot_values(self) -> np.ndarray:
        order = np.argsort(self.pilot_subcarriers)
        return np.asarray(self.pilot_symbols, dtype=complex)[order]

    @cached_property
    def preamble_values(self) -> np.ndarray:
        """Known BPSK training symbol over the K_on used subcarriers."""
        sc = self.logical_used
        if sc.min() >= -26 and sc.max() <= 26 and 0 not in sc:
            values = _LTS[sc + 26]
        else:
            # outside the 802.11 layout: deterministic +-1 pattern
            values = np.where(np.arange(self.k_on) % 3 == 1, -1.0, 1.0)
        return values.astype(complex)


@dataclass
class FrequencyFrame:
    """Transmitted (and, after reception, received) used-subcarrier grids."""

    tx_grid: np.ndarray  # K_on x I
    tx_bits: np.ndarray
    pilot_values: np.ndarray
    preamble_tx: np.ndarray  # K_on
    rx_grid: np.ndarray | None = None  # K_on x I
    preamble_rx: np.ndarray | None = None  # K_on x preamble_count


def modulate_qpsk(bits) -> np.ndarray:
    """Gray-mapped unit-energy QPSK: bit pair (b0, b1) -> ((1-2 b0) + j(1-2 b1))/sqrt(2)."""
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if bits.size % 2:
        raise ValueError(f"QPSK needs an even number of bits, got {bits.size}")
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be 0 or 1")
    pairs = bits.reshape(-1, 2)
    return ((1 - 2 * pairs[:, 0]) + 1j * (1 - 2 * pairs[:, 1])) * _SQRT_HALF


def demap_qpsk(symbols) -> tuple[np.ndarray, np.ndarray]:
    """Hard decision to the nearest QPSK point.

    Ties on an axis resolve toward the non-negative half-plane. Returns the
    decided points (same shape as the input) and the bits, flattened with
    two bits per symbol.
    """
    s = np.asarray(symbols)
    b0 = np.signbit(s.real) & (s.real != 0)
    b1 = np.signbit(s.imag) & (s.imag != 0)
    points = ((1 - 2 * b0.astype(float)) + 1j * (1 - 2 * b1.astype(float))) * _SQRT_HALF
    bits = np.stack([b0, b1], axis=-1).astype(np.uint8).reshape(-1)
    return points, bits


def demap_bpsk(symbols) -> np.ndarray:
    s = np.asarray(symbols)
    return np.where(s.real < 0, -1.0, 1.0).astype(complex)


def build_frame(cfg: OfdmConfig, bits=None, rng: np.random.Generator | None = None) -> FrequencyFrame:
    """Populate the transmit grid: QPSK on data, fixed pilots, zeros on nulls.

    If ``bits`` is None they are drawn from ``rng``.
    """
    if bits is None:
        if rng is None:
            raise ValueError("either bits or rng must be given")
        bits = rng.integers(0, 2, cfg.bits_per_frame, dtype=np.uint8)
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    if bits.size != cfg.bits_per_frame:
        raise ValueError(f"expected {cfg.bits_per_frame} bits, got {bits.size}")
    grid = np.empty((cfg.k_on, cfg.symbols_per_frame), dtype=complex)
    # column-major fill: symbol i takes bits [i*2*Kd, (i+1)*2*Kd)
    grid[cfg.data_pos, :] = modulate_qpsk(bits).reshape(cfg.symbols_per_frame, cfg.n_data).T
    grid[cfg.pilot_pos, :] = cfg.pilot_values[:, None]
    return FrequencyFrame(
        tx_grid=grid,
        tx_bits=bits,
        pilot_values=cfg.pilot_values.copy(),
        preamble_tx=cfg.preamble_values.copy(),
    )


def ofdm_modulate(cfg: OfdmConfig, freq_symbols) -> np.ndarray:
    """Unitary IDFT of a length-K bin vector followed by cyclic-prefix insertion."""
    x = np.asarray(freq_symbols)
    if x.shape[-1] != cfg.fft_size:
        raise ValueError(f"expected {cfg.fft_size} bins, got {x.shape[-1]}")
    body = np.fft.ifft(x, norm="ortho")
    return np.concatenate([body[..., cfg.fft_size - cfg.cp_len:], body], axis=-1)


def ofdm_demodulate(cfg: OfdmConfig, time_samples) -> np.ndarray:
    """CP removal and unitary DFT."""
    y = np.asarray(time_samples)
    if y.shape[-1] != cfg.symbol_len:
        raise ValueError(f"expected {cfg.symbol_len} samples, got {y.shape[-1]}")
    return np.fft.fft(y[..., cfg.cp_len:], norm="ortho")


def _to_bins(cfg: OfdmConfig, used: np.ndarray) -> np.ndarray:
    """Scatter (..., K_on) used-subcarrier values onto (..., K) bins."""
    full = np.zeros(used.shape[:-1] + (cfg.fft_size,), dtype=complex)
    full[..., cfg.used_bins] = used
    return full


def frame_to_time(cfg: OfdmConfig, frame: FrequencyFrame) -> np.ndarray:
    """Serialise preambles then data symbols into one time-domain burst."""
    pre = np.tile(frame.preamble_tx, (cfg.preamble_count, 1))
    symbols = np.concatenate([pre, frame.tx_grid.T], axis=0)
    return ofdm_modulate(cfg, _to_bins(cfg, symbols)).ravel()


def receive_frame(cfg: OfdmConfig, frame: FrequencyFrame, rx_time) -> FrequencyFrame:
    """Demodulate a received burst and attach the used-subcarrier grids."""
    rx_time = np.asarray(rx_time)
    if rx_time.size != cfg.frame_len:
        raise ValueError(f"expected {cfg.frame_len} samples, got {rx_time.size}")
    bins = ofdm_demodulate(cfg, rx_time.reshape(-1, cfg.symbol_len))[:, cfg.used_bins]
    p = cfg.preamble_count
    return replace(frame, preamble_rx=bins[:p].T.copy(), rx_grid=bins[p:].T.copy())


def ls_preamble_estimate(frame: FrequencyFrame) -> np.ndarray:
    """Least-squares channel from the received preambles, averaged over repetitions."""
    if frame.preamble_rx is None:
        raise ValueError("frame has no received preambles")
    return np.mean(frame.preamble_rx / frame.preamble_tx[:, None], axis=1)
