"""Time-varying tapped-delay-line vehicular channels with a Jakes Doppler spectrum."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .phy import OfdmConfig


@dataclass(frozen=True)
class ChannelModel:
    name: str
    gains_db: tuple[float, ...]
    delays_ns: tuple[float, ...]
    doppler_hz: float = 1000.0

    def __post_init__(self):
        if len(self.gains_db) != len(self.delays_ns):
            raise ConfigError("gains_db and delays_ns must have equal length")
        if self.doppler_hz < 0:
            raise ConfigError("doppler_hz must be non-negative")

    def with_doppler(self, doppler_hz: float) -> "ChannelModel":
        return ChannelModel(self.name, self.gains_db, self.delays_ns, doppler_hz)


VTV_US = ChannelModel(
    "VTV-US",
    (0, 0, -10, -10, -10, -17.8, -17.8, -17.8, -21.1, -21.1, -26.3, -26.3),
    (0, 1, 100, 101, 102, 200, 201, 202, 300, 301, 400, 401),
)
VTI_US = ChannelModel(
    "VTI-US",
    (0, 0, -9.3, -9.3, -14, -14, -18, -18, -19.4, -24.9, -27.5, -29.8),
    (0, 1, 100, 101, 200, 201, 300, 301, 400, 500, 600, 700),
)
CHANNEL_MODELS = {"vtv-us": VTV_US, "vti-us": VTI_US}


def get_channel_model(name: str) -> ChannelModel:
    try:
        return CHANNEL_MODELS[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown channel model {name!r}; choose from {sorted(CHANNEL_MODELS)}") from None


@dataclass
class ChannelRealization:
    tap_gains: np.ndarray  # n_taps x n_samples, value at each output sample
    tap_delays: np.ndarray  # integer sample delays, one per tap
    true_h: np.ndarray  # K_on x I, per data symbol
    mean_power: float  # expected sum of tap powers


def binned_profile(model: ChannelModel, sample_rate: float) -> tuple[np.ndarray, np.ndarray]:
    """Quantise tap delays to the sample grid, merging co-located taps by power.

    Returns (sample_delays, linear_powers) sorted by delay.
    """
    delays = np.rint(np.asarray(model.delays_ns) * 1e-9 * sample_rate).astype(int)
    powers = 10.0 ** (np.asarray(model.gains_db, dtype=float) / 10.0)
    bins = np.unique(delays)
    merged = np.array([powers[delays == d].sum() for d in bins])
    return bins, merged


def sos_fading(
    n_samples: int,
    sample_period: float,
    doppler_hz: float,
    rng: np.random.Generator,
    n_osc: int = 64,
) -> np.ndarray:
    """Unit-power Rayleigh process with classical Jakes spectrum.

    Sum of ``n_osc`` complex sinusoids whose arrival angles are uniformly
    spaced on the circle with a common random rotation, each carrying an
    independent uniform phase. Averaged over the rotation the
    autocorrelation is exactly J0(2 pi f_d tau).
    """
    rotation = rng.uniform(-np.pi, np.pi)
    angles = (2 * np.pi * np.arange(n_osc) + rotation) / n_osc
    phases = rng.uniform(0, 2 * np.pi, n_osc)
    w = 2 * np.pi * doppler_hz * sample_period * np.cos(angles)  # rad / sample

    # exp(j w (hi*B + lo)) = exp(j w hi B) exp(j w lo): one small matmul instead
    # of an n_osc x n_samples table of exponentials
    block = max(1, int(np.ceil(np.sqrt(n_samples))))
    n_hi = -(-n_samples // block)
    outer = np.exp(1j * (np.outer(np.arange(n_hi) * block, w) + phases))
    inner = np.exp(1j * np.outer(w, np.arange(block)))
    return (outer @ inner).ravel()[:n_samples] / np.sqrt(n_osc)


def make_channel(
    model: ChannelModel,
    cfg: OfdmConfig,
    seed,
    normalize: bool = True,
    n_osc: int = 64,
) -> ChannelRealization:
    """Draw one frame-long channel realization.

    ``seed`` may be an int, SeedSequence or Generator. With ``normalize`` the
    binned power-delay profile is scaled to unit total power.
    """
    rng = np.random.default_rng(seed)
    delays, powers = binned_profile(model, cfg.sample_rate)
    if delays.max() > cfg.cp_len:
        raise ConfigError(
            f"{model.name}: max delay {delays.max()} samples exceeds CP of {cfg.cp_len} samples"
        )
    if normalize:
        powers = powers / powers.sum()

    n = cfg.frame_len
    ts = 1.0 / cfg.sample_rate
    gains = np.empty((len(delays), n), dtype=complex)
    for m, p in enumerate(powers):
        gains[m] = np.sqrt(p) * sos_fading(n, ts, model.doppler_hz, rng, n_osc)

    # ground truth per data symbol: DFT of the taps averaged over the symbol body
    starts = (cfg.preamble_count + np.arange(cfg.symbols_per_frame)) * cfg.symbol_len + cfg.cp_len
    body = starts[:, None] + np.arange(cfg.fft_size)
    avg_taps = gains[:, body].mean(axis=2)  # n_taps x I
    steering = np.exp(-2j * np.pi * np.outer(cfg.used_bins, delays) / cfg.fft_size)
    true_h = steering @ avg_taps

    return ChannelRealization(gains, delays, true_h, float(powers.sum()))


def snr_to_noise_var(snr_db: float, signal_power: float = 1.0) -> float:
    """Per-sample (and, with a unitary DFT, per-subcarrier) noise variance."""
    if np.isposinf(snr_db):
        return 0.0
    return signal_power * 10.0 ** (-snr_db / 10.0)


def awgn(samples, noise_var: float, rng: np.random.Generator) -> np.ndarray:
    """Add circularly-symmetric complex Gaussian noise of total variance ``noise_var``."""
    if noise_var < 0:
        raise ValueError(f"noise variance must be >= 0, got {noise_var}")
    x = np.asarray(samples, dtype=complex)
    if noise_var == 0:
        return x.copy()
    scale = np.sqrt(noise_var / 2)
    return x + scale * (rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape))


def apply_channel(
    tx_time,
    real: ChannelRealization,
    snr_db: float,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Per-sample time-varying convolution followed by AWGN.

    The noise variance makes the average received SNR on every used
    subcarrier equal ``snr_db`` (unit-energy symbols, expected channel
    power ``real.mean_power``). ``snr_db=inf`` disables noise.
    """
    x = np.asarray(tx_time, dtype=complex)
    n = real.tap_gains.shape[1]
    if x.size != n:
        raise ValueError(f"signal has {x.size} samples, realization covers {n}")
    y = np.zeros(n, dtype=complex)
    for g, d in zip(real.tap_gains, real.tap_delays):
        y[d:] += g[d:] * x[: n - d]
    noise_var = snr_to_noise_var(snr_db, real.mean_power)
    if noise_var == 0:
        return y
    if rng is None:
        raise ValueError("rng required when noise is enabled")
    return awgn(y, noise_var, rng)
