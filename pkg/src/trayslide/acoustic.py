"""Contact-microphone processing: binned spectrograms, gating, onset detection.

The STFT uses one FFT bin per frequency cell (``n_fft = sample_rate /
freq_bin``), stamps each frame at the centre of its window and averages
frames into ``time_bin`` cells by timestamp. Onset detection uses a window
one time bin long (zero-padded to ``n_fft``) to keep latency below a bin.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DEFAULT_TIME_BIN = 0.002
DEFAULT_FREQ_BIN = 100.0
DEFAULT_HOP = 21


class GeometryError(ValueError):
    pass


class NoSliding(Exception):
    """No time bin qualified as a sliding onset."""


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int = 44100
    t0: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float).reshape(-1)
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", x)

    @property
    def duration(self):
        return self.samples.size / self.sample_rate

    def delayed(self, n_samples):
        """Same clip with ``n_samples`` zeros prepended."""
        return AudioClip(np.concatenate([np.zeros(int(n_samples)), self.samples]), self.sample_rate, self.t0)


def read_wav(path):
    """Read a PCM WAV file; stereo is averaged to mono."""
    from scipy.io import wavfile

    rate, data = wavfile.read(str(path))
    data = np.asarray(data)
    if data.dtype == np.int16:
        x = data / 32768.0
    elif data.dtype == np.int32:
        x = data / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(float) - 128.0) / 128.0
    else:
        x = data.astype(float)
    if x.ndim == 2:
        x = x.mean(axis=1)
    return AudioClip(x, int(rate))


@dataclass(frozen=True)
class BinnedSpectrogram:
    magnitudes: np.ndarray  # (time_bins, freq_bins)
    time_bin: float
    freq_bin: float
    t0: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.magnitudes, dtype=float)
        if m.ndim != 2:
            raise GeometryError("magnitudes must be 2-D")
        if np.any(m < 0):
            raise ValueError("magnitudes must be non-negative")
        object.__setattr__(self, "magnitudes", m)

    @property
    def shape(self):
        return self.magnitudes.shape

    @property
    def centers(self):
        return self.t0 + (np.arange(self.shape[0]) + 0.5) * self.time_bin

    def same_geometry(self, other):
        return (
            self.shape == other.shape
            and np.isclose(self.time_bin, other.time_bin)
            and np.isclose(self.freq_bin, other.freq_bin)
            and np.isclose(self.t0, other.t0)
        )


def _frame_bins(centers2, sample_rate, time_bin):
    # centers2 is twice the centre sample index; exact rational arithmetic so
    # that integer sample shifts map to integer bin shifts
    per_bin = Fraction(time_bin).limit_denominator(10**6) * int(sample_rate)
    return (centers2 * per_bin.denominator) // (2 * per_bin.numerator)


def binned_spectrogram(clip, time_bin=DEFAULT_TIME_BIN, freq_bin=DEFAULT_FREQ_BIN, hop=DEFAULT_HOP, power=False,
                       win_length=None):
    """STFT magnitudes averaged into ``time_bin`` x ``freq_bin`` cells.

    Frames end every ``hop`` samples starting at sample 0 (the signal is
    zero-padded on the left); frames centred before sample 0 are dropped. Cell ``j`` holds the FFT bin at
    ``j * freq_bin`` Hz. A ``win_length`` shorter than the FFT size trades
    frequency resolution for onset latency; the windowed frame is then
    zero-padded. With ``power=True`` cells hold mean power scaled so that a
    frame's cells sum to its windowed energy.
    """
    sr = clip.sample_rate
    if time_bin * sr < 1:
        raise ValueError("time_bin must span at least one sample")
    n_fft = int(round(sr / freq_bin))
    if n_fft < 2:
        raise ValueError("freq_bin too coarse for the sample rate")
    win = n_fft if win_length is None else int(win_length)
    if not 2 <= win <= n_fft:
        raise ValueError("win_length must lie in [2, n_fft]")
    x = clip.samples
    if x.size < win:
        raise ValueError(f"clip shorter than one window ({x.size} < {win} samples)")
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(win) / win)
    padded = np.concatenate([np.zeros(win - 1), x])
    frames = sliding_window_view(padded, win)[::hop]
    ends = np.arange(frames.shape[0]) * hop
    n_cells = int(np.floor(sr / 2.0 / freq_bin + 1e-9))
    spec = np.fft.rfft(frames * window, n=n_fft, axis=1)[:, :n_cells]
    weight = np.full(n_cells, 2.0 / n_fft)
    weight[0] = 1.0 / n_fft
    p = weight * (spec.real**2 + spec.imag**2)
    vals = p if power else np.sqrt(p)
    centers2 = 2 * ends - (win - 1)
    keep = centers2 >= 0
    vals = vals[keep]
    bins = _frame_bins(centers2[keep], sr, time_bin)
    n_bins = int(bins[-1]) + 1
    sums = np.zeros((n_bins, n_cells))
    np.add.at(sums, bins, vals)
    counts = np.bincount(bins, minlength=n_bins)[:, None]
    mags = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    return BinnedSpectrogram(mags, float(time_bin), float(sr) / n_fft, clip.t0)


def _rolling(a, half):
    """Centered rolling mean and std along axis 0 with edge truncation."""
    n = a.shape[0]
    c1 = np.vstack([np.zeros((1, a.shape[1])), np.cumsum(a, axis=0)])
    c2 = np.vstack([np.zeros((1, a.shape[1])), np.cumsum(a * a, axis=0)])
    lo = np.clip(np.arange(n) - half, 0, n)
    hi = np.clip(np.arange(n) + half + 1, 0, n)
    cnt = (hi - lo)[:, None]
    mean = (c1[hi] - c1[lo]) / cnt
    var = np.maximum((c2[hi] - c2[lo]) / cnt - mean * mean, 0.0)
    return mean, np.sqrt(var)


def reduce_noise(signal_spec, noise_spec, k=3.0, half_window=10):
    """Spectral gating against a (possibly non-stationary) noise profile.

    Per cell the threshold is the larger of the noise magnitude itself and
    the noise's local mean plus ``k`` local standard deviations over
    ``2 * half_window + 1`` time bins; the output is what exceeds it.
    """
    if not signal_spec.same_geometry(noise_spec):
        raise GeometryError(f"spectrogram geometry mismatch: {signal_spec.shape} vs {noise_spec.shape}")
    N = noise_spec.magnitudes
    mean, std = _rolling(N, half_window)
    threshold = np.maximum(N, mean + k * std)
    out = np.maximum(signal_spec.magnitudes - threshold, 0.0)
    return BinnedSpectrogram(out, signal_spec.time_bin, signal_spec.freq_bin, signal_spec.t0)


def average_spectrograms(specs):
    specs = list(specs)
    if not specs:
        raise ValueError("need at least one spectrogram")
    first = specs[0]
    for s in specs[1:]:
        if not first.same_geometry(s):
            raise GeometryError("spectrogram geometry mismatch")
    mean = np.mean([s.magnitudes for s in specs], axis=0)
    return BinnedSpectrogram(mean, first.time_bin, first.freq_bin, first.t0)


@dataclass(frozen=True)
class SlidingEvent:
    t_sliding: float
    v_sliding_mag: float
    a_sliding_mag: float

    def __post_init__(self):
        if self.v_sliding_mag < 0 or self.a_sliding_mag < 0:
            raise ValueError("magnitudes must be non-negative")

    def to_dict(self):
        return {"t_sliding": self.t_sliding, "v_sliding_mag": self.v_sliding_mag, "a_sliding_mag": self.a_sliding_mag}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["t_sliding"]), float(d["v_sliding_mag"]), float(d["a_sliding_mag"]))


def noise_floor(noise_spec, factor=3.0):
    """Absolute onset floor: ``factor`` times the median per-bin summed noise magnitude."""
    return factor * float(np.median(noise_spec.magnitudes.sum(axis=1)))


def detect_onset(spec, profile, k=6.0, window=25, floor=0.0):
    """First time bin with a significant magnitude jump, before peak velocity.

    ``profile`` is ``(t, v_mag, a_mag)`` sampled on the trajectory's clock.
    A bin qualifies when its summed magnitude exceeds ``k`` times the median
    of the ``window`` preceding bins and ``floor``. Raises
    :class:`NoSliding` when nothing qualifies.
    """
    t_p, v_p, a_p = (np.asarray(x, dtype=float) for x in profile)
    if t_p.size == 0:
        raise ValueError("empty profile")
    t_vmax = t_p[int(np.argmax(v_p))]
    centers = spec.centers
    starts = centers - 0.5 * spec.time_bin
    energy = spec.magnitudes.sum(axis=1)
    usable = starts <= t_vmax + 1e-12
    # the first bin has no history to jump from, so it never qualifies
    for b in np.flatnonzero(usable[1:]) + 1:
        ref = float(np.median(energy[max(0, b - window):b]))
        if energy[b] > k * ref and energy[b] > floor:
            t = float(centers[b])
            v = float(np.interp(t, t_p, v_p))
            a = float(np.interp(t, t_p, a_p))
            return SlidingEvent(t, abs(v), abs(a))
    raise NoSliding("no bin exceeded the onset threshold before peak velocity")


def pair_trials(with_object, without_object, profile, time_bin=DEFAULT_TIME_BIN, freq_bin=DEFAULT_FREQ_BIN,
                k=6.0, window=25, floor_factor=3.0, gate_k=3.0, dedup=True, win_length="bin"):
    """Sliding events from paired trials of one trajectory.

    The without-object spectrograms are averaged into the noise profile;
    each with-object clip is gated against it and searched for an onset.
    With ``dedup`` events sharing the same (v, a) collapse to one. The
    default ``win_length="bin"`` uses an analysis window one time bin long.
    """
    with_object, without_object = list(with_object), list(without_object)
    if not with_object or not without_object:
        raise ValueError("need at least one clip with and one without the object")
    if win_length == "bin":
        win_length = int(round(time_bin * with_object[0].sample_rate))

    def spectrogram(c):
        return binned_spectrogram(c, time_bin, freq_bin, win_length=win_length)

    noise = average_spectrograms(spectrogram(c) for c in without_object)
    floor = noise_floor(noise, floor_factor)
    events = []
    for clip in with_object:
        spec = spectrogram(clip)
        if spec.shape != noise.shape:
            n = min(spec.shape[0], noise.shape[0])
            spec = BinnedSpectrogram(spec.magnitudes[:n], spec.time_bin, spec.freq_bin, spec.t0)
            noise_n = BinnedSpectrogram(noise.magnitudes[:n], noise.time_bin, noise.freq_bin, noise.t0)
        else:
            noise_n = noise
        gated = reduce_noise(spec, noise_n, k=gate_k)
        try:
            events.append(detect_onset(gated, profile, k=k, window=window, floor=floor))
        except NoSliding:
            continue
    return unique_events(events) if dedup else events


def unique_events(events, decimals=9):
    seen = set()
    out = []
    for e in events:
        key = (round(e.v_sliding_mag, decimals), round(e.a_sliding_mag, decimals))
        if key not in seen:
            seen.add(key)
            out.append(e)
    return out


def write_events(path, events):
    with open(path, "w") as fh:
        for e in events:
            fh.write(json.dumps(e.to_dict()) + "\n")


def read_events(path):
    with open(path) as fh:
        return [SlidingEvent.from_dict(json.loads(line)) for line in fh if line.strip()]
