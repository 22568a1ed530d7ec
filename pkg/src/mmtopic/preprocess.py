"""Turning raw modality data into count vectors.

Physiology: high-pass, smoothing, standardization, R-peak detection with
Akima resampling of the interbeat intervals, then k-means vector
quantization of sliding windows into code histograms. Dense feature vectors
become pseudo-counts; token lists become bag-of-words counts.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal as sps
from scipy.interpolate import Akima1DInterpolator


class PreprocessError(ValueError):
    pass


@dataclass(frozen=True)
class Signal:
    samples: np.ndarray
    rate: float

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1:
            raise PreprocessError("signal samples must be one-dimensional")
        if not np.all(np.isfinite(s)):
            raise PreprocessError("signal contains non-finite samples")
        if not self.rate > 0:
            raise PreprocessError(f"sampling rate must be > 0, got {self.rate}")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) / self.rate


@dataclass(frozen=True)
class Codebook:
    centers: np.ndarray
    window: int
    stride: int

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=np.float64))
        if c.shape[0] < 1 or not np.all(np.isfinite(c)):
            raise PreprocessError("codebook needs at least one finite center")
        if c.shape[1] != self.window:
            raise PreprocessError(f"center dimension {c.shape[1]} != window {self.window}")
        if self.window < 1 or self.stride < 1:
            raise PreprocessError("window and stride must be >= 1")
        object.__setattr__(self, "centers", c)

    @property
    def size(self) -> int:
        return self.centers.shape[0]


def highpass(sig: Signal, cutoff_hz: float) -> Signal:
    """Single-pole high-pass filter, zero initial state."""
    if not 0 < cutoff_hz < sig.rate / 2:
        raise PreprocessError(f"cutoff {cutoff_hz} Hz must be in (0, Nyquist={sig.rate / 2})")
    rc = 1.0 / (2 * np.pi * cutoff_hz)
    dt = 1.0 / sig.rate
    a = rc / (rc + dt)
    y = sps.lfilter([a, -a], [1.0, -a], sig.samples)
    return Signal(y, sig.rate)


def moving_average(sig: Signal, window_seconds: float) -> Signal:
    """Centered moving mean; near the edges only the available samples are averaged."""
    w = max(1, int(round(window_seconds * sig.rate)))
    n = len(sig)
    csum = np.concatenate([[0.0], np.cumsum(sig.samples)])
    start = np.arange(n) - w // 2
    lo = np.clip(start, 0, n)
    hi = np.clip(start + w, 0, n)
    return Signal((csum[hi] - csum[lo]) / (hi - lo), sig.rate)


def standardize(sig: Signal, mean=None, sd=None) -> Signal:
    """Zero mean, unit population SD (or the given reference statistics)."""
    if len(sig) < 2 and (mean is None or sd is None):
        raise PreprocessError("standardize needs at least 2 samples")
    mean = sig.samples.mean() if mean is None else mean
    sd = sig.samples.std() if sd is None else sd
    if not sd > 0:
        raise PreprocessError("cannot standardize a zero-variance signal")
    return Signal((sig.samples - mean) / sd, sig.rate)


def detect_rri(waveform: Signal, min_distance_seconds: float = 0.4, min_prominence: float = 0.3):
    """R-peak times and the intervals between successive peaks.

    Returns ``(times, intervals)`` where ``intervals[i] = times[i+1] - times[i]``;
    both empty when fewer than two peaks are found.
    """
    if len(waveform) < 3:
        raise PreprocessError("waveform needs at least 3 samples")
    distance = max(1, int(np.ceil(min_distance_seconds * waveform.rate)))
    peaks, _ = sps.find_peaks(waveform.samples, distance=distance, prominence=min_prominence)
    times = peaks / waveform.rate
    if times.size < 2:
        return times, np.zeros(0)
    return times, np.diff(times)


def akima_resample(times, values, target_rate: float) -> Signal:
    """Akima interpolation on a uniform grid spanning [times[0], times[-1]]."""
    t = np.asarray(times, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if t.shape != v.shape or t.ndim != 1:
        raise PreprocessError("times and values must be 1-D arrays of equal length")
    if t.size < 5:
        raise PreprocessError(f"Akima interpolation needs at least 5 points, got {t.size}")
    if np.any(np.diff(t) <= 0):
        raise PreprocessError("times must be strictly increasing")
    if not target_rate > 0:
        raise PreprocessError("target rate must be > 0")
    n = int(np.floor((t[-1] - t[0]) * target_rate + 1e-9)) + 1
    grid = t[0] + np.arange(n) / target_rate
    return Signal(Akima1DInterpolator(t, v)(grid), target_rate)


def rri_series(waveform: Signal, target_rate: float, **peak_kw) -> Signal | None:
    """Evenly resampled interbeat-interval series, or None with fewer than 5 intervals."""
    times, rri = detect_rri(waveform, **peak_kw)
    if rri.size < 5:
        return None
    return akima_resample(times[1:], rri, target_rate)


def windows(x, window: int, stride: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] < window:
        raise PreprocessError(f"signal of length {x.shape[0]} is shorter than the window {window}")
    return np.lib.stride_tricks.sliding_window_view(x, window)[::stride]


def _sqdist(X, C):
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def distortion(X, centers) -> float:
    return float(_sqdist(np.asarray(X), centers).min(axis=1).sum())


def fit_codebook(windows_, codebook_size: int, iterations: int = 50, seed: int = 0,
                 stride: int | None = None, history: list | None = None) -> Codebook:
    """k-means (Lloyd) with k-means++ seeding.

    Empty clusters keep their previous center, so the within-cluster sum of
    squares never increases. Per-iteration distortions are appended to
    ``history`` when given.
    """
    X = np.asarray(windows_, dtype=np.float64)
    if X.ndim != 2:
        raise PreprocessError("windows must be a 2-D array (count, window)")
    n, D = X.shape
    if n < codebook_size:
        raise PreprocessError(f"{n} windows cannot fill a codebook of size {codebook_size}")
    rng = np.random.default_rng(seed)
    centers = np.empty((codebook_size, D))
    centers[0] = X[rng.integers(n)]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for c in range(1, codebook_size):
        total = d2.sum()
        idx = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers[c] = X[idx]
        d2 = np.minimum(d2, ((X - centers[c]) ** 2).sum(axis=1))
    for _ in range(iterations):
        dist = _sqdist(X, centers)
        assign = dist.argmin(axis=1)
        if history is not None:
            history.append(float(dist[np.arange(n), assign].sum()))
        sums = np.zeros_like(centers)
        np.add.at(sums, assign, X)
        counts = np.bincount(assign, minlength=codebook_size)
        new = centers.copy()
        filled = counts > 0
        new[filled] = sums[filled] / counts[filled, None]
        if np.array_equal(new, centers):
            break
        centers = new
    if history is not None:
        history.append(distortion(X, centers))
    return Codebook(centers, D, stride or max(1, D // 2))


def nearest_codes(X, codebook: Codebook) -> np.ndarray:
    """Index of the nearest center per row (lowest index on ties)."""
    return _sqdist(np.atleast_2d(X), codebook.centers).argmin(axis=1)


def encode_counts(sig, codebook: Codebook) -> np.ndarray:
    """Histogram of codes over sliding windows (``floor((n - window) / stride) + 1`` windows)."""
    x = sig.samples if isinstance(sig, Signal) else np.asarray(sig, dtype=np.float64)
    codes = nearest_codes(windows(x, codebook.window, codebook.stride), codebook)
    return np.bincount(codes, minlength=codebook.size).astype(np.int64)


def bag_of_words(tokens, vocab):
    """Counts of in-vocabulary tokens and the number of dropped (unknown) tokens."""
    index = {w: i for i, w in enumerate(vocab)}
    counts = np.zeros(len(vocab), dtype=np.int64)
    dropped = 0
    for tok in tokens:
        i = index.get(tok)
        if i is None:
            dropped += 1
        else:
            counts[i] += 1
    return counts, dropped


def featurize_dense(vector, total_pseudo_count: int) -> np.ndarray:
    """Pseudo-counts ``round(total * v / sum(v))`` of a nonnegative feature vector."""
    v = np.asarray(vector, dtype=np.float64)
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise PreprocessError("dense features must be finite and nonnegative")
    s = v.sum()
    if not s > 0:
        raise PreprocessError("dense feature vector is all zeros")
    if total_pseudo_count < 1:
        raise PreprocessError("total pseudo-count must be >= 1")
    return np.rint(total_pseudo_count * v / s).astype(np.int64)


def read_signal(path, rate: float | None = None) -> Signal:
    """Read a raw-signal file.

    Two formats: two columns ``time value`` (rate inferred from the median
    step), or a ``rate <hz>`` header followed by one value per line.
    """
    lines = [ln.split("#", 1)[0].strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise PreprocessError(f"{path}: empty signal file")
    head = lines[0].replace(",", " ").split()
    if head[0].lower() == "rate":
        values = np.array([float(ln) for ln in lines[1:]])
        return Signal(values, float(head[1]))
    rows = np.array([[float(x) for x in ln.replace(",", " ").split()] for ln in lines])
    if rows.ndim == 2 and rows.shape[1] == 2:
        t, v = rows[:, 0], rows[:, 1]
        step = np.median(np.diff(t)) if t.size > 1 else None
        if step is None or step <= 0:
            raise PreprocessError(f"{path}: cannot infer a sampling rate from the time column")
        return Signal(v, 1.0 / step)
    if rows.ndim == 2 and rows.shape[1] == 1 and rate is not None:
        return Signal(rows[:, 0], rate)
    raise PreprocessError(f"{path}: expected 'time value' rows or a 'rate <hz>' header")


def write_signal(sig: Signal, path):
    with Path(path).open("w") as fh:
        fh.write(f"rate {float(sig.rate)!r}\n")
        for x in sig.samples:
            fh.write(f"{float(x)!r}\n")


def save_codebook(codebook: Codebook, path):
    with Path(path).open("w") as fh:
        fh.write(f"{codebook.size} {codebook.window} {codebook.stride}\n")
        for row in codebook.centers:
            fh.write(" ".join(f"{x:.12g}" for x in row) + "\n")


def load_codebook(path) -> Codebook:
    lines = Path(path).read_text().split("\n")
    size, window, stride = (int(x) for x in lines[0].split())
    centers = np.array([[float(x) for x in ln.split()] for ln in lines[1:1 + size]])
    return Codebook(centers.reshape(size, window), window, stride)
