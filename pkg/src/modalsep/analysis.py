"""Modal parameters from separated responses: PSD peaks, random decrement, MAC."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .errors import EmptyBand, NoTriggers, TooFewPeaks, TooShort, ZeroVector

MIN_RDT_SEGMENTS = 20


@dataclass
class PsdEstimate:
    frequencies: np.ndarray
    power: np.ndarray
    window: str = "hann"
    segment_length: int = 0
    overlap: int = 0

    @property
    def resolution(self) -> float:
        return float(self.frequencies[1] - self.frequencies[0]) if self.frequencies.size > 1 else 0.0


@dataclass
class RdtSignature:
    lags: np.ndarray
    amplitude: np.ndarray
    trigger_level: float
    segment_count: int

    @property
    def low_confidence(self) -> bool:
        return self.segment_count < MIN_RDT_SEGMENTS


@dataclass
class ModalEstimate:
    frequency: float
    damping_ratio: float
    shape: np.ndarray
    response_trace: np.ndarray = field(repr=False)
    confidence: str = "ok"

    def to_dict(self, include_trace: bool = False) -> dict:
        d = {
            "frequency_hz": float(self.frequency),
            "damping_ratio": None if not math.isfinite(self.damping_ratio) else float(self.damping_ratio),
            "damping_percent": None if not math.isfinite(self.damping_ratio)
            else 100.0 * float(self.damping_ratio),
            "shape": np.asarray(self.shape, dtype=float).tolist(),
            "confidence": self.confidence,
        }
        if include_trace:
            d["response_trace"] = np.asarray(self.response_trace, dtype=float).tolist()
        return d


def default_segment_length(n: int) -> int:
    """N/4 rounded to the nearest power of two, capped at N."""
    target = max(n / 4.0, 8.0)
    seg = 2 ** int(round(math.log2(target)))
    while seg > n and seg > 8:
        seg //= 2
    return seg


def welch_psd(x, sample_rate: float, segment_length: int | None = None,
              overlap_fraction: float = 0.5) -> PsdEstimate:
    """One-sided, density-scaled Welch PSD with Hann windows and per-segment mean removal."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    seg = default_segment_length(n) if segment_length is None else int(segment_length)
    if seg < 8 or n < seg:
        raise TooShort(f"need N >= segment_length >= 8, got N={n}, segment_length={seg}")
    if not 0.0 <= overlap_fraction <= 0.9:
        raise ValueError("overlap_fraction must lie in [0, 0.9]")
    noverlap = int(round(overlap_fraction * seg))
    f, p = sps.welch(x, fs=sample_rate, window="hann", nperseg=seg, noverlap=noverlap,
                     detrend="constant", scaling="density", return_onesided=True)
    return PsdEstimate(f, p, "hann", seg, noverlap)


def pick_peak(psd: PsdEstimate, band: tuple[float, float] | None = None) -> float:
    """Frequency of the largest PSD value in ``band``.

    The bin is refined with a three-point parabola through the log-power of
    the bin and its grid neighbours. Ties go to the lower frequency.
    """
    f, p = psd.frequencies, psd.power
    lo, hi = (f[0], f[-1]) if band is None else band
    in_band = np.flatnonzero((f >= lo) & (f <= hi))
    if in_band.size == 0:
        raise EmptyBand(f"no PSD bins in [{lo}, {hi}] Hz")
    k = int(in_band[np.argmax(p[in_band])])
    if k == 0 or k == f.size - 1 or p[k] <= 0 or p[k - 1] <= 0 or p[k + 1] <= 0:
        return float(f[k])
    a, b, c = np.log(p[k - 1]), np.log(p[k]), np.log(p[k + 1])
    denom = a - 2 * b + c
    if denom >= 0:
        return float(f[k])
    delta = float(np.clip(0.5 * (a - c) / denom, -0.5, 0.5))
    return float(f[k] + delta * (f[1] - f[0]))


def rdt_extract(x, sample_rate: float, trigger_sigma: float = 1.0,
                segment_seconds: float = 10.0) -> RdtSignature:
    """Random decrement signature from positive-slope crossings of ``trigger_sigma`` * std.

    Segments start at the sample closest to each up-crossing, so the
    signature begins at the trigger level to within sampling error.
    """
    x = np.asarray(x, dtype=float).ravel()
    x = x - x.mean()
    seg = int(round(segment_seconds * sample_rate))
    if seg < 2:
        raise TooShort("segment must span at least two samples")
    if x.size < 10 * seg:
        raise TooShort(f"signal length {x.size} is below 10 segment lengths ({10 * seg})")
    level = trigger_sigma * x.std()
    hits = np.flatnonzero((x[:-1] < level) & (x[1:] >= level)) + 1
    # anchor each segment on whichever sample straddling the crossing is nearer the level
    hits = np.where(level - x[hits - 1] < x[hits] - level, hits - 1, hits)
    hits = hits[hits + seg <= x.size]
    if hits.size < 2:
        raise NoTriggers(f"only {hits.size} trigger crossings found")
    windows = x[hits[:, None] + np.arange(seg)]
    return RdtSignature(np.arange(seg) / sample_rate, windows.mean(axis=0), float(level),
                        int(hits.size))


def envelope_peaks(sig: RdtSignature) -> tuple[np.ndarray, np.ndarray]:
    """Interior local maxima of |signature|, refined by parabolic interpolation.

    The lag-0 sample is never used: it is the trigger point itself (pinned
    near the trigger level and, for accelerations, inflated by the direct
    force feed-through), not an extremum of the free decay.
    """
    a = np.abs(sig.amplitude)
    t = sig.lags
    dt = t[1] - t[0] if t.size > 1 else 1.0
    times, values = [], []
    interior = np.flatnonzero((a[1:-1] >= a[:-2]) & (a[1:-1] > a[2:])) + 1
    for k in interior:
        y0, y1, y2 = a[k - 1], a[k], a[k + 1]
        denom = y0 - 2 * y1 + y2
        delta = 0.5 * (y0 - y2) / denom if denom < 0 else 0.0
        times.append(t[k] + delta * dt)
        values.append(y1 - 0.25 * (y0 - y2) * delta)
    return np.asarray(times), np.asarray(values)


def fit_damping(sig: RdtSignature, frequency_hint: float) -> float:
    """Damping ratio from a straight-line fit of log envelope peaks.

    The slope equals -zeta * omega_n. ``frequency_hint`` is the observed
    (damped) frequency, so zeta solves zeta / sqrt(1 - zeta^2) = -slope / omega_d.
    """
    if not frequency_hint > 0:
        raise ValueError("frequency_hint must be positive")
    times, values = envelope_peaks(sig)
    keep = values > 0
    times, values = times[keep], values[keep]
    if times.size < 3:
        raise TooFewPeaks(f"only {times.size} envelope peaks")
    slope = np.polyfit(times, np.log(values), 1)[0]
    r = max(-slope, 0.0) / (2 * np.pi * frequency_hint)
    return float(r / math.sqrt(1.0 + r * r))


def mac(a, b) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    aa, bb = float(a @ a), float(b @ b)
    if aa == 0 or bb == 0:
        raise ZeroVector("MAC is undefined for a zero vector")
    ab = float(a @ b)
    return min(1.0, (ab * ab) / (aa * bb))


def mac_matrix(shapes_a: np.ndarray, shapes_b: np.ndarray) -> np.ndarray:
    """MAC between every row of ``shapes_a`` and every row of ``shapes_b``."""
    return np.array([[mac(a, b) for b in np.atleast_2d(shapes_b)] for a in np.atleast_2d(shapes_a)])


@dataclass
class ModePair:
    estimate: int
    reference: int
    mac: float
    frequency_error: float  # estimate minus reference, Hz


def match_modes(estimates: list[ModalEstimate], reference, reference_frequencies=None) -> list[ModePair]:
    """Greedy one-to-one pairing of estimates with reference modes by descending MAC.

    ``reference`` is a ModalTruth (shapes are its columns). Ties in MAC go
    to the smaller frequency error. ``reference_frequencies`` overrides the
    frequencies used for the tie-break and reported errors.
    """
    if not estimates:
        raise ValueError("match_modes needs at least one estimate")
    ref_shapes = np.asarray(reference.shapes).T
    ref_f = np.asarray(reference.frequencies if reference_frequencies is None
                       else reference_frequencies, dtype=float)
    cands = []
    for i, est in enumerate(estimates):
        for j, shape in enumerate(ref_shapes):
            df = est.frequency - ref_f[j]
            cands.append((-mac(est.shape, shape), abs(df), i, j, df))
    cands.sort(key=lambda c: (c[0], c[1]))
    used_e, used_r, pairs = set(), set(), []
    for neg_mac, _, i, j, df in cands:
        if i in used_e or j in used_r:
            continue
        used_e.add(i)
        used_r.add(j)
        pairs.append(ModePair(i, j, -neg_mac, float(df)))
    return sorted(pairs, key=lambda p: p.reference)


@dataclass
class SelectionCriteria:
    prominence: float = 10.0
    min_separation_bins: float = 2.0
    segment_length: int | None = None
    overlap_fraction: float = 0.5
    band: tuple[float, float] | None = None


def column_peaks(responses: np.ndarray, sample_rate: float, criteria: SelectionCriteria):
    """Peak frequency, prominence ratio and PSD resolution for each column."""
    responses = np.atleast_2d(np.asarray(responses, dtype=float))
    peaks, prom, res = [], [], 0.0
    for col in responses.T:
        psd = welch_psd(col, sample_rate, criteria.segment_length, criteria.overlap_fraction)
        f, p = psd.frequencies, psd.power
        lo, hi = (f[0], f[-1]) if criteria.band is None else criteria.band
        mask = (f >= lo) & (f <= hi)
        band_p = p[mask]
        med = float(np.median(band_p))
        pk = float(band_p.max())
        peaks.append(pick_peak(psd, (lo, hi)))
        prom.append(pk / med if med > 0 else (math.inf if pk > 0 else 0.0))
        res = psd.resolution
    return np.asarray(peaks), np.asarray(prom), res


def select_modes(responses: np.ndarray, sample_rate: float,
                 criteria: SelectionCriteria | None = None) -> list[int]:
    """Indices of columns that look like genuine modal responses.

    A column qualifies when its PSD peak-to-median ratio reaches
    ``criteria.prominence``. Columns are admitted in order of decreasing
    prominence and rejected when their peak lies within
    ``min_separation_bins`` PSD bins of an admitted column. The result is
    sorted by peak frequency.
    """
    criteria = criteria or SelectionCriteria()
    peaks, prom, res = column_peaks(responses, sample_rate, criteria)
    chosen: list[int] = []
    for i in sorted(range(len(peaks)), key=lambda k: (-prom[k], k)):
        if not prom[i] >= criteria.prominence:
            continue
        if any(abs(peaks[i] - peaks[j]) < criteria.min_separation_bins * res for j in chosen):
            continue
        chosen.append(i)
    return sorted(chosen, key=lambda k: (peaks[k], k))


# ---------------------------------------------------------------------------
# exports

def _two_column_csv(path, header, a, b) -> None:
    lines = [header] + [f"{x!r},{y!r}" for x, y in zip(map(float, a), map(float, b))]
    Path(path).write_text("\n".join(lines) + "\n")


def psd_to_csv(psd: PsdEstimate, path) -> None:
    _two_column_csv(path, "frequency_hz,power", psd.frequencies, psd.power)


def signature_to_csv(sig: RdtSignature, path) -> None:
    _two_column_csv(path, "lag_s,amplitude", sig.lags, sig.amplitude)


def estimates_report(estimates: list[ModalEstimate], pairs: list[ModePair] | None = None,
                     reference=None) -> dict:
    """Table-style summary: per-mode frequency, damping % and matched MAC."""
    by_est = {p.estimate: p for p in pairs or []}
    rows = []
    for i, est in enumerate(estimates):
        row = {"mode": i + 1, **est.to_dict()}
        if i in by_est:
            p = by_est[i]
            row["reference_mode"] = p.reference + 1
            row["mac"] = p.mac
            if reference is not None:
                row["reference_frequency_hz"] = float(reference.frequencies[p.reference])
                row["reference_damping_percent"] = 100.0 * float(reference.damping_ratios[p.reference])
        rows.append(row)
    return {"modes": rows}


def estimates_to_json(estimates, path, pairs=None, reference=None) -> None:
    Path(path).write_text(json.dumps(estimates_report(estimates, pairs, reference), indent=2))
