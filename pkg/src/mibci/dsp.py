"""Bandpass filterbank design, causal filtering, and temporal windowing.

Filters are second-order Butterworth bandpasses realised as cascades of
biquad sections and applied forward-only (causal, zero initial state).
Trials are always filtered over their full duration first; temporal windows
are cut from the filtered signal afterwards, so window boundaries never see
filter transients of their own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, sosfilt

from .errors import NumericError

#: Frequency range covered by the filterbank families, Hz.
ANALYSIS_BAND = (4.0, 40.0)

#: Bandpass design is refused when the upper edge crosses this fraction of
#: the Nyquist frequency.
_NYQUIST_MARGIN = 0.95


@dataclass(frozen=True)
class BandSpec:
    """Frequency band with edges in Hz, ``0 < f_lo < f_hi``."""

    f_lo: float
    f_hi: float

    def __post_init__(self):
        if not (0.0 < self.f_lo < self.f_hi):
            raise ValueError(f"invalid band edges ({self.f_lo}, {self.f_hi})")

    @property
    def width(self):
        return self.f_hi - self.f_lo


@dataclass(frozen=True)
class WindowSpec:
    """Time window in seconds relative to trial start, ``0 <= t_start < t_end``."""

    t_start: float
    t_end: float

    def __post_init__(self):
        if not (0.0 <= self.t_start < self.t_end):
            raise ValueError(f"invalid window ({self.t_start}, {self.t_end})")

    @property
    def length(self):
        return self.t_end - self.t_start


@dataclass(frozen=True)
class BiquadCascade:
    """Cascade of second-order IIR sections in ``scipy`` sos layout.

    Each row is ``(b0, b1, b2, 1, a1, a2)``.  Construction verifies that all
    poles lie strictly inside the unit circle.
    """

    sos: np.ndarray

    def __post_init__(self):
        sos = np.ascontiguousarray(self.sos, dtype=np.float64)
        if sos.ndim != 2 or sos.shape[1] != 6:
            raise ValueError("sos must have shape (n_sections, 6)")
        if np.max(self.pole_moduli_of(sos)) >= 1.0:
            raise NumericError("unstable filter: pole on or outside the unit circle")
        sos.setflags(write=False)
        object.__setattr__(self, "sos", sos)

    @staticmethod
    def pole_moduli_of(sos):
        moduli = []
        for row in np.atleast_2d(sos):
            poles = np.roots(row[3:6])
            moduli.extend(np.abs(poles))
        return np.asarray(moduli)

    def pole_moduli(self):
        """Moduli of all poles of the cascade."""
        return self.pole_moduli_of(self.sos)


def design_butter_bandpass(band, fs):
    """Design a second-order Butterworth bandpass for one band.

    The analog prototype is mapped with the bilinear transform with
    frequency pre-warping, so the digital response crosses -3 dB exactly at
    the requested edges.

    Parameters
    ----------
    band : BandSpec
    fs : float
        Sampling rate in Hz.

    Returns
    -------
    BiquadCascade

    Raises
    ------
    ValueError
        If the upper edge is too close to the Nyquist frequency
        (``f_hi > 0.95 * fs / 2``).
    """
    if fs <= 0:
        raise ValueError("fs must be positive")
    if band.f_hi > _NYQUIST_MARGIN * fs / 2.0:
        raise ValueError(
            f"band edge {band.f_hi} Hz too close to Nyquist ({fs / 2.0} Hz)"
        )
    sos = butter(2, [band.f_lo, band.f_hi], btype="bandpass", output="sos", fs=fs)
    return BiquadCascade(sos=sos)


def filter_forward(cascade, x):
    """Apply a cascade causally (forward only, zero initial state).

    Parameters
    ----------
    cascade : BiquadCascade
    x : ndarray, shape (..., n_samples)
        Any leading batch dimensions; filtering runs along the last axis.

    Returns
    -------
    ndarray of float64, same shape as ``x``.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValueError("input contains non-finite samples")
    # sosfilt wants a writable coefficient array; the cascade's is frozen
    return sosfilt(np.array(cascade.sos), x, axis=-1)


def freq_response(cascade, freqs, fs):
    """Complex frequency response of a cascade at the given frequencies (Hz)."""
    z = np.exp(-2j * np.pi * np.asarray(freqs, dtype=np.float64) / fs)
    h = np.ones_like(z, dtype=np.complex128)
    for b0, b1, b2, _, a1, a2 in cascade.sos:
        h *= (b0 + b1 * z + b2 * z**2) / (1.0 + a1 * z + a2 * z**2)
    return h


def default_bands(scheme):
    """Return one of the two filterbank families over 4-40 Hz.

    ``"b43"`` tiles the range with 18 bands of width 2 Hz (step 2), 17 of
    width 4 Hz (step 2), and 8 of width 8 Hz (step 4).  ``"b80"`` adds the
    36 one-Hz bands and the full-range band on top of ``"b43"``.

    Parameters
    ----------
    scheme : {"b43", "b80"}

    Returns
    -------
    list of BandSpec
    """
    lo, hi = ANALYSIS_BAND
    if scheme == "b43":
        bands = []
        for width, step in ((2, 2), (4, 2), (8, 4)):
            f = lo
            while f + width <= hi:
                bands.append(BandSpec(float(f), float(f + width)))
                f += step
        return bands
    if scheme == "b80":
        bands = default_bands("b43")
        f = lo
        while f + 1 <= hi:
            bands.append(BandSpec(float(f), float(f + 1)))
            f += 1
        bands.append(BandSpec(float(lo), float(hi)))
        return bands
    raise ValueError(f"unknown band scheme {scheme!r}")


def default_windows(scheme):
    """Return one of the temporal window families.

    All windows live inside the 3.5 s motor-imagery segment starting 1.0 s
    into the stored trial.  ``"t11"`` is the full tree: the whole segment,
    three half-length windows with 50% overlap, and seven quarter-length
    windows with 50% overlap.  ``"t1"`` keeps only the full segment and
    ``"t1t2t5"`` keeps the full segment plus the first window of each finer
    level.

    Parameters
    ----------
    scheme : {"t11", "t1", "t1t2t5"}

    Returns
    -------
    list of WindowSpec
    """
    t0, t1 = 1.0, 4.5
    full = WindowSpec(t0, t1)
    half = [WindowSpec(t0 + k * 0.875, t0 + k * 0.875 + 1.75) for k in range(3)]
    quarter = [WindowSpec(t0 + k * 0.4375, t0 + k * 0.4375 + 0.875) for k in range(7)]
    if scheme == "t11":
        return [full] + half + quarter
    if scheme == "t1":
        return [full]
    if scheme == "t1t2t5":
        return [full, half[0], quarter[0]]
    raise ValueError(f"unknown window scheme {scheme!r}")


def _round_half_away(x):
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def window_sample_range(window, fs):
    """Sample index range ``(i0, i1)`` of a window at rate ``fs``.

    Boundaries round half away from zero, so windows of equal duration can
    differ by one sample depending on where they fall on the sample grid.
    """
    return _round_half_away(window.t_start * fs), _round_half_away(window.t_end * fs)


def slice_window(x, window, fs):
    """Cut one temporal window out of (already filtered) trial data.

    Parameters
    ----------
    x : ndarray, shape (..., n_samples)
    window : WindowSpec
    fs : float

    Returns
    -------
    ndarray view of the window samples.

    Raises
    ------
    ValueError
        If the window reaches outside the available samples.
    """
    i0, i1 = window_sample_range(window, fs)
    n = x.shape[-1]
    if i0 < 0 or i1 > n or i0 >= i1:
        raise ValueError(
            f"window [{window.t_start}, {window.t_end}] s is outside the trial "
            f"({n} samples at {fs} Hz)"
        )
    return x[..., i0:i1]
