"""Optical heterodyne beat between scattered photons and a shifted laser.

The signal field and a strong local oscillator, offset by the beat
frequency, land on a balanced photodiode pair; the difference photocurrent
keeps only the interference cross term, whose phase carries the relative
optical phase of the two fields.  FFT power spectra of long records reach
sub-hertz resolution; a Gaussian fit of the beat line and the conversion to
a mutual-coherence time reproduce the coherence measurement of the source.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT
from scipy.optimize import curve_fit

from .errors import PhysicsError

__all__ = [
    "HeterodyneConfig",
    "PhaseNoiseModel",
    "BeatTrace",
    "PowerSpectrum",
    "LineFit",
    "beat_signal",
    "power_spectrum",
    "fit_gaussian_line",
    "mutual_coherence",
]

# Phase-noise samples are produced in fixed-size chunks so that a trace is
# bit-identical no matter how the acquisition length is split.
CHUNK_SAMPLES = 1 << 20


@dataclass(frozen=True)
class HeterodyneConfig:
    """Acquisition settings of the balanced heterodyne detector."""

    delta_nu: float = 210e3
    lo_amplitude: float = 1.0
    signal_amplitude: float = 0.05
    sample_rate: float = 1e6
    acquisition_time: float = 5.0
    aom_freqs: tuple = (80.000e6, 79.790e6)

    def __post_init__(self):
        if self.acquisition_time <= 0:
            raise ValueError("acquisition_time must be > 0")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be > 0")
        if self.delta_nu >= 0.5 * self.sample_rate:
            raise PhysicsError(
                f"beat at {self.delta_nu:.3e} Hz violates Nyquist for "
                f"sample rate {self.sample_rate:.3e} Hz")

    @property
    def n_samples(self) -> int:
        return int(round(self.acquisition_time * self.sample_rate))


@dataclass(frozen=True)
class PhaseNoiseModel:
    """Relative-phase dynamics between signal and local oscillator.

    random_walk_diffusion (rad^2/s) models aperiodic drift such as the
    mechanical instability of the beam paths; sinusoidal_components, a
    list of (freq_hz, amplitude_rad) pairs, model periodic phase dynamics
    which show up as FM sidebands of the beat line.
    """

    random_walk_diffusion: float = 0.0
    sinusoidal_components: tuple = ()

    def __post_init__(self):
        if self.random_walk_diffusion < 0:
            raise ValueError("diffusion must be >= 0")
        comps = tuple((float(f), float(a)) for f, a in self.sinusoidal_components)
        object.__setattr__(self, "sinusoidal_components", comps)

    def sample_phase(self, n: int, sample_rate: float, seed: int) -> np.ndarray:
        """Relative phase phi(t) on n samples; chunked and bit-stable."""
        rng = np.random.default_rng(seed)
        phi = np.zeros(n)
        if self.random_walk_diffusion > 0:
            step = np.sqrt(self.random_walk_diffusion / sample_rate)
            acc = 0.0
            for start in range(0, n, CHUNK_SAMPLES):
                m = min(CHUNK_SAMPLES, n - start)
                incr = step * rng.standard_normal(m)
                chunk = acc + np.cumsum(incr)
                phi[start:start + m] += chunk
                acc = chunk[-1]
        if self.sinusoidal_components:
            t = np.arange(n) / sample_rate
            for f_m, amp in self.sinusoidal_components:
                phi += amp * np.sin(2 * np.pi * f_m * t)
        return phi


@dataclass(frozen=True)
class BeatTrace:
    """Balanced-detector difference photocurrent."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("beat trace contains non-finite samples")
        object.__setattr__(self, "samples", arr)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class PowerSpectrum:
    """One-sided power spectrum with its resolution bandwidth."""

    freq: np.ndarray
    power: np.ndarray
    resolution_bandwidth: float
    window: str

    @property
    def df(self) -> float:
        return float(self.freq[1] - self.freq[0])


def beat_signal(config: HeterodyneConfig, noise: PhaseNoiseModel,
                seed: int, common_phase: Optional[np.ndarray] = None) -> BeatTrace:
    """Difference photocurrent of the two balanced detectors.

    Each detector sees half of |E_s + E_lo|^2 resp. |E_s - E_lo|^2 (the
    beamsplitter flips the cross-term sign), so the constant intensities
    cancel in the difference and the cross term
    2*E_s*E_lo*cos(2 pi delta_nu t + phi(t)) remains at full amplitude.
    ``common_phase`` is applied to both fields and must drop out; it
    exists so tests can assert the common-mode immunity directly.
    """
    n = config.n_samples
    if n < 2:
        raise ValueError("acquisition too short for the sample rate")
    t = np.arange(n) / config.sample_rate
    phi = noise.sample_phase(n, config.sample_rate, seed)
    if common_phase is not None:
        common = np.asarray(common_phase, dtype=float)
        if common.shape != (n,):
            raise ValueError("common_phase must match the sample count")
    else:
        common = 0.0
    e_s = config.signal_amplitude * np.exp(1j * common)
    e_lo = config.lo_amplitude * np.exp(
        1j * (2 * np.pi * config.delta_nu * t + phi + common))
    i1 = 0.5 * np.abs(e_s + e_lo) ** 2
    i2 = 0.5 * np.abs(e_s - e_lo) ** 2
    return BeatTrace(samples=i1 - i2, sample_rate=config.sample_rate)


# FWHM of the window mainlobe in bins (power spectrum): rectangular sinc^2
# mainlobe 0.886/T, Hann 1.44/T.
_RBW_BINS = {"rectangular": 0.8859, "hann": 1.4382}


def power_spectrum(trace: BeatTrace, window: str = "rectangular") -> PowerSpectrum:
    """One-sided FFT power spectral density of a beat trace.

    Density scaling divides by the window power so that the integral of
    the spectrum equals the mean square of the (window-weighted) signal,
    i.e. Parseval holds exactly for the rectangular window.  The reported
    resolution bandwidth is the window's mainlobe FWHM.
    """
    x = trace.samples
    n = x.size
    if n < 2:
        raise ValueError("trace too short")
    if window not in _RBW_BINS:
        raise ValueError(f"unknown window {window!r}; use rectangular or hann")
    if window == "hann":
        w = np.hanning(n)
    else:
        w = np.ones(n)
    xw = x * w
    spec = np.fft.rfft(xw)
    fs = trace.sample_rate
    freq = np.fft.rfftfreq(n, d=1.0 / fs)
    # density normalization by total window power
    psd = (np.abs(spec) ** 2) / (fs * np.sum(w ** 2))
    psd[1:] *= 2.0
    if n % 2 == 0:
        psd[-1] /= 2.0
    rbw = _RBW_BINS[window] * fs / n
    return PowerSpectrum(freq=freq, power=psd, resolution_bandwidth=rbw,
                         window=window)


@dataclass(frozen=True)
class LineFit:
    """Gaussian line-fit result."""

    fwhm: float
    uncertainty: float
    center: float
    amplitude: float
    background: float


_SIGMA_TO_FWHM = 2.0 * np.sqrt(2.0 * np.log(2.0))


def fit_gaussian_line(spectrum: PowerSpectrum, around: float,
                      fit_halfwidth: Optional[float] = None) -> LineFit:
    """Least-squares Gaussian fit of a spectral line near ``around``.

    The fit window spans +-10 resolution bandwidths (override with
    ``fit_halfwidth``) and includes a flat background term.  Returns the
    FWHM with its 1-sigma uncertainty from the fit covariance.
    """
    half = fit_halfwidth if fit_halfwidth is not None else \
        10.0 * spectrum.resolution_bandwidth
    sel = np.abs(spectrum.freq - around) <= half
    if np.count_nonzero(sel) < 5:
        raise ValueError("fit window contains too few spectrum points")
    f = spectrum.freq[sel]
    p = spectrum.power[sel]
    floor = np.median(spectrum.power[spectrum.power > 0]) if \
        np.any(spectrum.power > 0) else 0.0
    peak_idx = int(np.argmax(p))
    if p[peak_idx] <= 10.0 * floor or p[peak_idx] <= 0:
        raise PhysicsError(
            f"no identifiable peak within {half:.3g} Hz of {around:.6g} Hz")

    df = spectrum.df
    f0 = f[peak_idx]
    # moment-based width start value, floored at a fraction of a bin
    w = np.clip(p - p.min(), 0, None)
    sig0 = np.sqrt(max(np.sum(w * (f - f0) ** 2) / max(np.sum(w), 1e-300),
                       (0.2 * df) ** 2))

    def model(x, amp, cen, sig, base):
        return amp * np.exp(-0.5 * ((x - cen) / sig) ** 2) + base

    p0 = [p[peak_idx], f0, sig0, max(p.min(), 0.0)]
    bounds = ([0.0, f[0], 0.05 * df, 0.0],
              [10 * p[peak_idx], f[-1], (f[-1] - f[0]), p[peak_idx]])
    popt, pcov = curve_fit(model, f, p, p0=p0, bounds=bounds, maxfev=20000)
    perr = np.sqrt(np.clip(np.diag(pcov), 0.0, None))
    return LineFit(fwhm=_SIGMA_TO_FWHM * popt[2],
                   uncertainty=_SIGMA_TO_FWHM * perr[2],
                   center=popt[1], amplitude=popt[0], background=popt[3])


# Gaussian-lineshape conversion coefficient between the beat-line FWHM and
# the mutual-coherence time; two-significant-figure value of
# sqrt(2 ln 2 / pi) = 0.66428, the convention the measurement uses.
COHERENCE_COEFFICIENT = 0.66


def mutual_coherence(fwhm: float) -> dict:
    """Mutual-coherence time and length from a Gaussian beat-line FWHM.

    tau_c = 0.66 / fwhm and length = c * tau_c.
    """
    if fwhm <= 0:
        raise ValueError("fwhm must be > 0")
    tau_c = COHERENCE_COEFFICIENT / fwhm
    return {"tau_c": tau_c, "length": SPEED_OF_LIGHT * tau_c}
