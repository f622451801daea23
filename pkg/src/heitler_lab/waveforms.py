"""Synthesis of excitation-laser waveforms and their linear scattering.

Waveforms are complex field envelopes in Rabi-frequency units (rad/s) on a
uniform sample grid.  Constructors cover the measurement cases: sinusoidal
intensity modulation, a carrier-suppressed bipolar field, and rectangular
pulse trains.  ``heitler_response`` propagates a weak drive through the
single-pole amplitude response of the transition, the linear limit of the
Bloch equations.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .emitter import EmitterParams, Spectrum
from .errors import PhysicsError

__all__ = [
    "DriveWaveform",
    "ModulationSpec",
    "cw",
    "sine_am",
    "carrier_suppressed",
    "pulse_train",
    "waveform_spectrum",
    "heitler_response",
]

# Default sample rate resolves 500-ps pulses and the radiative decay.
DEFAULT_SAMPLE_RATE = 20e9


@dataclass(frozen=True)
class DriveWaveform:
    """Sampled complex field envelope in Rabi units (rad/s).

    carrier_detuning is the offset of the optical carrier from the
    emitter transition in rad/s; the envelope is defined in the frame of
    that carrier.
    """

    samples: np.ndarray
    sample_rate: float
    carrier_detuning: float = 0.0

    def __post_init__(self):
        arr = np.ascontiguousarray(self.samples, dtype=complex)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("samples must be a non-empty 1-d array")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be > 0")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate

    def max_saturation(self, params: EmitterParams) -> float:
        """Largest instantaneous saturation 2|omega|^2/gamma^2 on the grid."""
        peak = float(np.max(np.abs(self.samples)))
        return 2.0 * peak ** 2 / params.gamma ** 2


@dataclass(frozen=True)
class ModulationSpec:
    """Declarative description of a drive modulation for scenario files."""

    kind: str
    mod_freq: float = 0.0
    depth: float = 0.0
    mean_rabi: float = 0.0
    peak_rabi: float = 0.0
    pulse_width: float = 0.0
    rep_rate: float = 0.0
    n_pulses: int = 0
    edge_time: float = 0.0
    duration: float = 0.0
    sample_rate: float = DEFAULT_SAMPLE_RATE

    _KINDS = ("cw", "sine_am", "carrier_suppressed", "pulse_train", "custom")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown modulation kind {self.kind!r}")
        if not 0.0 <= self.depth <= 1.0:
            raise ValueError("depth must lie in [0, 1]")
        if self.kind == "pulse_train" and self.pulse_width * self.rep_rate >= 1.0:
            raise ValueError("pulse_width * rep_rate must be < 1")

    def build(self) -> DriveWaveform:
        """Materialize the described waveform."""
        if self.kind == "cw":
            return cw(self.mean_rabi, self.duration, self.sample_rate)
        if self.kind == "sine_am":
            return sine_am(self.mod_freq, self.depth, self.mean_rabi,
                           self.duration, self.sample_rate)
        if self.kind == "carrier_suppressed":
            return carrier_suppressed(self.mod_freq, self.duration,
                                      self.sample_rate,
                                      peak_rabi=self.peak_rabi or 1.0)
        if self.kind == "pulse_train":
            return pulse_train(self.pulse_width, self.rep_rate,
                               self.peak_rabi, self.n_pulses,
                               self.sample_rate, edge_time=self.edge_time)
        raise ValueError("custom waveforms cannot be built from a spec")


def _check_nyquist(mod_freq: float, sample_rate: float):
    if mod_freq >= 0.5 * sample_rate:
        raise PhysicsError(
            f"modulation at {mod_freq:.3e} Hz violates Nyquist for sample "
            f"rate {sample_rate:.3e} Hz; need sample_rate > {2*mod_freq:.3e}")


def _n_samples(duration: float, sample_rate: float) -> int:
    n = int(round(duration * sample_rate))
    if n < 2:
        raise ValueError("duration too short for the sample rate")
    return n


def cw(rabi: float, duration: float, sample_rate: float = DEFAULT_SAMPLE_RATE,
       carrier_detuning: float = 0.0) -> DriveWaveform:
    """Constant-envelope drive."""
    n = _n_samples(duration, sample_rate)
    return DriveWaveform(np.full(n, rabi, dtype=complex), sample_rate,
                         carrier_detuning)


def sine_am(mod_freq: float, depth: float, mean_rabi: float, duration: float,
            sample_rate: float = DEFAULT_SAMPLE_RATE) -> DriveWaveform:
    """Sinusoidal intensity modulation.

    The intensity is mean_rabi^2 * (1 + depth*cos(2 pi f t)) and the field
    is its square root, matching modulation of the laser intensity by an
    amplitude electro-optic modulator.
    """
    if not 0.0 <= depth <= 1.0:
        raise ValueError("depth must lie in [0, 1]")
    _check_nyquist(mod_freq, sample_rate)
    n = _n_samples(duration, sample_rate)
    t = np.arange(n) / sample_rate
    intensity = mean_rabi ** 2 * (1.0 + depth * np.cos(2 * np.pi * mod_freq * t))
    return DriveWaveform(np.sqrt(np.clip(intensity, 0.0, None)).astype(complex),
                         sample_rate)


def carrier_suppressed(mod_freq: float, duration: float,
                       sample_rate: float = DEFAULT_SAMPLE_RATE,
                       peak_rabi: float = 1.0) -> DriveWaveform:
    """Zero-mean bipolar field that removes the carrier line.

    The field swings through an amplitude null, E(t) = A*cos(2 pi f t), so
    its spectrum carries two sidebands at +-f and nothing at zero
    detuning.  One realization of a carrier-suppressing drive pattern;
    beats exact suppression only for an integer number of modulation
    periods in the record.
    """
    _check_nyquist(mod_freq, sample_rate)
    n = _n_samples(duration, sample_rate)
    t = np.arange(n) / sample_rate
    field = peak_rabi * np.cos(2 * np.pi * mod_freq * t)
    return DriveWaveform(field.astype(complex), sample_rate)


def pulse_train(pulse_width: float, rep_rate: float, peak_rabi: float,
                n_pulses: int, sample_rate: float = DEFAULT_SAMPLE_RATE,
                edge_time: float = 0.0) -> DriveWaveform:
    """Train of intensity pulses of total duration ``pulse_width``.

    Rising edges are spaced 1/rep_rate; the waveform spans exactly
    n_pulses periods so it can tile periodically.  By default the
    intensity is rectangular with one-sample edges; ``edge_time`` > 0
    replaces the transitions with raised-cosine intensity ramps of that
    duration inside the pulse window, modelling the finite bandwidth of a
    real modulator drive.
    """
    if pulse_width <= 0 or rep_rate <= 0:
        raise ValueError("pulse_width and rep_rate must be > 0")
    if pulse_width * rep_rate >= 1.0:
        raise PhysicsError(
            f"pulse_width {pulse_width:.3e} s does not fit the repetition "
            f"period {1.0/rep_rate:.3e} s; pulses would overlap")
    if n_pulses < 1:
        raise ValueError("n_pulses must be >= 1")
    if edge_time < 0 or 2 * edge_time > pulse_width:
        raise ValueError("edge_time must satisfy 0 <= 2*edge_time <= pulse_width")
    period = 1.0 / rep_rate
    n_per = int(round(period * sample_rate))
    n_on = int(round(pulse_width * sample_rate))
    if n_on < 1 or n_per <= n_on:
        raise ValueError("sample rate too low to resolve the pulse shape")
    intensity = np.zeros(n_per)
    intensity[:n_on] = 1.0
    n_edge = int(round(edge_time * sample_rate))
    if n_edge > 0:
        ramp = np.sin(0.5 * np.pi * np.arange(n_edge) / n_edge) ** 2
        intensity[:n_edge] = ramp
        intensity[n_on - n_edge:n_on] = ramp[::-1]
    one = peak_rabi * np.sqrt(intensity).astype(complex)
    return DriveWaveform(np.tile(one, n_pulses), sample_rate)


def waveform_spectrum(drive: DriveWaveform) -> Spectrum:
    """Power spectrum of the field envelope (not the intensity).

    The density is normalized so its integral equals the time-domain
    field energy sum(|E|^2)*dt (Parseval); the grid is centered on the
    optical carrier, i.e. offset by carrier_detuning/2pi.
    """
    x = drive.samples
    n = x.size
    dt = 1.0 / drive.sample_rate
    spec = np.fft.fftshift(np.fft.fft(x)) * dt
    freq = np.fft.fftshift(np.fft.fftfreq(n, d=dt)) + \
        drive.carrier_detuning / (2 * np.pi)
    power = np.abs(spec) ** 2
    return Spectrum(freq_grid=freq, power=power, elastic_weight=0.0)


def heitler_response(drive: DriveWaveform, params: EmitterParams) -> DriveWaveform:
    """Coherently scattered field in the weak-drive (linear) limit.

    The mean dipole follows the drive through a single-pole amplitude
    filter with pole gamma/2 + i*detuning: impulse response
    h(t) = g2 * exp((i*detuning - g2) t), normalized to unit gain for a
    resonant CW drive.  Equivalently the scattered field spectrum is the
    drive spectrum weighted by g2^2 / (g2^2 + (omega - detuning)^2).

    The *amplitude* pole at gamma/2 means the scattered intensity after a
    pulse edge decays at gamma, i.e. with the T1 lifetime: |E|^2 ~
    exp(-2*g2*t) = exp(-t/T1) for a transform-limited emitter.

    Valid for max instantaneous saturation <= 0.2 (warns above 0.1); the
    exact dipole is (-i/(2*g2)) times this output in that limit.
    """
    s_max = drive.max_saturation(params)
    if s_max > 0.2:
        raise PhysicsError(
            f"weak-drive response invalid: max saturation {s_max:.3f} > 0.2; "
            "reduce the drive amplitude or use solve_bloch")
    if s_max > 0.1:
        warnings.warn(
            f"weak-drive response marginal: max saturation {s_max:.3f} > 0.1",
            stacklevel=2)
    g2 = params.gamma2
    delta = params.detuning_offset + drive.carrier_detuning
    dt = 1.0 / drive.sample_rate
    a = (1j * delta - g2) * dt
    pole = np.exp(a)
    # Exact zero-order-hold discretization of y' = (i*delta - g2) y + g2*u.
    b0 = g2 * (pole - 1.0) / (1j * delta - g2)
    y = lfilter([0.0, b0], [1.0, -pole], drive.samples)
    return DriveWaveform(np.asarray(y, dtype=complex), drive.sample_rate,
                         drive.carrier_detuning)
