"""Two-level-emitter dynamics in the rotating frame of the drive laser.

Implements the optical Bloch equations for a radiatively damped two-level
transition, their analytic steady state, first- and second-order
correlation functions obtained by regression from the same generator, and
emission spectra including the elastic/inelastic split and a Lorentzian
instrument response.

Conventions
-----------
* Rotating frame of the laser carrier; ``transition_freq`` is metadata.
* ``detuning`` is laser minus transition, rad/s.
* Rabi frequency ``rabi`` is the full (not half) Rabi angular frequency.
* Density matrix is tracked as the 4-vector (rho_ee, rho_eg, rho_ge,
  rho_gg) with rho_ab = <a|rho|b>.  ``BlochState`` exposes rho_ee and
  rho_ge = <g|rho|e>; the mean dipole is <sigma_minus> = conj(rho_ge).
* Total coherence decay gamma_2 = gamma/2 + pure_dephasing.
* Saturation parameter at resonance: s = 2 * rabi**2 / gamma**2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import expm

from .errors import PhysicsError

__all__ = [
    "EmitterParams",
    "SpectralDiffusion",
    "BlochState",
    "CorrelationFunction",
    "Spectrum",
    "solve_bloch",
    "steady_state",
    "coherent_fraction",
    "g1_qrt",
    "g2_qrt",
    "emission_spectrum",
    "apply_instrument_response",
    "saturation",
    "rabi_for_saturation",
]


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralDiffusion:
    """Ornstein-Uhlenbeck detuning noise of the transition frequency.

    Parameters are the RMS detuning excursion (rad/s) and the correlation
    time (s).  The process is slow compared with every simulated record
    (seconds against nanoseconds to milliseconds), so samplers treat one
    draw as frozen for the duration of a run.
    """

    rms_detuning: float
    correlation_time: float

    def __post_init__(self):
        if self.rms_detuning < 0:
            raise ValueError("rms_detuning must be >= 0")
        if self.correlation_time <= 0:
            raise ValueError("correlation_time must be > 0")


@dataclass(frozen=True)
class EmitterParams:
    """Static parameters of the driven transition.

    gamma : radiative decay rate, rad/s (t1_lifetime = 1/gamma).
    pure_dephasing : extra coherence decay rate, rad/s.
    detuning_offset : static laser-transition detuning added to every
        commanded detuning, rad/s.
    transition_freq : optical carrier in Hz, metadata only.
    diffusion : optional slow spectral-diffusion model.
    """

    gamma: float
    pure_dephasing: float = 0.0
    detuning_offset: float = 0.0
    transition_freq: float = 315315e9
    diffusion: Optional[SpectralDiffusion] = None

    def __post_init__(self):
        if not (self.gamma > 0 and np.isfinite(self.gamma)):
            raise ValueError("gamma must be positive and finite")
        if self.pure_dephasing < 0:
            raise ValueError("pure_dephasing must be >= 0")

    @classmethod
    def from_lifetime(cls, t1: float, **kwargs) -> "EmitterParams":
        """Construct from the excited-state lifetime in seconds."""
        if t1 <= 0:
            raise ValueError("lifetime must be > 0")
        return cls(gamma=1.0 / t1, **kwargs)

    @property
    def t1_lifetime(self) -> float:
        """Excited-state lifetime, exactly 1/gamma."""
        return 1.0 / self.gamma

    @property
    def gamma2(self) -> float:
        """Total coherence decay rate gamma/2 + pure_dephasing."""
        return 0.5 * self.gamma + self.pure_dephasing


@dataclass(frozen=True)
class BlochState:
    """Two-level density matrix: excited population and coherence <g|rho|e>."""

    rho_ee: float
    rho_ge: complex

    def __post_init__(self):
        if not -1e-12 <= self.rho_ee <= 1 + 1e-12:
            raise ValueError(f"rho_ee = {self.rho_ee} outside [0, 1]")

    def purity_defect(self) -> float:
        """|rho_ge|^2 - rho_ee*(1 - rho_ee); physical states give <= 0."""
        return abs(self.rho_ge) ** 2 - self.rho_ee * (1.0 - self.rho_ee)


@dataclass(frozen=True)
class CorrelationFunction:
    """Normalized two-time correlation on an increasing tau grid.

    kind is "first_order" (complex g1, |g1| <= 1, g1(0) = 1) or
    "second_order" (real g2 >= 0, g2(inf) -> 1).
    """

    tau_grid: np.ndarray
    values: np.ndarray
    kind: str

    def __post_init__(self):
        tau = np.asarray(self.tau_grid, dtype=float)
        if tau.ndim != 1 or tau.size == 0:
            raise ValueError("tau_grid must be a non-empty 1-d array")
        if tau.size > 1 and not np.all(np.diff(tau) > 0):
            raise ValueError("tau_grid must be strictly increasing")
        if self.kind not in ("first_order", "second_order"):
            raise ValueError(f"unknown correlation kind {self.kind!r}")
        object.__setattr__(self, "tau_grid", tau)
        object.__setattr__(self, "values", np.asarray(self.values))


@dataclass(frozen=True)
class Spectrum:
    """One-dimensional power spectrum on a frequency grid in Hz.

    power is a density (per Hz) over freq_grid; elastic_weight carries the
    delta-like component at zero detuning separately so that
    elastic_weight + integral(power) is the total intensity.
    """

    freq_grid: np.ndarray
    power: np.ndarray
    elastic_weight: float = 0.0

    def __post_init__(self):
        f = np.asarray(self.freq_grid, dtype=float)
        p = np.asarray(self.power, dtype=float)
        if f.shape != p.shape or f.ndim != 1:
            raise ValueError("freq_grid and power must be matching 1-d arrays")
        if p.size and p.min() < -1e-12 * max(p.max(), 1.0):
            raise ValueError("power must be non-negative")
        if self.elastic_weight < 0:
            raise ValueError("elastic_weight must be >= 0")
        object.__setattr__(self, "freq_grid", f)
        object.__setattr__(self, "power", np.clip(p, 0.0, None))

    @property
    def df(self) -> float:
        return float(self.freq_grid[1] - self.freq_grid[0])

    def total_power(self) -> float:
        """elastic_weight plus the integral of the continuum."""
        return self.elastic_weight + float(np.sum(self.power) * self.df)


# ---------------------------------------------------------------------------
# Generator of the dissipative dynamics
# ---------------------------------------------------------------------------

def _liouvillian(gamma: float, gamma_phi: float, detuning: float,
                 rabi: complex) -> np.ndarray:
    """4x4 generator acting on vec(rho) = (rho_ee, rho_eg, rho_ge, rho_gg).

    Hamiltonian H = -detuning*|e><e| + (rabi/2)|e><g| + h.c., radiative
    damping at rate gamma on sigma_minus and pure dephasing gamma_phi.
    """
    g2 = 0.5 * gamma + gamma_phi
    hw = 0.5 * rabi
    hwc = 0.5 * np.conj(rabi)
    L = np.zeros((4, 4), dtype=complex)
    # d rho_ee = -gamma rho_ee - i hw rho_ge + i hwc rho_eg
    L[0, 0] = -gamma
    L[0, 1] = 1j * hwc
    L[0, 2] = -1j * hw
    # d rho_eg = (i detuning - g2) rho_eg + i hw (rho_ee - rho_gg)
    L[1, 1] = 1j * detuning - g2
    L[1, 0] = 1j * hw
    L[1, 3] = -1j * hw
    # d rho_ge = (-i detuning - g2) rho_ge - i hwc (rho_ee - rho_gg)
    L[2, 2] = -1j * detuning - g2
    L[2, 0] = -1j * hwc
    L[2, 3] = 1j * hwc
    # d rho_gg = +gamma rho_ee + i hw rho_ge - i hwc rho_eg
    L[3, 0] = gamma
    L[3, 1] = -1j * hwc
    L[3, 2] = 1j * hw
    return L


def _propagate_multi(L: np.ndarray, rho0: np.ndarray,
                     tau_grid: np.ndarray) -> np.ndarray:
    """Evolve vec(rho0) under exp(L*tau) for every tau in the grid.

    Uses the eigendecomposition of L when it is well conditioned, which
    makes arbitrary tau grids cheap; falls back to per-point expm for the
    (near-)defective corner cases such as rabi -> 0.
    """
    try:
        lam, V = np.linalg.eig(L)
        cond = np.linalg.cond(V)
        if np.isfinite(cond) and cond < 1e8:
            c0 = np.linalg.solve(V, rho0)
            phases = np.exp(np.outer(tau_grid, lam))  # (n_tau, 4)
            return (phases * c0) @ V.T
    except np.linalg.LinAlgError:
        pass
    out = np.empty((tau_grid.size, 4), dtype=complex)
    for i, tau in enumerate(tau_grid):
        out[i] = expm(L * tau) @ rho0
    return out


def saturation(params: EmitterParams, rabi: float, detuning: float = 0.0) -> float:
    """Generalized saturation parameter s = (rabi^2/2) / (g2*gamma/2) /
    (1 + (detuning/g2)^2); reduces to 2*rabi^2/gamma^2 on resonance with
    no dephasing."""
    g2 = params.gamma2
    return (abs(rabi) ** 2 * g2 / (g2 ** 2 + detuning ** 2)) / params.gamma


def rabi_for_saturation(params: EmitterParams, s: float) -> float:
    """Resonant Rabi frequency producing saturation parameter ``s``.

    Inverts :func:`saturation` at zero detuning: rabi = sqrt(s*gamma*g2),
    which is gamma*sqrt(s/2) without pure dephasing.
    """
    if s < 0:
        raise ValueError("s must be >= 0")
    return float(np.sqrt(s * params.gamma * params.gamma2))


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def steady_state(params: EmitterParams, rabi: float,
                 detuning: float = 0.0) -> BlochState:
    """Closed-form steady state of the Bloch equations under CW drive.

    With W = (|rabi|^2/2) * g2 / (g2^2 + delta^2):
        rho_ee = W / (gamma + 2 W)
        rho_ge = i (rabi*/2) (1 - 2 rho_ee) / (g2 + i delta)
    This is the long-time oracle for :func:`solve_bloch`.
    """
    if rabi < 0:
        raise ValueError("rabi must be >= 0")
    delta = detuning + params.detuning_offset
    g2 = params.gamma2
    W = 0.5 * abs(rabi) ** 2 * g2 / (g2 ** 2 + delta ** 2)
    rho_ee = W / (params.gamma + 2.0 * W)
    rho_ge = 1j * 0.5 * np.conj(rabi) * (1.0 - 2.0 * rho_ee) / (g2 + 1j * delta)
    return BlochState(rho_ee=float(rho_ee), rho_ge=complex(rho_ge))


def coherent_fraction(state: BlochState) -> float:
    """Elastic (coherent) share of the scattered intensity,
    |<sigma>|^2 / <sigma+ sigma-> = |rho_ge|^2 / rho_ee.

    Equals 1/(1+s) for resonant CW drive without pure dephasing.
    """
    if state.rho_ee <= 0:
        raise PhysicsError(
            "coherent_fraction undefined for rho_ee = 0 (no scattering)")
    return float(abs(state.rho_ge) ** 2 / state.rho_ee)


def solve_bloch(params: EmitterParams, drive, grid: np.ndarray,
                initial: Optional[BlochState] = None) -> list:
    """Integrate the Bloch equations along a sampled drive waveform.

    The drive envelope is held piecewise constant over its own sample
    intervals (zero-order hold), which makes the propagation across each
    interval exact: the state is advanced with cached matrix exponentials
    of the per-sample generator.  ``grid`` is the reporting grid; it must
    span the drive and resolve the fastest rate present so that reported
    trajectories are not aliased.

    Returns a list of :class:`BlochState`, one per grid point.  The result
    is deterministic; any spectral-diffusion model on ``params`` is
    ignored here (stochastic samplers live in :mod:`heitler_lab.photons`).
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("grid must contain at least two points")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")

    samples = np.asarray(drive.samples, dtype=complex)
    if not np.all(np.isfinite(samples.real)) or not np.all(np.isfinite(samples.imag)):
        raise PhysicsError("drive contains non-finite samples")
    dt_s = 1.0 / drive.sample_rate
    duration = samples.size * dt_s
    if grid[0] < -1e-15 or grid[-1] > duration * (1 + 1e-9) + 1e-15:
        raise PhysicsError(
            f"grid [{grid[0]:.3e}, {grid[-1]:.3e}] s does not lie within the "
            f"drive duration {duration:.3e} s")

    delta = params.detuning_offset + drive.carrier_detuning
    max_rate = max(params.gamma, params.gamma2, np.max(np.abs(samples)),
                   abs(delta))
    max_step = np.max(np.diff(grid))
    if max_step > 1.0 / (20.0 * max_rate) * (1 + 1e-9):
        raise PhysicsError(
            f"grid step {max_step:.3e} s too coarse; the fastest rate "
            f"{max_rate:.3e} rad/s requires a step <= {1.0/(20.0*max_rate):.3e} s")

    if initial is None:
        rho = np.array([0, 0, 0, 1], dtype=complex)
    else:
        rho = np.array([initial.rho_ee, np.conj(initial.rho_ge),
                        initial.rho_ge, 1.0 - initial.rho_ee], dtype=complex)

    # Cache exp(L dt) per distinct (sample value, interval length).
    prop_cache: dict = {}

    def propagator(omega: complex, dt: float) -> np.ndarray:
        key = (omega, dt)
        P = prop_cache.get(key)
        if P is None:
            P = expm(_liouvillian(params.gamma, params.pure_dephasing,
                                  delta, omega) * dt)
            prop_cache[key] = P
        return P

    out = []
    t_cur = 0.0
    idx = 0  # index of the drive sample containing t_cur
    for tg in grid:
        while t_cur < tg - 1e-18:
            seg_end = min((idx + 1) * dt_s, duration)
            step_end = min(seg_end, tg)
            dt = step_end - t_cur
            if dt > 1e-18:
                omega = samples[min(idx, samples.size - 1)]
                rho = propagator(complex(omega), round(dt / dt_s, 12) * dt_s) @ rho
            t_cur = step_end
            if t_cur >= seg_end - 1e-18 and idx < samples.size - 1:
                idx += 1
        ee = float(np.real(rho[0]))
        out.append(BlochState(rho_ee=min(max(ee, 0.0), 1.0),
                              rho_ge=complex(rho[2])))
    return out


def _qrt_correlation(params: EmitterParams, rabi: float, detuning: float,
                     tau_grid: np.ndarray, order: int) -> np.ndarray:
    tau = np.asarray(tau_grid, dtype=float)
    if tau.size == 0:
        raise ValueError("tau_grid must not be empty")
    if np.any(tau < 0):
        raise ValueError("tau_grid must be non-negative")
    delta = detuning + params.detuning_offset
    L = _liouvillian(params.gamma, params.pure_dephasing, delta, rabi)
    ss = steady_state(params, rabi, detuning)
    if ss.rho_ee <= 0:
        raise PhysicsError("correlation undefined without steady emission "
                           "(rho_ee = 0); use a non-zero drive")
    rho_eg = np.conj(ss.rho_ge)
    if order == 1:
        # chi(0) = sigma_minus rho_ss -> (0, 0, rho_ee, rho_eg)
        chi0 = np.array([0, 0, ss.rho_ee, rho_eg], dtype=complex)
        chi = _propagate_multi(L, chi0, tau)
        values = chi[:, 2] / ss.rho_ee  # Tr[sigma_plus chi] = chi_ge
        values[tau == 0.0] = 1.0  # exact by construction
        return values
    # chi(0) = sigma_minus rho_ss sigma_plus = rho_ee |g><g|
    chi0 = np.array([0, 0, 0, ss.rho_ee], dtype=complex)
    chi = _propagate_multi(L, chi0, tau)
    values = np.real(chi[:, 0]) / ss.rho_ee ** 2
    values[tau == 0.0] = 0.0  # conditional state after a click is |g>
    return values


def g1_qrt(params: EmitterParams, rabi: float, detuning: float,
           tau_grid: np.ndarray) -> CorrelationFunction:
    """First-order coherence g1(tau) of the steady-state scattered field.

    Obtained by regression: the operator sigma_minus*rho_ss is evolved
    under the same generator as the density matrix.  g1(0) = 1; the
    asymptotic plateau equals the coherent fraction (elastic component).
    """
    values = _qrt_correlation(params, rabi, detuning, tau_grid, order=1)
    return CorrelationFunction(tau_grid=np.asarray(tau_grid, dtype=float),
                               values=values, kind="first_order")


def g2_qrt(params: EmitterParams, rabi: float, detuning: float,
           tau_grid: np.ndarray) -> CorrelationFunction:
    """Intensity autocorrelation g2(tau) under CW drive.

    g2(0) = 0 exactly for a single emitter (the conditional state after a
    detection is the ground state) and g2 -> 1 at long delays.
    """
    values = _qrt_correlation(params, rabi, detuning, tau_grid, order=2)
    values = np.clip(np.real(values), 0.0, None)
    return CorrelationFunction(tau_grid=np.asarray(tau_grid, dtype=float),
                               values=values, kind="second_order")


# Fraction of the tau grid averaged to estimate the elastic plateau.
_PLATEAU_FRACTION = 0.10


def emission_spectrum(g1: CorrelationFunction,
                      gamma: Optional[float] = None) -> Spectrum:
    """Split g1 into elastic line and inelastic continuum and transform.

    The elastic weight is the asymptotic plateau of g1, estimated as the
    mean over the last 10% of the tau grid; the continuum is the Fourier
    transform of (g1 - plateau) extended Hermitially to negative tau.
    Output is normalized so elastic_weight + integral(power) = 1 = g1(0).

    ``gamma`` (rad/s) enables the tau-span check tau_max >= 20/gamma; pass
    the emitter's decay rate whenever it is known.
    """
    if g1.kind != "first_order":
        raise ValueError("emission_spectrum expects a first-order correlation")
    tau = g1.tau_grid
    if tau.size < 16:
        raise ValueError("tau grid too short for a spectrum")
    dtau = tau[1] - tau[0]
    if not np.allclose(np.diff(tau), dtau, rtol=1e-9, atol=0):
        raise ValueError("emission_spectrum requires a uniform tau grid")
    if gamma is not None and tau[-1] < 20.0 / gamma:
        raise PhysicsError(
            f"tau_max = {tau[-1]:.3e} s too short for the elastic/inelastic "
            f"split; need >= {20.0/gamma:.3e} s (20/gamma)")

    n_tail = max(2, int(np.ceil(_PLATEAU_FRACTION * tau.size)))
    plateau_c = np.mean(g1.values[-n_tail:])
    plateau = float(np.abs(plateau_c))

    c = g1.values - plateau_c
    # Hermitian extension over (-tau_max, tau_max]; c(-tau) = conj(c(tau)).
    full = np.concatenate([np.conj(c[:0:-1]), c])
    n = full.size
    spec = np.fft.fftshift(np.fft.fft(np.fft.ifftshift(full))) * dtau
    freq = np.fft.fftshift(np.fft.fftfreq(n, d=dtau))
    power = np.clip(np.real(spec), 0.0, None)
    return Spectrum(freq_grid=freq, power=power, elastic_weight=plateau)


def apply_instrument_response(spectrum: Spectrum,
                              resolution_fwhm: float) -> Spectrum:
    """Convolve a spectrum with a Lorentzian instrument line of given FWHM.

    Implemented as multiplication by exp(-pi*FWHM*|tau|) in the conjugate
    time domain, which conserves total power exactly and broadens the
    elastic delta into a Lorentzian of the instrument width.  The output
    therefore carries elastic_weight = 0 with all power in the continuum.
    """
    if resolution_fwhm <= 0:
        raise ValueError("resolution_fwhm must be > 0")
    f = spectrum.freq_grid
    if f.size < 4:
        raise ValueError("spectrum grid too short")
    df = spectrum.df
    span = f[-1] - f[0]
    if resolution_fwhm >= span:
        raise PhysicsError(
            f"instrument resolution {resolution_fwhm:.3e} Hz exceeds the "
            f"spectrum span {span:.3e} Hz; widen the frequency grid")
    n = f.size
    # Pseudo-correlation of the continuum on the conjugate tau grid.
    c = np.fft.ifft(np.fft.ifftshift(spectrum.power)) * (n * df)
    tau = np.fft.fftfreq(n, d=df)
    kernel = np.exp(-np.pi * resolution_fwhm * np.abs(tau))
    # Elastic delta at zero detuning contributes a constant in tau.
    c = (c + spectrum.elastic_weight) * kernel
    out = np.fft.fftshift(np.fft.fft(c)) / (n * df)
    power = np.clip(np.real(out), 0.0, None)
    return Spectrum(freq_grid=f.copy(), power=power, elastic_weight=0.0)
