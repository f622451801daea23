"""Photon streams: quantum-jump sampling, detection chain, correlation.

Emission records are generated by unraveling the damped two-level dynamics
into quantum trajectories.  Because the only radiative jump operator
projects onto the ground state, the emission process driven by a periodic
waveform is a renewal process: the waiting time from each reset depends
only on the restart phase within the drive period.  The fast sampler
therefore tabulates the no-jump survival (cumulative hazard) from the
ground state for every restart phase once, and then draws photons by
inverting that table; a direct per-step jump/no-jump integrator is kept
both as the general fallback (pure dephasing, validation) and as an
independent cross-check.

Timestamps are integer picoseconds throughout the detection chain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import expm

from .emitter import EmitterParams
from .errors import PhysicsError

__all__ = [
    "PhotonRecord",
    "DetectionChain",
    "CoincidenceHistogram",
    "mc_trajectory",
    "mc_trajectory_direct",
    "apply_detection",
    "correlate_g2",
    "split_stream",
    "pulsed_g2_templates",
    "pulsed_peak_areas",
    "peak_area_ratio",
]

PS = 1e-12


class PhotonRecord(NamedTuple):
    """One detection event: integer-picosecond timestamp and detector id."""

    timestamp: int
    channel: int


@dataclass(frozen=True)
class DetectionChain:
    """Detector-side imperfections applied to an emission stream.

    efficiency : detection probability per photon, [0, 1].
    background_rate : homogeneous Poisson background, counts/s (residual
        laser leaking through the polarization rejection).
    jitter_fwhm : Gaussian timing resolution, s.
    bin_width : correlation histogram bin, s.
    sideband_loss : fraction of emission lost to the phonon sideband
        before the (spectrally filtered) detectors.
    """

    efficiency: float = 1.0
    background_rate: float = 0.0
    jitter_fwhm: float = 600e-12
    bin_width: float = 162e-12
    sideband_loss: float = 0.12

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in [0, 1]")
        if not 0.0 <= self.sideband_loss <= 1.0:
            raise ValueError("sideband_loss must lie in [0, 1]")
        if self.jitter_fwhm < 0 or self.background_rate < 0:
            raise ValueError("jitter_fwhm and background_rate must be >= 0")
        if self.bin_width <= 0:
            raise ValueError("bin_width must be > 0")


@dataclass(frozen=True)
class CoincidenceHistogram:
    """Histogram of pairwise detection delays.

    counts are raw integers per bin; normalization is the long-delay mean
    count used so that uncorrelated streams average to one.
    """

    bin_centers: np.ndarray
    counts: np.ndarray
    normalization: float

    def __post_init__(self):
        c = np.asarray(self.counts)
        if np.any(c < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "bin_centers",
                           np.asarray(self.bin_centers, dtype=float))
        object.__setattr__(self, "counts", c)

    @property
    def bin_width(self) -> float:
        return float(self.bin_centers[1] - self.bin_centers[0])

    @property
    def normalized(self) -> np.ndarray:
        return self.counts / self.normalization

    @property
    def count_sigma(self) -> np.ndarray:
        """Poisson 1-sigma of the normalized values (zero-count bins get
        the one-count floor so they carry finite weight)."""
        return np.sqrt(np.maximum(self.counts, 1.0)) / self.normalization


# ---------------------------------------------------------------------------
# No-jump propagators
# ---------------------------------------------------------------------------

def _nojump_propagators(params: EmitterParams, delta: float,
                        samples: np.ndarray, dt: float):
    """exp(-i H_eff dt) per drive sample; basis (c_e, c_g).

    H_eff carries the radiative decay on |e> only; the dephasing channel's
    uniform norm decay is applied separately by the direct stepper.
    Returns (unique_props, index) so pulse trains cost two matrices.
    """
    uniq, index = np.unique(samples, return_inverse=True)
    props = np.empty((uniq.size, 2, 2), dtype=complex)
    decay = -delta - 0.5j * params.gamma
    for i, om in enumerate(uniq):
        heff = np.array([[decay, 0.5 * om],
                         [0.5 * np.conj(om), 0.0]], dtype=complex)
        props[i] = expm(-1j * heff * dt)
    return props, index


# ---------------------------------------------------------------------------
# Renewal sampler for periodic drives
# ---------------------------------------------------------------------------

class _HazardTable:
    """Cumulative emission hazard from the ground state, per restart phase.

    For every starting sample index p of the (periodic) drive the no-jump
    amplitude evolution from |g> is tabulated over ``n_periods`` periods;
    beyond the table the per-period hazard increment has converged to its
    limit-cycle value and is extrapolated linearly with the last period's
    within-period profile.
    """

    def __init__(self, params: EmitterParams, delta: float,
                 samples: np.ndarray, dt: float, n_periods: Optional[int] = None):
        if params.pure_dephasing != 0.0:
            raise PhysicsError("renewal sampler requires zero pure dephasing")
        n_s = samples.size
        if n_s > 20000:
            raise PhysicsError(
                f"drive period of {n_s} samples is too long for the renewal "
                "sampler; pass one period of the waveform and use `repeats`")
        period = n_s * dt
        if n_periods is None:
            n_periods = int(np.ceil(14.0 / max(params.gamma * period, 1e-12)))
            n_periods = min(max(n_periods + 4, 6), 4000)
        props, samp_idx = _nojump_propagators(params, delta, samples, dt)

        # Propagate all starting phases in one batch.
        psi = np.zeros((n_s, 2), dtype=complex)
        psi[:, 1] = 1.0  # ground state
        n_tot = n_periods * n_s
        norms = np.empty((n_s, n_tot + 1))
        norms[:, 0] = 1.0
        phase = np.arange(n_s)
        for k in range(n_tot):
            idx = samp_idx[(phase + k) % n_s]
            psi = np.einsum("pij,pj->pi", props[idx], psi)
            norms[:, k + 1] = np.abs(psi[:, 0]) ** 2 + np.abs(psi[:, 1]) ** 2
        with np.errstate(divide="ignore"):
            self.hazard = -np.log(np.maximum(norms, 1e-300))
        self.dt = dt
        self.n_s = n_s
        self.period = period
        self.n_tot = n_tot
        # Limit-cycle hazard: increment over the last tabulated period.
        self.tail_rate = self.hazard[:, -1] - self.hazard[:, -1 - n_s]
        self.tail_profile = self.hazard[:, -1 - n_s:] - \
            self.hazard[:, -1 - n_s][:, None]

    def waiting_time(self, phase: int, target: float) -> float:
        """Time from a ground-state restart at ``phase`` until the
        cumulative hazard reaches ``target``; inf if never."""
        row = self.hazard[phase]
        if target <= row[-1]:
            k = int(np.searchsorted(row, target))
            lo, hi = row[k - 1], row[k]
            frac = 0.0 if hi <= lo else (target - lo) / (hi - lo)
            return (k - 1 + frac) * self.dt
        rate = self.tail_rate[phase]
        if rate <= 1e-300:
            return np.inf
        excess = target - row[-1]
        m = int(excess // rate)
        resid = excess - m * rate
        prof = self.tail_profile[phase]
        k = int(np.searchsorted(prof, resid))
        k = min(max(k, 1), prof.size - 1)
        lo, hi = prof[k - 1], prof[k]
        frac = 0.0 if hi <= lo else (resid - lo) / (hi - lo)
        return (self.n_tot + m * self.n_s + k - 1 + frac) * self.dt


def mc_trajectory(params: EmitterParams, drive, seed: int,
                  repeats: int = 1) -> np.ndarray:
    """Spontaneous-emission times of one quantum trajectory, in seconds.

    The drive waveform is treated as one period of a periodic excitation
    repeated ``repeats`` times (repeats = 1 reproduces the plain
    finite-waveform case; the trailing no-drive evolution then ends at the
    waveform end).  Reproducible: a fixed seed gives a bit-identical
    stream.  With a spectral-diffusion model on ``params`` a single frozen
    detuning is drawn per run (the process wanders on timescales of
    seconds, far slower than any simulated record).
    """
    rng = np.random.default_rng(seed)
    samples = np.asarray(drive.samples, dtype=complex)
    if not np.all(np.isfinite(samples.real)) or not np.all(np.isfinite(samples.imag)):
        raise PhysicsError("drive contains non-finite samples")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    delta = params.detuning_offset + drive.carrier_detuning
    if params.diffusion is not None:
        delta += params.diffusion.rms_detuning * rng.standard_normal()
    if params.pure_dephasing != 0.0:
        return mc_trajectory_direct(params, drive, seed, repeats=repeats,
                                    _delta_override=delta, _rng=rng)
    dt = 1.0 / drive.sample_rate
    t_end = drive.duration * repeats
    if np.all(samples == samples[0]):
        # constant drive: a single-sample period is an exact description
        samples = samples[:1]
    elif repeats == 1 and samples.size > 20000:
        # long one-shot waveform: renewal tabulation would be wasteful
        return mc_trajectory_direct(params, drive, seed,
                                    _delta_override=delta, _rng=rng)
    table = _HazardTable(params, delta, samples, dt)

    times = []
    t = 0.0
    phase = 0
    while True:
        target = -np.log(rng.random())
        wait = table.waiting_time(phase, target)
        t = t + wait
        if not np.isfinite(t) or t >= t_end:
            break
        times.append(t)
        phase = int(round(t / dt)) % table.n_s
    return np.asarray(times)


def mc_trajectory_direct(params: EmitterParams, drive, seed: int,
                         repeats: int = 1, n_traj: int = 1,
                         collect_states: bool = False,
                         _delta_override: Optional[float] = None,
                         _rng=None):
    """Per-step jump/no-jump unraveling, vectorized over trajectories.

    General (handles pure dephasing as a non-emissive jump channel) but
    slower than :func:`mc_trajectory`; used as its cross-check and for
    ensemble-population studies.  Returns the emission times of the first
    trajectory, or a list per trajectory when n_traj > 1; with
    ``collect_states`` additionally returns the ensemble-mean excited
    population on the sample grid.
    """
    rng = _rng if _rng is not None else np.random.default_rng(seed)
    samples = np.asarray(drive.samples, dtype=complex)
    dt = 1.0 / drive.sample_rate
    delta = (_delta_override if _delta_override is not None
             else params.detuning_offset + drive.carrier_detuning)
    props, samp_idx = _nojump_propagators(params, delta, samples, dt)
    # Dephasing jump operator sqrt(gphi/2)*sigma_z removes norm^2 at
    # gphi/2 uniformly, i.e. damps both amplitudes at gphi/4.
    gphi = params.pure_dephasing
    damp = np.exp(-0.25 * gphi * dt) if gphi else 1.0
    n_s = samples.size
    n_steps = n_s * repeats

    psi = np.zeros((n_traj, 2), dtype=complex)
    psi[:, 1] = 1.0
    thresholds = rng.random(n_traj)
    emissions: list = [[] for _ in range(n_traj)]
    mean_ee = np.zeros(n_steps + 1) if collect_states else None

    for k in range(n_steps):
        P = props[samp_idx[k % n_s]]
        new_psi = (psi @ P.T) * damp
        norm2 = np.abs(new_psi[:, 0]) ** 2 + np.abs(new_psi[:, 1]) ** 2
        jumped = norm2 < thresholds
        if np.any(jumped):
            for i in np.flatnonzero(jumped):
                pre = np.abs(psi[i, 0]) ** 2 + np.abs(psi[i, 1]) ** 2
                post = norm2[i]
                # linear-in-hazard estimate of the jump instant
                lo, hi = np.log(pre), np.log(post)
                frac = (lo - np.log(thresholds[i])) / (lo - hi) if hi < lo else 0.5
                t_jump = (k + min(max(frac, 0.0), 1.0)) * dt
                if gphi:
                    # pick the channel by instantaneous rate:
                    # radiative gamma*|c_e|^2 against dephasing gphi/2
                    p_e = np.abs(psi[i, 0]) ** 2 / pre
                    p_rad = params.gamma * p_e / (params.gamma * p_e + 0.5 * gphi)
                    if rng.random() < p_rad:
                        emissions[i].append(t_jump)
                        new_psi[i] = (0.0, 1.0)
                    else:
                        new_psi[i] = psi[i] * np.array([1.0, -1.0]) / np.sqrt(pre)
                else:
                    emissions[i].append(t_jump)
                    new_psi[i] = (0.0, 1.0)
                thresholds[i] = rng.random()
        psi = new_psi
        if collect_states:
            n2 = np.abs(psi[:, 0]) ** 2 + np.abs(psi[:, 1]) ** 2
            mean_ee[k + 1] = np.mean(np.abs(psi[:, 0]) ** 2 / n2)

    out = [np.asarray(e) for e in emissions]
    result = out[0] if n_traj == 1 else out
    if collect_states:
        return result, mean_ee
    return result


# ---------------------------------------------------------------------------
# Detection chain
# ---------------------------------------------------------------------------

def apply_detection(emissions: np.ndarray, chain: DetectionChain, seed: int,
                    channel: int = 0,
                    span: Optional[tuple] = None) -> np.ndarray:
    """Map emission times (s) onto detector records.

    Thins by efficiency*(1 - sideband_loss), adds Gaussian timing jitter
    of the configured FWHM, overlays a homogeneous Poisson background over
    ``span`` (defaults to the emission extent), and quantizes to integer
    picoseconds.  Returns sorted int64 timestamps; ``channel`` is carried
    by the caller's stream bookkeeping.
    """
    t = np.asarray(emissions, dtype=float)
    if t.size and np.any(np.diff(t) < 0):
        raise ValueError("emissions must be sorted")
    rng = np.random.default_rng(seed)
    keep_p = chain.efficiency * (1.0 - chain.sideband_loss)
    kept = t[rng.random(t.size) < keep_p] if keep_p < 1.0 else t.copy()
    if chain.jitter_fwhm > 0:
        sigma = chain.jitter_fwhm / (2.0 * np.sqrt(2.0 * np.log(2.0)))
        kept = kept + sigma * rng.standard_normal(kept.size)
    if chain.background_rate > 0:
        if span is None:
            span = (float(t[0]), float(t[-1])) if t.size else (0.0, 0.0)
        t0, t1 = span
        n_bg = rng.poisson(chain.background_rate * max(t1 - t0, 0.0))
        kept = np.concatenate([kept, rng.uniform(t0, t1, n_bg)])
    ts = np.sort(np.round(kept / PS).astype(np.int64))
    return ts


def split_stream(timestamps: np.ndarray, transmission: float,
                 seed: int) -> tuple:
    """Route a stream through a beamsplitter: (transmitted, reflected)."""
    if not 0.0 <= transmission <= 1.0:
        raise ValueError("transmission must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    pick = rng.random(len(timestamps)) < transmission
    ts = np.asarray(timestamps)
    return ts[pick], ts[~pick]


# ---------------------------------------------------------------------------
# Correlation
# ---------------------------------------------------------------------------

def _pair_delays(a: np.ndarray, b: np.ndarray, window: float,
                 same_stream: bool) -> np.ndarray:
    """All signed delays b - a within +-window, via sorted-window gather."""
    lo = np.searchsorted(b, a - window, side="left")
    hi = np.searchsorted(b, a + window, side="right")
    lens = hi - lo
    total = int(lens.sum())
    if total == 0:
        return np.empty(0, dtype=a.dtype)
    starts = np.repeat(lo, lens)
    offsets = np.arange(total) - np.repeat(np.cumsum(lens) - lens, lens)
    idx_b = starts + offsets
    idx_a = np.repeat(np.arange(a.size), lens)
    delays = b[idx_b] - a[idx_a]
    if same_stream:
        delays = delays[idx_b != idx_a]
    return delays


# Fraction of the window (outermost bins, both sides) used to estimate the
# uncorrelated coincidence level.
_NORM_TAIL = 0.25


def correlate_g2(records_a: np.ndarray, records_b: np.ndarray,
                 bin_width: float, window: float) -> CoincidenceHistogram:
    """Histogram all pairwise delays t_b - t_a within +-window.

    Timestamps are integer picoseconds; bin_width and window are seconds.
    The histogram is normalized by the mean count over the outer quarter
    of the window so that uncorrelated streams average to one.  When the
    same array is passed twice, self-pairs are excluded.
    """
    a = np.asarray(records_a, dtype=np.int64)
    b = np.asarray(records_b, dtype=np.int64)
    if a.size == 0 or b.size == 0:
        raise ValueError("correlate_g2 requires non-empty record streams")
    if bin_width <= 0 or window <= bin_width:
        raise ValueError("need bin_width > 0 and window > bin_width")
    same = a is records_b or (a.size == b.size and np.array_equal(a, b))
    w_ps = window / PS
    delays = _pair_delays(a, b, w_ps, same).astype(float) * PS

    n_half = int(np.floor(window / bin_width - 0.5))
    centers = np.arange(-n_half, n_half + 1) * bin_width
    edges = np.concatenate([centers - 0.5 * bin_width,
                            [centers[-1] + 0.5 * bin_width]])
    counts, _ = np.histogram(delays, bins=edges)

    tail = np.abs(centers) >= (1.0 - _NORM_TAIL) * window
    if not np.any(tail):
        tail = np.abs(centers) >= 0.5 * window
    norm = float(np.mean(counts[tail]))
    if norm <= 0:
        norm = max(float(np.mean(counts)), 1.0)
    return CoincidenceHistogram(bin_centers=centers, counts=counts,
                                normalization=norm)


# ---------------------------------------------------------------------------
# Pulsed-histogram peak decomposition
# ---------------------------------------------------------------------------

def pulsed_g2_templates(params: EmitterParams, drive, chain: DetectionChain,
                        n_settle: int = 12) -> tuple:
    """Theory templates for the peaks of a pulsed correlation histogram.

    ``drive`` is one period of the excitation.  Returns (tau, side,
    central): the cross-pulse pair-delay density (side peaks, the
    autocorrelation of the steady-cycle emission profile) and the
    same-pulse two-photon delay density (central peak, from the
    ground-state regression after a first emission), both convolved with
    the pair timing jitter of the detection chain.  Densities share the
    drive's sample grid over tau in (-period, period).

    Built entirely from the deterministic solver, so the templates are an
    oracle independent of the trajectory sampler whose histograms they
    decompose.
    """
    from .emitter import solve_bloch
    from .waveforms import DriveWaveform

    samples = np.asarray(drive.samples, dtype=complex)
    per = samples.size
    sr = drive.sample_rate
    dt = 1.0 / sr
    gamma = params.gamma

    settle = DriveWaveform(np.tile(samples, n_settle), sr,
                           drive.carrier_detuning)
    states = solve_bloch(params, settle, settle.times)
    ee = np.array([st.rho_ee for st in states])
    cyc = ee[-per:]

    # central: emission at t (rate gamma*cyc), reset to ground, second
    # emission at t + tau under the remaining drive of the same period
    pair_tau = np.zeros(per)
    active = np.flatnonzero(np.abs(samples) > 0)
    stop = active[-1] + 1 if active.size else 0
    for k in range(stop):
        rem = np.concatenate([samples[k:], np.zeros(k, dtype=complex)])
        st = solve_bloch(params, DriveWaveform(rem, sr), np.arange(per) / sr)
        ee2 = np.array([x.rho_ee for x in st])
        pair_tau += cyc[k] * ee2 * (gamma * dt) ** 2

    tau = np.arange(-per + 1, per) * dt
    central = np.concatenate([pair_tau[:0:-1], pair_tau]) / dt
    side = np.correlate(cyc, cyc, mode="full") * (gamma * dt) ** 2 / dt

    if chain.jitter_fwhm > 0:
        sigma = chain.jitter_fwhm / (2.0 * np.sqrt(2.0 * np.log(2.0))) * np.sqrt(2.0)
        kern = np.exp(-0.5 * (tau / sigma) ** 2)
        kern /= kern.sum()
        central = np.convolve(central, kern, mode="same")
        side = np.convolve(side, kern, mode="same")
    return tau, side, central


def pulsed_peak_areas(hist: CoincidenceHistogram, period: float,
                      side_template: Optional[tuple] = None,
                      central_template: Optional[tuple] = None) -> dict:
    """Areas of the comb peaks of a pulsed correlation histogram.

    Neighbouring peaks of a pulsed stream overlap whenever the emitter
    lifetime is not small against the repetition period, so plain
    period-window sums double-count tail leakage.  The histogram is
    instead decomposed as A_0*h_c(tau) + sum_k A_k*h_s(tau - k*period) by
    non-negative least squares.  Templates are (tau, density) pairs, e.g.
    from :func:`pulsed_g2_templates`; without them the side shape is
    estimated from the interior side peaks of the histogram itself and
    reused for the central peak.

    Returns {k: area} in the histogram's normalized units.
    """
    from scipy.optimize import nnls

    centers = hist.bin_centers
    values = hist.normalized
    bw = hist.bin_width
    k_max = int(np.floor((centers[-1] + 0.5 * bw) / period))
    if k_max < 1:
        raise ValueError("window too small: no side peaks inside histogram")
    orders = np.arange(-k_max, k_max + 1)

    if side_template is None:
        # average fully interior side peaks as the shape estimate
        half = int(round(0.5 * period / bw))
        acc = []
        for k in range(-k_max, k_max + 1):
            if abs(k) < 2:
                continue
            i0 = int(np.argmin(np.abs(centers - k * period)))
            if i0 - half >= 0 and i0 + half < centers.size:
                acc.append(values[i0 - half:i0 + half + 1])
        if not acc:
            raise ValueError("no interior side peaks available for a "
                             "template; pass one explicitly")
        t_tau = (np.arange(2 * half + 1) - half) * bw
        side_template = (t_tau, np.mean(acc, axis=0))
    if central_template is None:
        central_template = side_template

    s_tau, s_val = (np.asarray(a, dtype=float) for a in side_template)
    c_tau, c_val = (np.asarray(a, dtype=float) for a in central_template)

    design = np.zeros((centers.size, orders.size))
    for j, k in enumerate(orders):
        if k == 0:
            design[:, j] = np.interp(centers, c_tau, c_val, left=0.0, right=0.0)
        else:
            design[:, j] = np.interp(centers - k * period, s_tau, s_val,
                                     left=0.0, right=0.0)
    coeff, _ = nnls(design, values)
    s_mass = np.trapezoid(s_val, s_tau)
    c_mass = np.trapezoid(c_val, c_tau)
    return {int(k): float(c * (c_mass if k == 0 else s_mass))
            for k, c in zip(orders, coeff)}


def peak_area_ratio(hist: CoincidenceHistogram, period: float,
                    side_template: Optional[tuple] = None,
                    central_template: Optional[tuple] = None) -> float:
    """Central-peak area over the mean side-peak area."""
    areas = pulsed_peak_areas(hist, period, side_template, central_template)
    side = [v for k, v in areas.items() if k != 0]
    return areas[0] / float(np.mean(side))
