import numpy as np
import pytest

from heitler_lab.emitter import EmitterParams, rabi_for_saturation, solve_bloch
from heitler_lab.errors import PhysicsError
from heitler_lab.waveforms import (
    DriveWaveform,
    ModulationSpec,
    carrier_suppressed,
    cw,
    heitler_response,
    pulse_train,
    sine_am,
    waveform_spectrum,
)

T1 = 0.65e-9
PARAMS = EmitterParams.from_lifetime(T1)
GAMMA = PARAMS.gamma


def _intensity(drive):
    return np.abs(drive.samples) ** 2


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------

def test_sine_am_flat_when_undriven():
    d = sine_am(200e6, 0.0, 1e8, 50e-9, sample_rate=20e9)
    assert np.allclose(d.samples, 1e8)


def test_sine_am_mean_intensity_and_period():
    d = sine_am(200e6, 0.7, 2e8, 100e-9, sample_rate=20e9)
    assert np.mean(_intensity(d)) == pytest.approx((2e8) ** 2, rel=1e-6)
    # intensity periodic at 5 ns: shift by one period and compare
    lag = int(round(5e-9 * d.sample_rate))
    I = _intensity(d)
    assert np.allclose(I[:-lag], I[lag:], rtol=1e-9)


def test_sine_am_full_depth_touches_zero():
    d = sine_am(200e6, 1.0, 2e8, 5e-9, sample_rate=20e9)
    I = _intensity(d)
    assert I.min() < 1e-4 * I.max()


def test_sine_am_nyquist_guard():
    with pytest.raises(PhysicsError, match="Nyquist"):
        sine_am(11e9, 0.5, 1e8, 1e-8, sample_rate=20e9)


def test_carrier_suppressed_zero_mean_and_sidebands():
    d = carrier_suppressed(200e6, 100e-9, sample_rate=20e9, peak_rabi=1e8)
    assert abs(np.mean(d.samples)) < 1e-9 * np.max(np.abs(d.samples))
    spec = waveform_spectrum(d)
    df = spec.df
    carrier = spec.power[np.argmin(np.abs(spec.freq_grid))]
    i_plus = np.argmin(np.abs(spec.freq_grid - 200e6))
    i_minus = np.argmin(np.abs(spec.freq_grid + 200e6))
    peak = spec.power[i_plus]
    assert carrier < 1e-3 * peak
    assert spec.power[i_minus] == pytest.approx(peak, rel=0.01)
    # sidebands dominate everything else
    mask = np.ones(spec.power.size, bool)
    for i in (i_plus, i_minus):
        mask[i - 2:i + 3] = False
    assert spec.power[mask].max() < 1e-3 * peak
    assert abs(spec.freq_grid[i_plus] - 200e6) <= df


def test_pulse_train_duty_and_energy():
    d = pulse_train(500e-12, 300e6, 2e8, 10, sample_rate=24e9)
    I = _intensity(d)
    duty = np.count_nonzero(I) / I.size
    assert duty == pytest.approx(0.15, abs=1.0 / (d.sample_rate / 300e6))
    single = pulse_train(500e-12, 300e6, 2e8, 1, sample_rate=24e9)
    energy = np.sum(_intensity(single)) / single.sample_rate
    assert energy == pytest.approx((2e8) ** 2 * 500e-12, rel=1e-9)
    # rising edges spaced by the repetition period
    edges = np.flatnonzero(np.diff((I > 0).astype(int)) == 1) + 1
    assert np.allclose(np.diff(edges), d.sample_rate / 300e6)


def test_pulse_train_overlap_rejected():
    with pytest.raises(PhysicsError, match="overlap"):
        pulse_train(3.4e-9, 300e6, 1e8, 5, sample_rate=24e9)


def test_modulation_spec_roundtrip():
    spec = ModulationSpec(kind="pulse_train", pulse_width=500e-12,
                          rep_rate=300e6, peak_rabi=1e8, n_pulses=4,
                          sample_rate=24e9)
    d = spec.build()
    assert d.duration == pytest.approx(4 / 300e6)
    with pytest.raises(ValueError):
        ModulationSpec(kind="wiggle")
    with pytest.raises(ValueError):
        ModulationSpec(kind="pulse_train", pulse_width=4e-9, rep_rate=300e6)


# ---------------------------------------------------------------------------
# Spectra
# ---------------------------------------------------------------------------

def test_cw_spectrum_single_line():
    d = cw(1e8, 50e-9, sample_rate=20e9)
    spec = waveform_spectrum(d)
    peak = np.argmax(spec.power)
    assert spec.freq_grid[peak] == pytest.approx(0.0, abs=spec.df)
    assert spec.power[peak] > 1e3 * np.median(spec.power)


def test_spectrum_parseval():
    d = sine_am(200e6, 0.6, 1e8, 100e-9, sample_rate=20e9)
    spec = waveform_spectrum(d)
    energy_t = np.sum(_intensity(d)) / d.sample_rate
    energy_f = np.sum(spec.power) * spec.df
    assert energy_f == pytest.approx(energy_t, rel=1e-6)


def test_sine_am_small_depth_sideband_weights():
    m = 0.1
    d = sine_am(200e6, m, 1e8, 200e-9, sample_rate=20e9)
    spec = waveform_spectrum(d)
    carrier = spec.power[np.argmin(np.abs(spec.freq_grid))]
    side = spec.power[np.argmin(np.abs(spec.freq_grid - 200e6))]
    assert side / carrier == pytest.approx((m / 4) ** 2, rel=0.05)


def test_pulse_train_comb_spacing():
    d = pulse_train(500e-12, 300e6, 1e8, 32, sample_rate=24e9)
    spec = waveform_spectrum(d)
    # comb lines at multiples of the repetition rate, exact to one bin
    power = spec.power
    df = spec.df
    strong = power > 1e-4 * power.max()
    f_strong = np.abs(spec.freq_grid[strong])
    offsets = np.abs(f_strong / 300e6 - np.round(f_strong / 300e6)) * 300e6
    assert np.max(offsets) <= df


# ---------------------------------------------------------------------------
# Weak-drive scattering
# ---------------------------------------------------------------------------

def test_heitler_rectangular_pulse_tail():
    rabi = rabi_for_saturation(PARAMS, 0.02)
    d = pulse_train(500e-12, 100e6, rabi, 1, sample_rate=40e9)
    out = heitler_response(d, PARAMS)
    I = np.abs(out.samples) ** 2
    t = out.times
    edge = 500e-12
    sel = (t > edge + 0.1e-9) & (t < edge + 3.0e-9)
    # intensity tail decays at gamma, i.e. the T1 lifetime
    slope = np.polyfit(t[sel], np.log(I[sel]), 1)[0]
    tau_fit = -1.0 / slope
    assert tau_fit == pytest.approx(T1, rel=0.02)


def test_heitler_cw_steady_scaling():
    rabi = rabi_for_saturation(PARAMS, 0.01)
    d = cw(rabi, 80e-9, sample_rate=20e9)
    out = heitler_response(d, PARAMS)
    settle = out.samples[-100:]
    assert np.allclose(settle, rabi, rtol=1e-6)  # unit resonant gain


def test_heitler_sideband_weight():
    # sidebands at +-200 MHz against gamma from T1 = 0.65 ns -> 0.27
    rabi = rabi_for_saturation(PARAMS, 0.02)
    d = sine_am(200e6, 0.5, rabi, 400e-9, sample_rate=20e9)
    out = heitler_response(d, PARAMS)
    sin_spec = waveform_spectrum(d)
    out_spec = waveform_spectrum(out)
    # skip the turn-on transient by windowing both identically? use ratio of
    # single-bin powers; transient is negligible over 400 ns
    def line(spec, f):
        return spec.power[np.argmin(np.abs(spec.freq_grid - f))]
    ratio = (line(out_spec, 200e6) / line(out_spec, 0.0)) / \
            (line(sin_spec, 200e6) / line(sin_spec, 0.0))
    g2 = 0.5 * GAMMA
    expected = g2 ** 2 / (g2 ** 2 + (2 * np.pi * 200e6) ** 2)
    assert ratio == pytest.approx(expected, abs=0.02)
    assert expected == pytest.approx(0.27, abs=0.01)


def test_heitler_linearity():
    rabi = rabi_for_saturation(PARAMS, 0.01)
    a = sine_am(200e6, 0.5, rabi, 50e-9, sample_rate=20e9)
    b = pulse_train(500e-12, 100e6, rabi, 5, sample_rate=20e9)
    xa, xb = a.samples, b.samples
    combo = DriveWaveform(0.3 * xa + 0.6 * xb, 20e9)
    lhs = heitler_response(combo, PARAMS).samples
    rhs = 0.3 * heitler_response(a, PARAMS).samples + \
        0.6 * heitler_response(b, PARAMS).samples
    assert np.max(np.abs(lhs - rhs)) < 1e-9 * np.max(np.abs(rhs))


def test_heitler_validity_guard():
    strong = cw(rabi_for_saturation(PARAMS, 0.5), 10e-9, sample_rate=20e9)
    with pytest.raises(PhysicsError, match="saturation"):
        heitler_response(strong, PARAMS)
    marginal = cw(rabi_for_saturation(PARAMS, 0.15), 10e-9, sample_rate=20e9)
    with pytest.warns(UserWarning, match="marginal"):
        heitler_response(marginal, PARAMS)


@pytest.mark.parametrize("make,s_mean", [
    # the stationary sine drive feels the full CW saturation correction
    # (~s/2 relative), so it needs a lower operating point than the
    # transient waveforms to stay under the 2% agreement bound
    (lambda r: sine_am(200e6, 0.8, r, 60e-9, sample_rate=40e9), 0.012),
    (lambda r: carrier_suppressed(200e6, 60e-9, sample_rate=40e9, peak_rabi=r), 0.05),
    (lambda r: pulse_train(500e-12, 300e6, r, 18, sample_rate=40e9), 0.05),
])
def test_heitler_matches_bloch_dipole(make, s_mean):
    # cross-validation: linear response vs full Bloch dipole at max s <= 0.05
    rabi = rabi_for_saturation(PARAMS, s_mean)
    drive = make(rabi)
    assert drive.max_saturation(PARAMS) <= 0.05 + 1e-9
    grid = drive.times
    states = solve_bloch(PARAMS, drive, grid)
    sigma = np.conj(np.array([st.rho_ge for st in states]))  # <sigma_minus>
    g2 = PARAMS.gamma2
    linear = heitler_response(drive, PARAMS).samples * (-0.5j / g2)
    rms_err = np.sqrt(np.mean(np.abs(sigma - linear) ** 2))
    rms_sig = np.sqrt(np.mean(np.abs(sigma) ** 2))
    assert rms_err <= 0.02 * rms_sig
