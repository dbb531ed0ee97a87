"""Physics oracles for the transmitter, fiber and receiver stages.

Expected values are computed from closed forms inside each test (frozen
constants where the derivation happened offline), never from the code under
test.
"""

import math

import numpy as np
import pytest
from scipy.constants import elementary_charge

from lrc.link import (
    DetectedWaveform,
    GRAY_BIT_ERRORS,
    LinkConfig,
    OpticalField,
    SymbolStream,
    add_ase_noise,
    bessel_lowpass,
    bits_to_symbols,
    detect,
    measure_osnr,
    modulate,
    pam4_levels_w,
    photocurrent,
    propagate,
    random_symbols,
    receiver_noise_std,
    symbols_to_bits,
)
from lrc.errors import ConfigError, NumericalAbortError


def quiet_cfg(**kw) -> LinkConfig:
    """Config with every stochastic term off unless overridden."""
    base = dict(noiseless=True, rin_db_hz=-math.inf)
    base.update(kw)
    return LinkConfig(**base)


def gaussian_field(t0_s, dt_s, n, peak_w, wavelength_nm=1550.0):
    # field exp(-t^2 / (2 T0^2)): dispersion length T0^2/|beta2|, width
    # growth factor sqrt(1 + (z/L_D)^2)
    t = (np.arange(n) - n / 2) * dt_s
    env = np.sqrt(peak_w) * np.exp(-(t**2) / (2.0 * t0_s**2))
    return OpticalField(env.astype(complex), np.zeros(n, complex), dt_s, wavelength_nm)


def rms_width(power, dt_s):
    t = np.arange(power.size) * dt_s
    w = power / power.sum()
    mu = (t * w).sum()
    return math.sqrt(((t - mu) ** 2 * w).sum())


# ---------------------------------------------------------------------------
# Symbol coding and levels


def test_gray_roundtrip_all_pairs():
    bits = np.array([0, 0, 0, 1, 1, 1, 1, 0], dtype=np.uint8)
    syms = bits_to_symbols(bits)
    assert syms.symbols.tolist() == [0, 1, 2, 3]
    assert symbols_to_bits(syms).tolist() == bits.tolist()


def test_gray_adjacent_levels_differ_by_one_bit():
    for k in range(3):
        assert GRAY_BIT_ERRORS[k, k + 1] == 1
    assert GRAY_BIT_ERRORS[0, 3] == 1  # 00 vs 10
    assert GRAY_BIT_ERRORS[0, 2] == 2  # 00 vs 11


def test_bits_validation():
    with pytest.raises(ValueError):
        bits_to_symbols(np.array([0, 1, 1], dtype=np.uint8))
    with pytest.raises(ValueError):
        bits_to_symbols(np.array([0, 2], dtype=np.uint8))


def test_pam4_levels_equidistant_with_13db_extinction():
    lv = pam4_levels_w(10e-3)
    steps = np.diff(lv)
    assert np.allclose(steps, steps[0])
    assert lv[3] == pytest.approx(10e-3)
    assert lv[0] == pytest.approx(10e-3 / 21.0)
    # extinction ratio 10 log10(21) = 13.22 dB
    assert 10 * math.log10(lv[3] / lv[0]) == pytest.approx(13.222, abs=1e-3)


def test_pam4_levels_extinction_knob():
    # infinite extinction: floor at zero power, levels k/3 * peak
    lv = pam4_levels_w(9e-3, extinction_ratio_db=math.inf)
    assert np.allclose(lv, 9e-3 * np.arange(4) / 3.0, atol=0.0)
    # finite value sets the peak-to-floor ratio directly
    lv = pam4_levels_w(1.0, extinction_ratio_db=10.0)
    assert lv[3] / lv[0] == pytest.approx(10.0, rel=1e-12)
    steps = np.diff(lv)
    assert np.allclose(steps, steps[0])
    with pytest.raises(ConfigError):
        pam4_levels_w(1.0, extinction_ratio_db=0.0)
    with pytest.raises(ConfigError):
        LinkConfig(extinction_ratio_db=-3.0).validate()


def test_modulate_holds_levels_and_x_polarization():
    cfg = quiet_cfg()
    stream = SymbolStream(np.array([0, 3, 1, 2], dtype=np.uint8))
    field = modulate(stream, cfg)
    assert field.env_x.size == 4 * cfg.samples_per_baud
    assert not np.any(field.env_y)
    power = np.abs(field.env_x) ** 2
    per_baud = power.reshape(4, cfg.samples_per_baud)
    assert np.allclose(per_baud.std(axis=1), 0.0)
    expected = pam4_levels_w(cfg.peak_power_w)[stream.symbols]
    assert np.allclose(per_baud[:, 0], expected, rtol=1e-12)


def test_rin_variance_matches_psd_times_bandwidth():
    # sigma_rel^2 = 10^(RIN/10) * fs/2, checked over > 1e6 samples
    cfg = LinkConfig(rin_db_hz=-150.0)
    n_sym = 1 << 17
    stream = SymbolStream(np.full(n_sym, 3, dtype=np.uint8))
    field = modulate(stream, cfg, rng=np.random.default_rng(7))
    power = np.abs(field.env_x) ** 2
    rel = power / power.mean() - 1.0
    expected = 10.0 ** (-150.0 / 10.0) * cfg.sample_rate_hz / 2.0
    assert rel.var() == pytest.approx(expected, rel=0.05)


def test_config_validation_reports_fields():
    with pytest.raises(ConfigError, match="samples_per_baud"):
        LinkConfig(samples_per_baud=1).validate()
    with pytest.raises(ConfigError, match="cutoff"):
        LinkConfig(rx_cutoff_fraction=0.0).validate()


# ---------------------------------------------------------------------------
# Fiber oracles


def test_derived_parameter_constants():
    cfg = LinkConfig()
    # beta2 = -D lam^2 / (2 pi c), frozen: -2.1683e-26 s^2/m at 17 ps/nm/km
    assert cfg.beta2_s2_m == pytest.approx(-2.1683e-26, rel=1e-4)
    # gamma = 2 pi n2 / (lam A_eff), frozen: 1.3174e-3 1/(W m)
    assert cfg.gamma_w_m == pytest.approx(1.3174e-3, rel=1e-4)
    # 0.2 dB/km -> 4.605e-5 Np/m power coefficient
    assert cfg.alpha_np_m == pytest.approx(4.6052e-5, rel=1e-4)


def test_attenuation_only_closed_form():
    cfg = quiet_cfg(fiber_length_km=27.0, dispersion_ps_nm_km=0.0, n2_m2_w=0.0,
                    dgd_ps_km=0.0)
    field = gaussian_field(10e-12, 0.5e-12, 2048, 5e-3)
    out = propagate(field, cfg)
    expected = field.env_x * 10.0 ** (-0.2 * 27.0 / 20.0)
    err = np.abs(out.env_x - expected).max() / np.abs(expected).max()
    assert err < 1e-12
    assert not np.any(out.env_y)


def test_dispersion_only_gaussian_broadening():
    cfg = quiet_cfg(attenuation_db_km=0.0, n2_m2_w=0.0, dgd_ps_km=0.0)
    t0 = 10e-12
    ld_m = t0**2 / abs(cfg.beta2_s2_m)  # about 4.61 km
    cfg = quiet_cfg(attenuation_db_km=0.0, n2_m2_w=0.0, dgd_ps_km=0.0,
                    fiber_length_km=2.0 * ld_m / 1e3)
    field = gaussian_field(t0, 0.25e-12, 8192, 1e-3)
    out = propagate(field, cfg)
    w_in = rms_width(np.abs(field.env_x) ** 2, field.dt_s)
    w_out = rms_width(np.abs(out.env_x) ** 2, out.dt_s)
    assert w_out / w_in == pytest.approx(math.sqrt(5.0), rel=0.01)


def test_dgd_delays_slow_axis_against_fast_axis():
    cfg = quiet_cfg(attenuation_db_km=0.0, n2_m2_w=0.0, dispersion_ps_nm_km=0.0,
                    dgd_ps_km=0.2, fiber_length_km=25.0)
    n, dt = 4096, 0.25e-12
    t = (np.arange(n) - n / 2) * dt
    pulse = np.exp(-(t**2) / (2 * (20e-12) ** 2)).astype(complex)
    field = OpticalField(pulse, pulse.copy(), dt, 1550.0)
    out = propagate(field, cfg)
    tx = rms_center(np.abs(out.env_x) ** 2, dt)
    ty = rms_center(np.abs(out.env_y) ** 2, dt)
    # x (slow axis) arrives 0.2 ps/km * 25 km = 5 ps after y
    assert tx - ty == pytest.approx(5e-12, abs=0.1e-12)


def rms_center(power, dt_s):
    t = np.arange(power.size) * dt_s
    return float((t * power).sum() / power.sum())


def test_kerr_cw_phase_with_loss():
    # CW, gamma and alpha only: phase = gamma * P * L_eff to 1e-6 rad
    cfg = quiet_cfg(dispersion_ps_nm_km=0.0, dgd_ps_km=0.0, fiber_length_km=27.0)
    p0 = 10e-3
    n = 512
    env = np.full(n, math.sqrt(p0), dtype=complex)
    field = OpticalField(env, np.zeros(n, complex), cfg.dt_s, 1550.0)
    out = propagate(field, cfg)
    alpha = cfg.alpha_np_m
    l_eff = (1.0 - math.exp(-alpha * 27e3)) / alpha
    expected = cfg.gamma_w_m * p0 * l_eff
    measured = -np.angle(out.env_x / field.env_x)
    assert np.max(np.abs(measured - expected)) < 1e-6


def test_energy_conserved_without_attenuation():
    cfg = quiet_cfg(attenuation_db_km=0.0, fiber_length_km=27.0)
    field = gaussian_field(10e-12, 0.5e-12, 4096, 50e-3)
    out = propagate(field, cfg, refine=False)
    e_in = field.power_w.sum()
    e_out = out.power_w.sum()
    assert abs(e_out - e_in) / e_in < 27.0 * 1e-9


def test_split_step_second_order_convergence():
    cfg = quiet_cfg(fiber_length_km=5.0)
    field = gaussian_field(5e-12, 0.25e-12, 4096, 0.5)
    outs = [
        propagate(field, cfg, dz_m=h, refine=False).env_x
        for h in (500.0, 250.0, 125.0)
    ]
    e1 = np.linalg.norm(outs[0] - outs[1])
    e2 = np.linalg.norm(outs[1] - outs[2])
    order = math.log2(e1 / e2)
    assert 1.7 <= order <= 2.3


def test_zero_length_is_identity():
    cfg = quiet_cfg(fiber_length_km=0.0)
    field = gaussian_field(10e-12, 0.5e-12, 512, 1e-3)
    out = propagate(field, cfg)
    assert np.array_equal(out.env_x, field.env_x)


def test_non_finite_field_aborts():
    cfg = quiet_cfg(fiber_length_km=1.0)
    n = 256
    env = np.full(n, 1e200, dtype=complex)  # |A|^2 overflows -> NaN phase
    field = OpticalField(env, np.zeros(n, complex), cfg.dt_s, 1550.0)
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(NumericalAbortError):
        propagate(field, cfg, refine=False)


# ---------------------------------------------------------------------------
# Receiver oracles


def test_shot_and_thermal_noise_variance():
    # variance = (2 q I + i_nd^2) * fs/2 within 5% over 1e6 samples
    cfg = LinkConfig()
    rng = np.random.default_rng(11)
    n = 1 << 20
    current = np.full(n, 10e-3)
    noise = rng.normal(size=n) * receiver_noise_std(current, cfg)
    bw = cfg.sample_rate_hz / 2.0
    expected = (2.0 * elementary_charge * 10e-3 + (10e-12) ** 2) * bw
    assert noise.var() == pytest.approx(expected, rel=0.05)
    # thermal floor alone, zero photocurrent
    noise0 = rng.normal(size=n) * receiver_noise_std(np.zeros(n), cfg)
    assert noise0.var() == pytest.approx((10e-12) ** 2 * bw, rel=0.05)


def test_bessel_dc_gain_cutoff_and_alignment():
    fs = 224e9
    fc = 39.2e9
    n = 4096
    rng = np.random.default_rng(3)
    x = rng.normal(size=n)
    y = bessel_lowpass(x, fc, fs)
    spec_in = np.fft.rfft(x)
    spec_out = np.fft.rfft(y)
    h = spec_out / spec_in
    f = np.fft.rfftfreq(n, 1 / fs)
    assert abs(h[0]) == pytest.approx(1.0, abs=1e-9)
    kc = np.argmin(np.abs(f - fc))
    assert 20 * np.log10(abs(h[kc])) == pytest.approx(-3.0, abs=0.1)
    # group delay removed: response to a centered impulse stays centered
    imp = np.zeros(n)
    imp[n // 2] = 1.0
    resp = bessel_lowpass(imp, fc, fs)
    centroid = (np.arange(n) * resp**2).sum() / (resp**2).sum()
    assert centroid == pytest.approx(n // 2, abs=0.5)


def test_detect_levels_proportional_back_to_back():
    cfg = quiet_cfg()
    centers = []
    for sym in range(4):
        stream = SymbolStream(np.full(64, sym, dtype=np.uint8))
        wave = detect(modulate(stream, cfg), cfg)
        mid = wave.samples[32 * cfg.samples_per_baud + cfg.samples_per_baud // 2]
        centers.append(mid)
    centers = np.array(centers)
    ratios = centers / centers[3]
    assert np.allclose(ratios, (3.0 + 20.0 * np.arange(4)) / 63.0, atol=1e-9)


def test_detect_current_scale():
    cfg = quiet_cfg(tia_gain_db=0.0)
    stream = SymbolStream(np.full(64, 3, dtype=np.uint8))
    field = modulate(stream, cfg)
    wave = detect(field, cfg)
    mid = wave.samples[wave.samples.size // 2]
    assert mid == pytest.approx(cfg.responsivity_a_w * cfg.peak_power_w, rel=1e-9)


# ---------------------------------------------------------------------------
# OSNR


def cw_field(n=1 << 17, p_w=1e-3, dt=1 / 224e9):
    env = np.full(n, math.sqrt(p_w), dtype=complex)
    return OpticalField(env, np.zeros(n, complex), dt, 1550.0)


def test_measure_osnr_noiseless_is_infinite():
    assert measure_osnr(cw_field(4096)) == math.inf


def test_add_ase_round_trip():
    rng = np.random.default_rng(5)
    noisy = add_ase_noise(cw_field(), 30.0, rng)
    assert measure_osnr(noisy) == pytest.approx(30.0, abs=0.2)


def test_halving_noise_power_shifts_3db():
    rng = np.random.default_rng(9)
    field = cw_field()
    n = field.env_x.size
    sigma = 2e-4
    def load(scale):
        nx = scale * (rng.normal(size=n) + 1j * rng.normal(size=n))
        ny = scale * (rng.normal(size=n) + 1j * rng.normal(size=n))
        return OpticalField(field.env_x + nx, field.env_y + ny, field.dt_s, 1550.0)
    o1 = measure_osnr(load(sigma))
    o2 = measure_osnr(load(sigma / math.sqrt(2.0)))
    assert o2 - o1 == pytest.approx(10 * math.log10(2.0), abs=0.1)


def test_ase_target_unreachable():
    rng = np.random.default_rng(13)
    noisy = add_ase_noise(cw_field(), 25.0, rng)
    with pytest.raises(ValueError, match="unreachable"):
        add_ase_noise(noisy, 40.0, rng)


def test_osnr_survives_propagation():
    # attenuation scales signal and noise alike; dispersion is unitary
    rng = np.random.default_rng(17)
    cfg = quiet_cfg(fiber_length_km=27.0)
    stream = random_symbols(512, rng)
    field = modulate(stream, cfg)
    noisy = add_ase_noise(field, 28.0, rng)
    out = propagate(noisy, cfg)
    assert measure_osnr(out) == pytest.approx(28.0, abs=0.3)
