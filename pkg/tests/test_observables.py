import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sykquench import ContourGreen, DomainError, TimeLattice
from sykquench import observables as obs
from sykquench.observables import (BetaTrace, BracketError,
                                   UndefinedTemperatureError, compute_trace,
                                   detect_crossings, effective_beta_corner,
                                   effective_beta_fdt, fdt_ratio_fit,
                                   threshold_scan, total_energy)

from conftest import quench_config, thermal_green


def _trace(t, beta, quality=None, reliable=None):
    t = np.asarray(t, dtype=float)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), t.shape)
    q = np.zeros_like(t) if quality is None else quality
    return BetaTrace(t, beta, beta, np.zeros_like(t), q, reliable)


T = np.linspace(0.5, 10.0, 20)


def test_constant_gap_has_no_crossing():
    rep = detect_crossings(_trace(T, 2.0), _trace(T, 1.0))
    assert rep.count == 0 and rep.parity == 0
    assert rep.min_separation == pytest.approx(1.0)


def test_linear_difference_crosses_once():
    rep = detect_crossings(_trace(T, T), _trace(T, 5.0))
    assert rep.count == 1 and rep.parity == 1
    assert rep.crossing_times[0] == pytest.approx(5.0)
    assert rep.min_separation == 0.0


def test_deadband_suppresses_jitter():
    b = 1.0 + 0.01 * np.where(np.arange(T.size) % 2, 1, -1)
    assert detect_crossings(_trace(T, b), _trace(T, 1.0), deadband=0).count > 5
    assert detect_crossings(_trace(T, b), _trace(T, 1.0),
                            deadband=0.02).count == 0


def test_unreliable_samples_are_skipped():
    rel = T < 7
    rep = detect_crossings(_trace(T, T, reliable=rel), _trace(T, 8.0))
    assert rep.count == 0


def test_window_restricts_search():
    rep = detect_crossings(_trace(T, T), _trace(T, 5.0), window=(6.0, 10.0))
    assert rep.count == 0


def test_mismatched_traces_rejected():
    with pytest.raises(DomainError):
        detect_crossings(_trace(T, 1.0), _trace(T[:-1], 1.0))
    with pytest.raises(DomainError):
        detect_crossings(_trace(T, 1.0), _trace(T, 2.0), deadband=-1)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=20, max_size=20),
       st.floats(0, 0.5))
def test_crossings_antisymmetric(values, band):
    a, b = _trace(T, np.array(values)), _trace(T, 0.3)
    ab = detect_crossings(a, b, deadband=band)
    ba = detect_crossings(b, a, deadband=band)
    assert np.array_equal(ab.crossing_times, ba.crossing_times)
    assert ab.parity == ab.count % 2


def test_report_json():
    rep = detect_crossings(_trace(T, T), _trace(T, 5.0))
    data = json.loads(rep.dumps())
    assert data["parity"] == 1 and len(data["crossings"]) == 1


def test_trace_csv_round_trip(tmp_path):
    tr = _trace(T, np.sqrt(T), quality=T / 100, reliable=T < 8)
    tr.energy = -T / 3
    tr.write_csv(tmp_path / "t.csv")
    back = BetaTrace.read_csv(tmp_path / "t.csv")
    for name in ("times", "beta_fdt", "beta_corner", "energy", "fit_quality"):
        assert np.array_equal(getattr(back, name), getattr(tr, name))
    assert np.array_equal(back.reliable, tr.reliable)


# Wigner convention: Im G_K / Im G_R = tanh(beta w / 2), read with scale 2
def test_ratio_fit_exact_for_tanh_data():
    w = np.linspace(-3, 3, 121)
    im_r = -1.0 / (1 + w ** 2)
    im_k = np.tanh(0.7 * w) * im_r
    beta, q = fdt_ratio_fit(w, im_k, im_r, 2.0)
    assert beta == pytest.approx(1.4, rel=1e-3)
    assert q < 1e-3


def test_ratio_fit_falls_back_to_tanh():
    w = np.linspace(-3, 3, 121)
    im_r = -1.0 / (1 + w ** 2)
    rng = np.random.default_rng(3)
    im_k = np.tanh(0.7 * w) * im_r * (1 + 0.3 * rng.standard_normal(w.size))
    beta, q = fdt_ratio_fit(w, im_k, im_r, 2.0)
    pos = np.flatnonzero(w > 0)[:4]
    ratio = 2 * im_k[pos] / (w[pos] * im_r[pos])
    assert np.std(ratio) > obs.FIT_FALLBACK
    assert beta == pytest.approx(1.4, rel=0.3)


def test_free_theory_has_no_temperature():
    G = ContourGreen.free(TimeLattice(0.1, 5.0))
    with pytest.raises(UndefinedTemperatureError):
        effective_beta_fdt(G, 0.0)
    with pytest.raises(UndefinedTemperatureError):
        effective_beta_corner(G, 2.0)


@pytest.mark.parametrize("beta", [0.5, 2.4])
def test_both_temperatures_in_equilibrium(beta):
    G = thermal_green(beta, 25.0)
    assert effective_beta_fdt(G, 0.0)[0] == pytest.approx(beta, rel=0.02)
    assert effective_beta_corner(G, 10.0)[0] == pytest.approx(beta, rel=0.02)


def test_energy_zero_without_coupling():
    G = thermal_green(1.0, 10.0)
    assert total_energy(G, 0.0, 2.0) == 0.0
    assert total_energy(ContourGreen.free(G.lattice), 0.5, 2.0) == 0.0


def test_energy_constant_in_equilibrium():
    G = thermal_green(1.0, 25.0)
    e = [total_energy(G, 0.5, t) for t in (0.0, 2.0, 5.0)]
    assert np.ptp(e) < 1e-6


def test_energy_monotone_in_beta():
    e = [total_energy(thermal_green(b, 25.0), 0.5, 0.0) for b in (0.5, 1.0, 2.4)]
    assert np.all(np.diff(e) > 0)


def test_compute_trace_flags_late_edge():
    G = thermal_green(1.0, 10.0)
    tr = compute_trace(G, 0.5, stride=10)
    assert np.all(tr.times >= 0)
    assert not tr.reliable[tr.times >= 8.0].any()
    good = tr.beta_fdt[tr.reliable]
    assert good.size and np.allclose(good, 1.0, rtol=0.05)


def _fake_runs(monkeypatch, threshold):
    """``beta_i (1 - v t / (10 threshold))``: pairs cross iff v > threshold."""
    def evolve(cfg):
        return cfg.baths[0].coupling_v, cfg.system.beta

    def trace(G, J, stride):
        v, beta = G
        return _trace(T, beta * (1 - v * T / (10 * threshold)))

    monkeypatch.setattr(obs, "compute_trace", trace)
    return evolve


def test_threshold_bisection(monkeypatch):
    evolve = _fake_runs(monkeypatch, 0.3)
    cfg = quench_config(1.0, [(0.5, 0.2, 3)], lambda_t=2.0)
    v = threshold_scan(cfg, (2.0, 1.0), (0.1, 0.6), bisect_tol=0.005,
                       evolve=evolve)
    assert v == pytest.approx(0.3, abs=0.005)


def test_threshold_bracket_error(monkeypatch):
    evolve = _fake_runs(monkeypatch, 0.3)
    cfg = quench_config(1.0, [(0.5, 0.2, 3)], lambda_t=2.0)
    with pytest.raises(BracketError):
        threshold_scan(cfg, (2.0, 1.0), (0.35, 0.6), evolve=evolve)


def test_report_json_without_samples():
    rel = np.zeros(T.size, dtype=bool)
    rep = detect_crossings(_trace(T, 1.0, reliable=rel), _trace(T, 2.0))
    assert json.loads(rep.dumps())["min_separation"] is None
