import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sykquench import (BathSpec, ContourGreen, DomainError, EquilibriumParams,
                       QuenchConfig, TimeLattice, assemble_self_energy,
                       evolve_quench, kb_residual)
from sykquench.quench import bath_sign, evolve_quench_full, initial_condition

from conftest import quench_config, thermal_green


def test_bath_sign():
    assert bath_sign(1) == -1
    assert bath_sign(3) == 1


def test_self_energy_oracle_after_quench():
    cfg = quench_config(2.4, [(2.4, 0.525, 3)], lambda_t=5.0)
    G = thermal_green(2.4, 5.0)
    i = cfg.lattice.index(1.0)
    g = G.g_greater[i, i]
    gb = cfg.baths[0].bath_green.g_greater[i, i]
    sg, sl = assemble_self_energy(G, cfg, 1.0, 1.0)
    # on the diagonal both functions equal -i/2
    assert g == pytest.approx(-0.5j) and gb == pytest.approx(-0.5j)
    expect_g = -0.25 * (-0.5j) ** 3 - 0.525 ** 2 * (-0.5j) ** 3
    expect_l = -0.25 * (0.5j) ** 3 - 0.525 ** 2 * (0.5j) ** 3
    assert sg == pytest.approx(expect_g, abs=1e-12)
    assert sl == pytest.approx(expect_l, abs=1e-12)


def test_bath_term_gated_before_quench():
    cfg = quench_config(2.4, [(2.4, 0.525, 1)], lambda_t=5.0)
    G = thermal_green(2.4, 5.0)
    iso = cfg.with_couplings(0.0)
    for t1, t2 in [(-1.0, 2.0), (-0.5, -0.5), (3.0, -2.0)]:
        assert assemble_self_energy(G, cfg, t1, t2) == \
            assemble_self_energy(G, iso, t1, t2)
    # half weight at the switch-on instant
    on = np.subtract(assemble_self_energy(G, cfg, 1.0, 0.0),
                     assemble_self_energy(G, iso, 1.0, 0.0))
    full = np.subtract(assemble_self_energy(G, cfg, 1.0, 0.5),
                       assemble_self_energy(G, iso, 1.0, 0.5))
    gb = cfg.baths[0].bath_green.g_greater
    lat = cfg.lattice
    ratio = gb[lat.index(1.0), lat.index(0.0)] / gb[lat.index(1.0), lat.index(0.5)]
    assert on[0] == pytest.approx(0.5 * ratio * full[0], rel=1e-12)


def test_free_grid_has_zero_residual():
    lat = TimeLattice(0.1, 3.0)
    system = EquilibriumParams.for_lattice(lat, 1.0, 0.0)
    free = ContourGreen.free(lat)
    bath = BathSpec(1.0, 0.0, 3, free)
    cfg = QuenchConfig(system, [bath], lat)
    assert np.max(kb_residual(free, cfg)) == 0.0


def test_zero_coupling_keeps_equilibrium():
    cfg = quench_config(1.0, [(1.0, 0.0, 3)], lambda_t=5.0)
    G = evolve_quench(cfg)
    G0 = initial_condition(cfg)
    assert np.max(np.abs(G.g_greater - G0.g_greater)) < 5e-3
    lat = cfg.lattice
    i0 = lat.zero_index
    assert np.max(np.abs(G.g_greater[:i0 + 1, :i0 + 1]
                         - G0.g_greater[:i0 + 1, :i0 + 1])) == 0.0


@pytest.fixture(scope="module")
def evolved():
    cfg = quench_config(2.4, [(0.5, 0.525, 3)], lambda_t=5.0)
    return cfg, evolve_quench_full(cfg)


def test_invariants_of_solution(evolved):
    cfg, res = evolved
    G = res.green
    assert G.diagonal_residual() < 1e-12
    assert G.antisymmetry_residual() < 1e-12
    assert res.info.final_update < cfg.fp_tol
    assert np.abs(G.g_greater).max() <= 0.5 + 1e-9


def test_causal_matches_fixed_point(evolved):
    cfg, res = evolved
    g_c = evolve_quench(cfg, method="causal")
    assert np.max(np.abs(g_c.g_greater - res.green.g_greater)) < 1e-8


def test_equilibrium_residual_is_second_order():
    # a short window truncates the memory integral; 25 keeps that below
    # the discretization error away from the lower edge
    out = []
    for dt in (0.2, 0.1):
        cfg = quench_config(1.0, [(0.5, 0.0, 3)], lambda_t=25.0, dt=dt)
        r = kb_residual(initial_condition(cfg), cfg)
        t = cfg.lattice.times
        interior = (t[:, None] >= -5) & (t[None, :] >= -5)
        out.append(r[interior].max())
    assert 3.0 < out[0] / out[1] < 5.0


@settings(max_examples=10, deadline=None)
@given(v=st.floats(0.0, 0.8), n=st.sampled_from([1, 3]))
def test_self_energy_majorana_relation(v, n):
    cfg = quench_config(1.0, [(0.5, v, n)], lambda_t=2.0)
    G = thermal_green(1.0, 2.0)
    for t1, t2 in [(0.5, 1.2), (1.5, -0.3)]:
        sg, _ = assemble_self_energy(G, cfg, t1, t2)
        _, sl = assemble_self_energy(G, cfg, t2, t1)
        assert sl == pytest.approx(-sg, abs=1e-14)
        assert sg == pytest.approx(-np.conj(assemble_self_energy(G, cfg, t2, t1)[0]),
                                   abs=1e-14)


def test_config_validation():
    lat = TimeLattice(0.1, 2.0)
    system = EquilibriumParams.for_lattice(lat, 1.0, 0.5)
    bath = BathSpec.thermal(lat, 1.0, 0.2)
    with pytest.raises(DomainError):
        QuenchConfig(system, [], lat)
    with pytest.raises(DomainError):
        QuenchConfig(system, [bath] * 3, lat)
    with pytest.raises(DomainError):
        QuenchConfig(system, [bath], TimeLattice(0.05, 2.0))
    with pytest.raises(DomainError):
        QuenchConfig(system, [bath], lat, method="rk4")
    with pytest.raises(DomainError):
        BathSpec.thermal(lat, 1.0, -0.1)
    with pytest.raises(DomainError):
        BathSpec.thermal(lat, 1.0, 0.1, n_bath=2)
    with pytest.raises(DomainError):
        QuenchConfig(EquilibriumParams(1.0, 0.5, q_body=2), [bath], lat)
