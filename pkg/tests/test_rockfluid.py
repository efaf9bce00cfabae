import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dsflow.errors import ConfigError
from dsflow.mesh import generate_distorted_grid
from dsflow.rockfluid import (FluidParams, LinearTracerModel, RockParams, TwoPhaseModel, capillary_pressure,
                              layered_permeability, load_permeability_csv, mobilities_and_fractional_flow,
                              normalized_saturation, random_permeability, rel_perms,
                              save_permeability_csv)


def rock(model="zero", **kw):
    return RockParams(np.array([1.0]), capillary_model=model, **kw)


def test_normalized_saturation_clips():
    r = rock(S_rw=0.1, S_rn=0.2)
    Se, d = normalized_saturation(np.array([0.0, 0.1, 0.45, 0.8, 1.0]), r)
    assert np.allclose(Se, [0, 0, 0.5, 1, 1])
    assert np.allclose(d, [0, 0, 1 / 0.7, 0, 0])


def test_rel_perms_endpoints():
    krw, krn, _, _ = rel_perms(np.array([0.0, 1.0]), 2.0)
    assert np.allclose(krw, [0, 1]) and np.allclose(krn, [1, 0])


@settings(max_examples=50, deadline=None)
@given(st.floats(0.02, 0.98), st.floats(1.0, 4.0), st.floats(0.2, 5.0))
def test_fractional_flow_derivative(S, beta, mu_n):
    r = rock(beta=beta)
    fl = FluidParams(1.0, mu_n)
    m = mobilities_and_fractional_flow(np.array([S]), r, fl)
    h = 1e-6
    fp = mobilities_and_fractional_flow(np.array([S + h]), r, fl).f_w
    fm = mobilities_and_fractional_flow(np.array([S - h]), r, fl).f_w
    assert np.isclose(m.df_w[0], (fp - fm)[0] / (2 * h), rtol=1e-5, atol=1e-8)
    assert 0.0 <= m.f_w[0] <= 1.0
    assert np.isclose(m.lam_t[0], m.lam_w[0] + m.lam_n[0])


def test_fractional_flow_monotone():
    S = np.linspace(0, 1, 201)
    f = mobilities_and_fractional_flow(S, rock(), FluidParams(1.0, 0.45)).f_w
    assert f[0] == 0.0 and f[-1] == 1.0
    assert np.all(np.diff(f) >= 0)


def test_capillary_min_vs_literal_max():
    S = np.array([0.0, 0.3, 0.99])
    pc, dpc = capillary_pressure(S, rock("homogeneous_reg"))
    assert np.all(pc > 0) and np.all(np.diff(pc) < 0)
    assert np.isclose(pc[0], -0.01 * np.log(1e-5))
    lit, dlit = capillary_pressure(S, rock("homogeneous_reg", literal_max=True))
    assert np.all(lit == 0.0) and np.all(dlit == 0.0)


def test_capillary_permeability_scaling():
    r = rock("heterogeneous_reg")
    pc1, _ = capillary_pressure(np.array([0.2]), r, k=1.0)
    pc4, _ = capillary_pressure(np.array([0.2]), r, k=4.0)
    assert np.isclose(pc1[0], 2 * pc4[0])
    with pytest.raises(ValueError):
        capillary_pressure(np.array([0.2]), r)


@pytest.mark.parametrize("model", ["bc_log", "heterogeneous_reg", "homogeneous_reg"])
def test_capillary_derivative(model):
    r = rock(model)
    S = np.array([0.05, 0.4, 0.9])
    _, d = capillary_pressure(S, r, k=0.5)
    h = 1e-7
    fd = (capillary_pressure(S + h, r, k=0.5)[0] - capillary_pressure(S - h, r, k=0.5)[0]) / (2 * h)
    assert np.allclose(d, fd, rtol=1e-5)


def test_bc_log_floor_is_finite():
    pc, dpc = capillary_pressure(np.array([0.0]), rock("bc_log"), k=1.0)
    assert np.isfinite(pc[0]) and dpc[0] == 0.0


def test_invalid_parameters():
    with pytest.raises(ConfigError):
        RockParams(np.array([-1.0]))
    with pytest.raises(ConfigError):
        RockParams(np.array([1.0]), porosity=0.0)
    with pytest.raises(ConfigError):
        RockParams(np.array([1.0]), S_rw=0.6, S_rn=0.5)
    with pytest.raises(ConfigError):
        RockParams(np.array([1.0]), capillary_model="van_genuchten")
    with pytest.raises(ConfigError):
        FluidParams(0.0, 1.0)


def test_models():
    tp = TwoPhaseModel(rock("heterogeneous_reg"), FluidParams(1.0, 0.45))
    assert tp.has_capillarity and not tp.linear
    phi, dphi = tp.capillary_potential(np.array([0.5]), 1.0)
    assert phi[0] > 0 and dphi[0] < 0
    tr = LinearTracerModel(np.ones(3))
    S = np.array([0.2, 0.7])
    f, df = tr.fractional_flow(S)
    assert np.array_equal(f, S) and np.all(df == 1) and np.all(tr.lambda_t(S) == 1)


def test_layered_field():
    mesh = generate_distorted_grid(20, 14, (0, 1.25, 0, 0.875))
    k = layered_permeability(mesh)
    band = np.floor(mesh.centers[:, 1] / 0.125).astype(int)
    assert set(np.unique(k)) == {0.5, 0.01}
    assert np.all(k[band == 0] == 0.5) and np.all(k[band == 1] == 0.01) and np.all(k[band == 6] == 0.5)


def test_random_field_seeded(tmp_path):
    mesh = generate_distorted_grid(10, 10)
    a = random_permeability(mesh, seed=3)
    assert np.array_equal(a, random_permeability(mesh, seed=3))
    assert not np.array_equal(a, random_permeability(mesh, seed=4))
    assert 1 / 100 <= a.min() and a.max() <= 1 / 2
    p = tmp_path / "k.csv"
    save_permeability_csv(a, p)
    assert np.array_equal(load_permeability_csv(p, mesh.n_cells), a)
