import numpy as np
import pytest

from dsflow.errors import ConfigError, DsflowError, MissingBoundaryCondition, SolverFailure
from dsflow.impes import (DEFAULTS, PRESETS, SUBSTEPS, Simulation, SimulationConfig, interface_width,
                          level_crossing, load_config, parse_config_text, preset_config, resolve_key,
                          run, sample_saturation)
from dsflow.output import read_diagnostics, read_vtk_cell_scalar

SMALL = ["model=two_phase", "nx=6", "ny=5", "distortion=0.2", "bc.left=dirichlet 1", "bc.right=dirichlet 0",
         "bc.top=neumann 0", "bc.bottom=neumann 0", "capillary_model=heterogeneous_reg",
         "rock.permeability=layered", "mesh.domain=0,1.25,0,0.875", "porosity=0.2", "mu_n=0.45",
         "time.dt=0.002", "steps=6", "inflow.tags=left", "output.cadence=3"]


def small_config(*extra):
    return load_config(overrides=SMALL + list(extra))


def test_resolve_key():
    assert resolve_key("refinement") == "mesh.refinement"
    assert resolve_key("mesh.nx") == "mesh.nx"
    assert resolve_key("bc.anything") == "bc.anything"
    with pytest.raises(ConfigError):
        resolve_key("nonsense")


def test_parse_config_text():
    out = parse_config_text("# comment\nmesh.nx = 4  # trailing\n\nmodel=tracer\n")
    assert out == {"mesh.nx": "4", "model": "tracer"}
    with pytest.raises(ConfigError):
        parse_config_text("mesh.nx 4")


def test_config_layering(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("scenario = tracer_hole\nmesh.refinement = 2\ntime.steps = 7\n")
    cfg = load_config(p, overrides=["steps=3"])
    assert cfg["scenario"] == "tracer_hole"
    assert cfg["mesh.refinement"] == 2
    assert cfg["time.steps"] == 3
    assert cfg["transport.lambda_E"] == 0.5
    assert cfg.boundary_conditions["left"] == "dirichlet 1.5"
    with pytest.raises(ConfigError):
        load_config(overrides=["mesh.nx=four"])
    with pytest.raises(ConfigError):
        load_config(preset="no_such_preset")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


def test_presets_parameters():
    assert set(PRESETS) == {"tracer_hole", "layered_capillarity", "random_perm"}
    lay = preset_config("layered_capillarity")
    assert (lay["mesh.nx"], lay["mesh.ny"]) == (100, 70)
    assert lay["fluids.mu_n"] == 0.45 and lay["rock.porosity"] == 0.2 and lay["time.dt"] == 0.001
    rnd = preset_config("random_perm")
    assert rnd["transport.lambda_E"] == 1.5
    tr = preset_config("tracer_hole")
    assert tr["transport.lambda_max"] == 1.0 and tr["time.dt_factor"] == 0.1
    for name in PRESETS:
        for k in PRESETS[name]:
            assert k in DEFAULTS or k.startswith("bc.")


def test_random_perm_ports():
    cfg = preset_config("random_perm", nx=20, ny=20)
    sim = Simulation(cfg)
    inj = sim.mesh.edges_with_tag("injection")
    ext = sim.mesh.edges_with_tag("extraction")
    assert len(inj) == 1 and len(ext) == 1
    assert np.isclose(sim.mesh.edge_lengths[inj].sum(), 0.05)
    assert sim.S_B["injection"] == 1.0 and sim.S_B["left"] == 0.0


def test_bad_boundary_configuration():
    with pytest.raises(ConfigError):
        Simulation(small_config("bc.hole=neumann 0"))
    cfg = small_config()
    del cfg.values["bc.top"]
    with pytest.raises(MissingBoundaryCondition):
        Simulation(cfg)
    with pytest.raises(ConfigError):
        Simulation(small_config("bc.top=robin 1"))
    with pytest.raises(ConfigError):
        Simulation(small_config("inflow.tags=nowhere"))


def test_tracer_dt_from_mesh():
    sim = Simulation(preset_config("tracer_hole", refinement=2))
    assert np.isclose(sim.dt, 0.1 * sim.mesh.h_min)
    assert sim.mesh.n_cells == 128


def test_substep_order_and_data_flow():
    sim = Simulation(small_config(), trace=True)
    sim.run(steps=2)
    assert [t["substep"] for t in sim.trace] == list(SUBSTEPS) * 2
    cap, flow, visc, tr = sim.trace[4:8]
    assert cap["S"] == flow["S"] == visc["S"] == tr["S"]
    assert cap["u_c"] == flow["u_c"]
    assert flow["u_a"] == visc["u_a"] == tr["u_a"]
    assert visc["mu"] == tr["mu"]
    assert visc["S_prev"] == sim.trace[3]["S"]
    assert sim.trace[3]["S_new"] == tr["S"]


def test_conservation_every_step():
    sim = Simulation(small_config())
    rows = sim.run().rows
    assert len(rows) == 6
    assert max(r["cell_balance"] for r in rows) < 1e-9
    assert max(r["global_balance"] for r in rows) < 1e-9
    assert sim.capillary.factorizations == 1


def test_outputs(tmp_path):
    res = run(small_config(), out_dir=tmp_path)
    d = read_diagnostics(tmp_path / "diagnostics.csv")
    assert list(d["step"]) == [1, 2, 3, 4, 5, 6]
    assert [f.name for f in res.files] == ["fields_000000.vtk", "fields_000003.vtk", "fields_000006.vtk"]
    s = read_vtk_cell_scalar(res.files[-1], "S_w")
    assert np.allclose(s, res.simulation.cell_saturation())
    text = res.files[-1].read_text()
    for name in ("SCALARS mu_h", "SCALARS k", "VECTORS u_a", "VECTORS u_c", "POINT_DATA", "SCALARS Phi_w"):
        assert name in text


def test_determinism(tmp_path):
    run(small_config(), out_dir=tmp_path / "a")
    run(small_config(), out_dir=tmp_path / "b")
    a = (tmp_path / "a" / "diagnostics.csv").read_bytes()
    b = (tmp_path / "b" / "diagnostics.csv").read_bytes()
    assert a == b


def test_restart_matches_full_run(tmp_path):
    full = Simulation(small_config())
    full.run()
    half = Simulation(small_config())
    half.run(steps=3, out_dir=tmp_path)
    half.save_state(tmp_path / "state.npz")
    resumed = Simulation(small_config())
    resumed.load_state(tmp_path / "state.npz")
    resumed.run(out_dir=tmp_path, append=True)
    assert np.abs(resumed.state.S - full.state.S).max() <= 1e-12
    assert len(read_diagnostics(tmp_path / "diagnostics.csv")["step"]) == 6
    with pytest.raises(ConfigError):
        Simulation(small_config("transport.sigma=2")).load_state(tmp_path / "state.npz")


def test_error_context():
    sim = Simulation(small_config())

    def broken(*args, **kw):
        raise SolverFailure(1.0, "forced")

    sim.transport.step = broken
    with pytest.raises(DsflowError) as exc:
        sim.step()
    assert exc.value.step == 0 and exc.value.substep == "transport"
    assert "step 0, transport" in str(exc.value)


def test_front_metrics():
    x = np.linspace(0, 1, 11)
    s = 1 - x
    assert np.isclose(level_crossing(x, s, 0.5), 0.5)
    assert level_crossing(x, np.ones(11), 0.5) == np.inf
    sim = Simulation(preset_config("tracer_hole", refinement=2))
    S = sim.eg.interpolate(lambda p: np.clip(1.5 - 2 * p[:, 0], 0, 1))
    assert np.isclose(interface_width(sim, S=S), 0.4, atol=0.02)
    assert np.isnan(sample_saturation(sim, [[0.5, 0.5]])[0])
