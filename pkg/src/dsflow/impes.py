"""IMPES driver: configuration, scenario presets and the time loop.

Each step m runs, in this order,

1. the capillary flux u_c from S^m,
2. the flow solve for u_a with lambda_t(S^m) and the source B^T u_c,
3. the per-cell entropy viscosity from S^{m-1}, S^m and u_a,
4. the transport step to S^{m+1}.

Configuration is a flat ``key = value`` mapping. Layers apply in the order
defaults, preset, config file, command-line overrides. An override key
without its section prefix (``refinement``) resolves to the unique full key
ending in it (``mesh.refinement``).
"""

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .capillary import CapillarySolver
from .errors import ConfigError, DsflowError, IoError
from .flow import FlowSolver, dirichlet, neumann
from .mesh import generate_distorted_grid, load_tracer_mesh, read_mesh, retag
from .output import DiagnosticsWriter, write_vtk
from .quadrature import quadrature_rule
from .rockfluid import (FluidParams, LinearTracerModel, RockParams, TwoPhaseModel, layered_permeability,
                        load_permeability_csv, random_permeability)
from .serendipity import EGSpace
from .transport import S_FORMS, SaturationState, TransportParams, TransportSolver

SUBSTEPS = ("capillary", "flow", "viscosity", "transport")

DEFAULTS = {
    "scenario": "custom",
    "seed": 0,
    "mesh.kind": "grid",
    "mesh.file": "",
    "mesh.refinement": 2,
    "mesh.nx": 8,
    "mesh.ny": 8,
    "mesh.domain": "0,1,0,1",
    "mesh.distortion": 0.0,
    "mesh.ports": "",
    "elements.s": 1,
    "elements.variant": "full",
    "elements.r": 2,
    "model": "two_phase",
    "rock.permeability": "constant",
    "rock.k": 1.0,
    "rock.k_layers": "0.5,0.01",
    "rock.n_layers": 7,
    "rock.kinv_range": "2,100",
    "rock.correlation": 0.05,
    "rock.porosity": 1.0,
    "rock.beta": 2.0,
    "rock.S_rw": 0.0,
    "rock.S_rn": 0.0,
    "rock.capillary_model": "zero",
    "rock.capillary_B": 0.01,
    "rock.literal_max": False,
    "fluids.mu_w": 1.0,
    "fluids.mu_n": 1.0,
    "fluids.rho_w": 0.0,
    "fluids.rho_n": 0.0,
    "fluids.g": 0.0,
    "initial.S0": 0.0,
    "inflow.S_B": 1.0,
    "inflow.tags": "",
    "source.q_t": 0.0,
    "source.q_w": 0.0,
    "time.dt": 0.0,
    "time.dt_factor": 0.1,
    "time.steps": 10,
    "time.t_final": 0.0,
    "transport.sigma": 1.0,
    "transport.s_form": "nipg",
    "transport.lambda_max": 0.2,
    "transport.lambda_E": 1.0,
    "transport.residual_derivative": "df",
    "output.dir": "",
    "output.cadence": 10,
    "output.snapshots": "",
    "output.vtk": True,
    "output.outlet": "right",
}

# boundary conditions live under "bc.<tag>" with values "dirichlet <v>" or "neumann <v>"
BC_PREFIX = "bc."

PRESETS = {
    "tracer_hole": {
        "scenario": "tracer_hole",
        "mesh.kind": "tracer_hole",
        "mesh.refinement": 5,
        "model": "tracer",
        "elements.s": 1,
        "elements.r": 2,
        "rock.permeability": "constant",
        "rock.k": 1.0,
        "rock.porosity": 1.0,
        "bc.left": "dirichlet 1.5",
        "bc.right": "dirichlet 0.5",
        "bc.top": "neumann 0",
        "bc.bottom": "neumann 0",
        "bc.hole": "neumann 0",
        "initial.S0": 0.0,
        "inflow.S_B": 1.0,
        "time.dt": 0.0,
        "time.dt_factor": 0.1,
        "time.steps": 1000,
        "transport.lambda_max": 1.0,
        "transport.lambda_E": 0.5,
        "output.snapshots": "200,500,800,1000",
        "output.outlet": "right",
    },
    "layered_capillarity": {
        "scenario": "layered_capillarity",
        "mesh.kind": "grid",
        "mesh.nx": 100,
        "mesh.ny": 70,
        "mesh.domain": "0,1.25,0,0.875",
        "mesh.distortion": 0.2,
        "model": "two_phase",
        "elements.s": 1,
        "elements.r": 2,
        "rock.permeability": "layered",
        "rock.k_layers": "0.5,0.01",
        "rock.n_layers": 7,
        "rock.porosity": 0.2,
        "rock.beta": 2.0,
        "rock.S_rw": 0.0,
        "rock.S_rn": 0.0,
        "rock.capillary_model": "heterogeneous_reg",
        "rock.capillary_B": 0.01,
        "fluids.mu_w": 1.0,
        "fluids.mu_n": 0.45,
        "bc.left": "dirichlet 1",
        "bc.right": "dirichlet 0",
        "bc.top": "neumann 0",
        "bc.bottom": "neumann 0",
        "initial.S0": 0.0,
        "inflow.S_B": 1.0,
        "inflow.tags": "left",
        "time.dt": 0.001,
        "time.steps": 375,
        "transport.sigma": 1.0,
        "transport.s_form": "nipg",
        "transport.lambda_max": 0.2,
        "transport.lambda_E": 1.0,
        "output.snapshots": "50,125,250,375",
        "output.outlet": "right",
    },
    "random_perm": {
        "scenario": "random_perm",
        "mesh.kind": "grid",
        "mesh.nx": 100,
        "mesh.ny": 100,
        "mesh.domain": "0,1,0,1",
        "mesh.distortion": 0.2,
        "mesh.ports": "injection=left:0,0.05;extraction=right:0.95,1",
        "model": "two_phase",
        "elements.s": 1,
        "elements.r": 2,
        "rock.permeability": "random",
        "rock.kinv_range": "2,100",
        "rock.porosity": 0.2,
        "rock.beta": 2.0,
        "rock.capillary_model": "heterogeneous_reg",
        "rock.capillary_B": 0.01,
        "fluids.mu_w": 1.0,
        "fluids.mu_n": 0.45,
        "bc.injection": "dirichlet 1",
        "bc.extraction": "dirichlet 0",
        "bc.left": "neumann 0",
        "bc.right": "neumann 0",
        "bc.top": "neumann 0",
        "bc.bottom": "neumann 0",
        "initial.S0": 0.0,
        "inflow.S_B": 1.0,
        "inflow.tags": "injection",
        "time.dt": 0.001,
        "time.steps": 2000,
        "transport.sigma": 1.0,
        "transport.s_form": "nipg",
        "transport.lambda_max": 0.2,
        "transport.lambda_E": 1.5,
        "output.snapshots": "1000,2000",
        "output.outlet": "extraction",
    },
}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _coerce(key, default, raw):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r} for {key} ({type(default).__name__} expected)") from None
    return text


def resolve_key(key, known=DEFAULTS):
    """Full key for ``key``, accepting a unique dotted suffix."""
    if key in known or key.startswith(BC_PREFIX):
        return key
    hits = [k for k in known if k.endswith("." + key)]
    if len(hits) == 1:
        return hits[0]
    if hits:
        raise ConfigError(key, f"ambiguous key {key!r}: matches {', '.join(sorted(hits))}")
    raise ConfigError(key, f"unknown configuration key {key!r}")


def parse_config_text(text):
    """Parse ``key = value`` lines; '#' starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"line {lineno}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


@dataclass
class SimulationConfig:
    """Flat configuration; ``values`` maps full keys to typed values."""

    values: dict = field(default_factory=lambda: dict(DEFAULTS))

    def __getitem__(self, key):
        return self.values[resolve_key(key, self.values)]

    def get(self, key, default=None):
        try:
            return self[key]
        except (KeyError, ConfigError):
            return default

    def set(self, key, raw):
        full = resolve_key(key)
        if full.startswith(BC_PREFIX):
            self.values[full] = str(raw).strip()
        else:
            self.values[full] = _coerce(full, DEFAULTS[full], raw)

    def update(self, mapping):
        # the scenario entry pulls in its preset before the remaining keys
        mapping = dict(mapping)
        name = mapping.pop("scenario", None) or mapping.pop("preset", None)
        if name is not None:
            self.apply_preset(name)
        for k, v in mapping.items():
            self.set(k, v)
        return self

    def apply_preset(self, name):
        if name not in PRESETS:
            raise ConfigError("scenario", f"unknown preset {name!r}; valid presets: {', '.join(sorted(PRESETS))}")
        for k, v in PRESETS[name].items():
            self.set(k, v)
        return self

    @property
    def boundary_conditions(self):
        return {k[len(BC_PREFIX):]: v for k, v in self.values.items() if k.startswith(BC_PREFIX)}

    def lines(self):
        return [f"{k} = {self.values[k]}" for k in sorted(self.values)]

    def fingerprint(self):
        # run length and output settings may change across a restart
        keep = [ln for ln in self.lines() if not ln.startswith(("time.steps ", "output."))]
        return hashlib.sha1("\n".join(keep).encode()).hexdigest()


def load_config(path=None, preset=None, overrides=()):
    """Defaults, then ``preset``, then the file at ``path``, then ``overrides`` ("key=value")."""
    cfg = SimulationConfig()
    file_values = {}
    if path is not None:
        try:
            file_values = parse_config_text(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError("config", f"cannot read config file {path}: {exc}") from None
    file_preset = file_values.pop("scenario", None) or file_values.pop("preset", None)
    name = preset or file_preset
    if name:
        cfg.apply_preset(name)
    cfg.update(file_values)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, f"override {item!r} must look like key=value")
        k, v = item.split("=", 1)
        cfg.set(k.strip(), v.strip())
    return cfg


def preset_config(name, **overrides):
    cfg = SimulationConfig().apply_preset(name)
    for k, v in overrides.items():
        cfg.set(k, v)
    return cfg


def _floats(text, key, n=None):
    try:
        vals = [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise ConfigError(key, f"{key} must be a comma separated list of numbers") from None
    if n is not None and len(vals) != n:
        raise ConfigError(key, f"{key} needs {n} numbers")
    return vals


def _parse_bc(tag, text):
    parts = str(text).replace(":", " ").split()
    if not parts or parts[0] not in ("dirichlet", "neumann"):
        raise ConfigError(BC_PREFIX + tag, f"boundary condition for {tag!r} must be 'dirichlet <v>' or 'neumann <v>'")
    try:
        value = float(parts[1]) if len(parts) > 1 else 0.0
    except ValueError:
        raise ConfigError(BC_PREFIX + tag, f"bad boundary value {parts[1]!r}") from None
    return dirichlet(value) if parts[0] == "dirichlet" else neumann(value)


# ---------------------------------------------------------------------------
# building blocks from a config
# ---------------------------------------------------------------------------

def _port_tagger(ports, domain):
    """Tag boundary sub-intervals: 'name=side:a,b;...'."""
    x0, x1, y0, y1 = domain
    tol = 1e-10 * max(x1 - x0, y1 - y0)
    specs = []
    for item in filter(None, (p.strip() for p in ports.split(";"))):
        try:
            name, rest = item.split("=")
            side, rng = rest.split(":")
            a, b = (float(t) for t in rng.split(","))
        except ValueError:
            raise ConfigError("mesh.ports", f"bad port {item!r}; use name=side:a,b") from None
        if side not in ("left", "right", "bottom", "top"):
            raise ConfigError("mesh.ports", f"unknown side {side!r}")
        specs.append((name.strip(), side, a, b))

    def tag(mid, old):
        for name, side, a, b in specs:
            if old != side:
                continue
            t = mid[1] if side in ("left", "right") else mid[0]
            if a - tol <= t <= b + tol:
                return name
        return old

    return tag


def build_mesh_from_config(cfg):
    kind = cfg["mesh.kind"]
    if kind == "tracer_hole":
        try:
            return load_tracer_mesh(cfg["mesh.refinement"])
        except FileNotFoundError as exc:
            raise ConfigError("mesh.refinement", str(exc)) from None
    if kind == "file":
        if not cfg["mesh.file"]:
            raise ConfigError("mesh.file", "mesh.kind = file needs mesh.file")
        return read_mesh(cfg["mesh.file"])
    if kind != "grid":
        raise ConfigError("mesh.kind", f"unknown mesh kind {kind!r}; use grid, tracer_hole or file")
    domain = _floats(cfg["mesh.domain"], "mesh.domain", 4)
    mesh = generate_distorted_grid(cfg["mesh.nx"], cfg["mesh.ny"], domain, cfg["mesh.distortion"],
                                   rng_seed=cfg["seed"])
    if cfg["mesh.ports"]:
        mesh = retag(mesh, _port_tagger(cfg["mesh.ports"], domain))
    return mesh


def build_permeability(cfg, mesh):
    kind = cfg["rock.permeability"]
    if kind == "constant":
        return np.full(mesh.n_cells, cfg["rock.k"])
    if kind == "layered":
        hi, lo = _floats(cfg["rock.k_layers"], "rock.k_layers", 2)
        ymax = float(mesh.vertices[:, 1].max())
        return layered_permeability(mesh, cfg["rock.n_layers"], ymax, hi, lo)
    if kind == "random":
        rng = _floats(cfg["rock.kinv_range"], "rock.kinv_range", 2)
        return random_permeability(mesh, cfg["seed"], tuple(rng), cfg["rock.correlation"])
    return load_permeability_csv(kind, mesh.n_cells)


def build_model(cfg, permeability):
    if cfg["model"] == "tracer":
        return LinearTracerModel(permeability, cfg["rock.porosity"])
    if cfg["model"] != "two_phase":
        raise ConfigError("model", f"unknown model {cfg['model']!r}; use tracer or two_phase")
    rock = RockParams(permeability, cfg["rock.porosity"], cfg["rock.beta"], cfg["rock.S_rw"], cfg["rock.S_rn"],
                      cfg["rock.capillary_model"], cfg["rock.capillary_B"], cfg["rock.literal_max"])
    fluids = FluidParams(cfg["fluids.mu_w"], cfg["fluids.mu_n"], cfg["fluids.rho_w"], cfg["fluids.rho_n"],
                         cfg["fluids.g"])
    return TwoPhaseModel(rock, fluids)


def build_transport_params(cfg):
    form = cfg["transport.s_form"]
    s_form = S_FORMS.get(str(form).lower())
    if s_form is None:
        try:
            s_form = int(form)
        except ValueError:
            raise ConfigError("transport.s_form", "s_form must be nipg, iipg, sipg or -1/0/1") from None
    return TransportParams(cfg["transport.sigma"], s_form, cfg["transport.lambda_max"], cfg["transport.lambda_E"],
                           cfg["transport.residual_derivative"])


def _digest(a):
    return hashlib.sha1(np.ascontiguousarray(a, dtype=float).tobytes()).hexdigest()[:16]


def _with_context(exc, step, substep):
    exc.step, exc.substep = step, substep
    head = exc.args[0] if exc.args else ""
    exc.args = (f"step {step}, {substep}: {head}",) + tuple(exc.args[1:])
    return exc


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

@dataclass
class StepRecord:
    """Fields produced by one IMPES step, kept for output and inspection."""

    flux: object
    flow: object
    mu: np.ndarray
    mu_max: np.ndarray
    mu_tilde: np.ndarray
    diagnostics: dict


class Simulation:
    """State machine over the four IMPES substeps.

    Parameters
    ----------
    config : SimulationConfig
    trace : bool
        Record the substep order and checksums of the arrays each substep
        consumed and produced in ``self.trace``.
    """

    def __init__(self, config, trace=False):
        self.config = config
        cfg = config
        self.mesh = build_mesh_from_config(cfg)
        mesh = self.mesh
        bcs = {tag: _parse_bc(tag, v) for tag, v in cfg.boundary_conditions.items()}
        unknown = sorted(set(bcs) - set(mesh.boundary_tags))
        if unknown:
            raise ConfigError(BC_PREFIX + unknown[0], f"boundary tag {unknown[0]!r} does not exist in the mesh "
                              f"(tags: {', '.join(mesh.boundary_tags)})")
        self.bcs = bcs
        self.permeability = build_permeability(cfg, mesh)
        self.model = build_model(cfg, self.permeability)
        s, variant, r = cfg["elements.s"], cfg["elements.variant"], cfg["elements.r"]
        self.flow = FlowSolver(mesh, bcs, s, variant, self.permeability)
        self.eg = EGSpace(mesh, r)
        self.transport = TransportSolver(self.eg, self.flow.space, self.model, build_transport_params(cfg))
        self.capillary = (CapillarySolver(mesh, self.model, s, variant, self.eg)
                          if self.model.has_capillarity else None)
        self._flow_vals, _ = self.eg.tabulate(self.flow.disc.rule.points)

        dt = cfg["time.dt"] if cfg["time.dt"] > 0 else cfg["time.dt_factor"] * mesh.h_min
        if not dt > 0:
            raise ConfigError("time.dt", "time step must be positive")
        self.dt = float(dt)
        if cfg["time.t_final"] > 0:
            self.n_steps = int(math.ceil(cfg["time.t_final"] / self.dt - 1e-9))
        else:
            self.n_steps = int(cfg["time.steps"])
        if self.n_steps < 0:
            raise ConfigError("time.steps", "number of steps must be non-negative")
        self.q_t = cfg["source.q_t"] or None
        self.q_w = cfg["source.q_w"] or None
        # S_B enters through the injection tags; backflow elsewhere brings resident fluid
        inflow_tags = [t.strip() for t in cfg["inflow.tags"].split(",") if t.strip()]
        for t in inflow_tags:
            if t not in mesh.boundary_tags:
                raise ConfigError("inflow.tags", f"inflow tag {t!r} does not exist in the mesh")
        if inflow_tags:
            self.S_B = {t: (cfg["inflow.S_B"] if t in inflow_tags else cfg["initial.S0"])
                        for t in mesh.boundary_tags}
        else:
            self.S_B = cfg["inflow.S_B"]
        outlet = [t.strip() for t in cfg["output.outlet"].split(",") if t.strip()]
        self.outlet_edges = np.concatenate([mesh.edges_with_tag(t) for t in outlet]) if outlet else np.zeros(0, int)

        self.state = self.transport.initial_state(cfg["initial.S0"])
        self.trace = [] if trace else None
        self.last = None
        self._flow_cache = None

    # ----------------------------------------------------------------- substeps

    def _record(self, step, substep, **arrays):
        if self.trace is not None:
            self.trace.append({"step": step, "substep": substep,
                               **{k: _digest(v) for k, v in arrays.items()}})

    def _lambda_t(self, S):
        if self.model.linear:
            return 1.0
        c = self.transport.coefficients(S)
        return self.model.lambda_t(np.einsum("cqk,ck->cq", self._flow_vals, c))

    def capillary_substep(self, state):
        if self.capillary is None:
            flux = None
        else:
            flux = self.capillary.solve_from_dofs(state.S)
        self._record(state.step, "capillary", S=state.S,
                     u_c=flux.u if flux is not None else np.zeros(0))
        return flux

    def flow_substep(self, state, flux):
        source = flux.source if flux is not None else None
        frozen = self.model.linear and flux is None
        if frozen and self._flow_cache is not None:
            sol = self._flow_cache
        else:
            sol = self.flow.run(self._lambda_t(state.S), self.q_t, source)
            if frozen:
                self._flow_cache = sol
        self._record(state.step, "flow", S=state.S,
                     u_c=flux.u if flux is not None else np.zeros(0), u_a=sol.u)
        return sol

    def viscosity_substep(self, state, sol):
        mu, mmax, mt = self.transport.entropy_viscosity(state.S, state.S_prev, sol.u, self.dt)
        self._record(state.step, "viscosity", S_prev=state.S_prev, S=state.S, u_a=sol.u, mu=mu)
        return mu, mmax, mt

    def transport_substep(self, state, sol, mu):
        new = self.transport.step(state, sol.u, self.dt, self.S_B, self.q_w, mu)
        self._record(state.step, "transport", S=state.S, u_a=sol.u, mu=mu, S_new=new.S)
        return new

    # --------------------------------------------------------------------- loop

    def step(self):
        state = self.state
        m = state.step
        stage = "capillary"
        try:
            flux = self.capillary_substep(state)
            stage = "flow"
            sol = self.flow_substep(state, flux)
            stage = "viscosity"
            mu, mmax, mt = self.viscosity_substep(state, sol)
            stage = "transport"
            new = self.transport_substep(state, sol, mu)
        except DsflowError as exc:
            raise _with_context(exc, m, stage)
        diag = self.diagnostics(new, state, sol, mu, mmax, mt)
        self.state = new
        self.last = StepRecord(flux, sol, mu, mmax, mt, diag)
        return diag

    def diagnostics(self, new, old, sol, mu, mmax, mt):
        ts = self.transport
        s, _ = ts.values(new.S)
        resid, scale = ts.cell_balance(new.S, old.S, sol.u, mu, self.dt, self.S_B, self.q_w)
        cell = float(np.max(np.where(scale > 0, np.abs(resid) / np.where(scale > 0, scale, 1.0), 0.0)))
        gres, gscale = ts.global_balance(new.S, old.S, self.dt, ts.last_boundary_flux, self.q_w)
        return {
            "step": new.step,
            "time": new.t,
            "S_min": float(s.min()),
            "S_max": float(s.max()),
            "mass": ts.total_mass(new.S),
            "cell_balance": cell,
            "global_balance": abs(gres) / gscale,
            "mu_h_max": float(mu.max()) if mu.size else 0.0,
            "n_entropy_limited": int(np.count_nonzero(mt < mmax)),
            "outflow_S": ts.boundary_average(new.S, self.outlet_edges) if len(self.outlet_edges) else 0.0,
        }

    def snapshot_steps(self):
        cadence = self.config["output.cadence"]
        steps = set(range(0, self.n_steps + 1, cadence)) if cadence > 0 else {0}
        extra = [int(v) for v in _floats(self.config["output.snapshots"], "output.snapshots")]
        steps.update(v for v in extra if 0 <= v <= self.n_steps)
        return sorted(steps)

    def run(self, steps=None, out_dir=None, append=False, callback=None):
        """Advance ``steps`` steps (default: to the configured end) and write outputs."""
        target = self.n_steps if steps is None else self.state.step + int(steps)
        out_dir = out_dir if out_dir is not None else (self.config["output.dir"] or None)
        rows = []
        writer = None
        snaps = set(self.snapshot_steps())
        files = []
        if out_dir is not None:
            out = Path(out_dir)
            try:
                out.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise IoError(f"cannot create output directory {out}: {exc}") from None
            writer = DiagnosticsWriter(out / "diagnostics.csv", append=append)
            if self.config["output.vtk"] and self.state.step in snaps and not append:
                files.append(self.write_fields(out / f"fields_{self.state.step:06d}.vtk"))
        try:
            while self.state.step < target:
                diag = self.step()
                rows.append(diag)
                if writer is not None:
                    writer.write(diag)
                    if self.config["output.vtk"] and self.state.step in snaps:
                        files.append(self.write_fields(out / f"fields_{self.state.step:06d}.vtk"))
                if callback is not None:
                    callback(self, diag)
        finally:
            if writer is not None:
                writer.close()
        return RunResult(self, rows, files)

    # ------------------------------------------------------------------ output

    def cell_saturation(self, S=None):
        S = self.state.S if S is None else S
        return self.eg.cell_averages(S, quadrature_rule(2 * self.eg.r + 2))

    def field_arrays(self):
        """Cell and point arrays written to VTK snapshots."""
        mesh = self.mesh
        centre = np.zeros((1, 2))
        vals, _ = self.flow.space.tabulate(centre)
        if self.last is not None:
            sol, flux, mu = self.last.flow, self.last.flux, self.last.mu
        else:
            sol = self.flow.run(self._lambda_t(self.state.S), self.q_t, None)
            flux, mu = None, np.zeros(mesh.n_cells)
        u_a = np.einsum("cqmd,cm->cqd", vals, sol.u)[:, 0]
        u_c = np.einsum("cqmd,cm->cqd", vals, flux.u)[:, 0] if flux is not None else np.zeros_like(u_a)
        # potential at the vertices, averaged over the adjacent cells
        corners = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
        pv, _ = self.flow.space.tabulate_pressure(corners)
        pc = np.einsum("cvm,cm->cv", pv, sol.p)
        acc = np.bincount(mesh.cells.ravel(), weights=pc.ravel(), minlength=mesh.n_vertices)
        cnt = np.bincount(mesh.cells.ravel(), minlength=mesh.n_vertices)
        return ({"S_w": self.cell_saturation(), "mu_h": mu, "k": self.permeability},
                {"Phi_w": acc / np.maximum(cnt, 1)},
                {"u_a": u_a, "u_c": u_c})

    def write_fields(self, path):
        cells, points, vectors = self.field_arrays()
        try:
            write_vtk(path, self.mesh, cells, points, vectors, title=f"dsflow step {self.state.step}")
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from None
        return Path(path)

    # ----------------------------------------------------------------- restart

    def save_state(self, path):
        st = self.state
        np.savez(path, S=st.S, S_prev=st.S_prev, mu=st.mu, t=st.t, step=st.step,
                 fingerprint=self.config.fingerprint())

    def load_state(self, path):
        with np.load(path, allow_pickle=False) as data:
            if str(data["fingerprint"]) != self.config.fingerprint():
                raise ConfigError("restart", "restart file was written with a different configuration")
            S = data["S"]
            if S.shape != (self.eg.ndof,):
                raise ConfigError("restart", "restart file does not match the discretization")
            self.state = SaturationState(S.copy(), data["S_prev"].copy(), data["mu"].copy(),
                                         float(data["t"]), int(data["step"]))
        self.last = None
        return self.state


@dataclass
class RunResult:
    simulation: Simulation
    rows: list
    files: list

    @property
    def state(self):
        return self.simulation.state


def run(config, out_dir=None, steps=None, restart=None, trace=False):
    """Build a simulation from ``config`` and run it; returns ``RunResult``."""
    sim = Simulation(config, trace=trace)
    if restart is not None:
        sim.load_state(restart)
    return sim.run(steps=steps, out_dir=out_dir, append=restart is not None)


def write_fields(simulation, path):
    return simulation.write_fields(path)


# ---------------------------------------------------------------------------
# front metrics
# ---------------------------------------------------------------------------

def sample_saturation(sim, points, S=None):
    """EG saturation at physical points (NaN outside the mesh)."""
    S = sim.state.S if S is None else S
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    cells = sim.mesh.locate(pts)
    out = np.full(len(pts), np.nan)
    coef = sim.transport.coefficients(S)
    for c in np.unique(cells[cells >= 0]):
        idx = np.flatnonzero(cells == c)
        ref = sim.mesh.to_reference(c, pts[idx])
        vals, _ = sim.eg.tabulate(ref[None], cells=np.array([c]))
        out[idx] = vals[0] @ coef[c]
    return out


def level_crossing(x, s, level):
    """First x at which the profile ``s`` drops below ``level`` (linear interpolation)."""
    below = np.flatnonzero(s < level)
    if len(below) == 0:
        return np.inf
    i = below[0]
    if i == 0:
        return float(x[0])
    return float(x[i - 1] + (s[i - 1] - level) / (s[i - 1] - s[i]) * (x[i] - x[i - 1]))


def interface_width(sim, y=0.5, x_range=(0.0, 1.0), n=2001, S=None, low=0.1, high=0.9):
    """Distance between the ``high`` and ``low`` level sets along a horizontal line."""
    x = np.linspace(x_range[0], x_range[1], n)
    s = sample_saturation(sim, np.column_stack([x, np.full(n, y)]), S)
    keep = np.isfinite(s)
    x, s = x[keep], s[keep]
    return level_crossing(x, s, low) - level_crossing(x, s, high)


def front_width(sim, S=None, low=0.1, high=0.9):
    """Area of the cells with low < mean S < high divided by the domain height."""
    sbar = sim.cell_saturation(S)
    band = (sbar > low) & (sbar < high)
    height = float(np.ptp(sim.mesh.vertices[:, 1]))
    return float(sim.mesh.areas[band].sum() / height)
