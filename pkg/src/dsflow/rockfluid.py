"""Two-phase constitutive closures: normalized saturation, relative
permeabilities, mobilities, fractional flow and capillary pressure.

Every closure clips its saturation input to [S_rw, 1 - S_rn]; stored DoF
vectors are never modified. Derivatives are taken with respect to S_w and
vanish where the input was clipped.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ConfigError, NonPositiveMobility, ZeroTotalMobility

CAPILLARY_MODELS = ("zero", "bc_log", "heterogeneous_reg", "homogeneous_reg")
REG_EPS = 1e-5
LOG_FLOOR = 1e-8


@dataclass(frozen=True)
class FluidParams:
    mu_w: float = 1.0
    mu_n: float = 1.0
    rho_w: float = 0.0
    rho_n: float = 0.0
    g: float = 0.0
    grad_z: tuple = (0.0, 1.0)

    def __post_init__(self):
        if self.mu_w <= 0.0 or self.mu_n <= 0.0:
            raise ConfigError("fluids.mu", "viscosities must be positive")


@dataclass(frozen=True)
class RockParams:
    """Rock description.

    ``permeability`` is a per-cell scalar k (K = k I). ``capillary_B`` is the
    coefficient of the log models (0.01 in the layered and random-field
    examples). ``literal_max`` evaluates the regularized log with
    ``max(1, S + 1e-5)`` instead of ``min``.
    """

    permeability: np.ndarray
    porosity: float = 1.0
    beta: float = 2.0
    S_rw: float = 0.0
    S_rn: float = 0.0
    capillary_model: str = "zero"
    capillary_B: float = 0.01
    literal_max: bool = False

    def __post_init__(self):
        k = np.asarray(self.permeability, dtype=float)
        object.__setattr__(self, "permeability", k)
        if np.any(k <= 0.0) or not np.all(np.isfinite(k)):
            raise ConfigError("rock.permeability", "permeability must be positive and finite")
        if not 0.0 < self.porosity <= 1.0:
            raise ConfigError("rock.porosity", "porosity must lie in (0, 1]")
        if self.S_rw < 0 or self.S_rn < 0 or self.S_rw + self.S_rn >= 1.0:
            raise ConfigError("rock.S_rw", "residual saturations must satisfy S_rw + S_rn < 1")
        if self.capillary_model not in CAPILLARY_MODELS:
            raise ConfigError("rock.capillary_model",
                              f"unknown capillary model {self.capillary_model!r}; "
                              f"choose from {', '.join(CAPILLARY_MODELS)}")


def normalized_saturation(S_w, rock):
    """``(S_e, dS_e/dS_w)`` with clipping to [0, 1]."""
    S_w = np.asarray(S_w, dtype=float)
    span = 1.0 - rock.S_rw - rock.S_rn
    raw = (S_w - rock.S_rw) / span
    inside = (raw > 0.0) & (raw < 1.0)
    return np.clip(raw, 0.0, 1.0), np.where(inside, 1.0 / span, 0.0)


def rel_perms(S_e, beta):
    """``(k_rw, k_rn, dk_rw/dS_e, dk_rn/dS_e)``."""
    S_e = np.asarray(S_e, dtype=float)
    krw = S_e**beta
    krn = (1.0 - S_e) ** beta
    dkrw = beta * S_e ** (beta - 1.0) if beta != 1 else np.ones_like(S_e)
    dkrn = -beta * (1.0 - S_e) ** (beta - 1.0) if beta != 1 else -np.ones_like(S_e)
    return krw, krn, dkrw, dkrn


@dataclass(frozen=True)
class Mobilities:
    lam_w: np.ndarray
    lam_n: np.ndarray
    lam_t: np.ndarray
    f_w: np.ndarray
    df_w: np.ndarray
    dlam_n: np.ndarray


def mobilities_and_fractional_flow(S_w, rock, fluids):
    S_e, dS = normalized_saturation(S_w, rock)
    krw, krn, dkrw, dkrn = rel_perms(S_e, rock.beta)
    lam_w = krw / fluids.mu_w
    lam_n = krn / fluids.mu_n
    lam_t = lam_w + lam_n
    if np.any(lam_t <= 0.0):
        raise ZeroTotalMobility("total mobility vanished; check beta and the closure")
    dlw = dkrw * dS / fluids.mu_w
    dln = dkrn * dS / fluids.mu_n
    f_w = lam_w / lam_t
    df_w = (dlw * lam_n - lam_w * dln) / lam_t**2
    return Mobilities(lam_w, lam_n, lam_t, f_w, df_w, dln)


def capillary_pressure(S_w, rock, k=None):
    """``(p_c, dp_c/dS_w)``; ``k`` broadcasts against ``S_w``."""
    S_w = np.asarray(S_w, dtype=float)
    model = rock.capillary_model
    if model == "zero":
        return np.zeros_like(S_w), np.zeros_like(S_w)
    S_e, dS = normalized_saturation(S_w, rock)
    B = rock.capillary_B
    if model != "homogeneous_reg":
        if k is None:
            raise ValueError("permeability needed for a permeability-scaled capillary model")
        B = B / np.sqrt(np.asarray(k, dtype=float))
    if model == "bc_log":
        arg = np.maximum(S_e, LOG_FLOOR)
        return -B * np.log(arg), np.where(S_e > LOG_FLOOR, -B * dS / arg, 0.0)
    shifted = S_e + REG_EPS
    if rock.literal_max:
        arg = np.maximum(1.0, shifted)
        active = shifted > 1.0
    else:
        arg = np.minimum(1.0, shifted)
        active = shifted < 1.0
    return -B * np.log(arg), np.where(active, -B * dS / arg, 0.0)


def capillary_potential(S_w, rock, fluids, z=0.0, k=None):
    """Phi_c = p_c + (rho_n - rho_w) g z."""
    pc, _ = capillary_pressure(S_w, rock, k)
    return pc + (fluids.rho_n - fluids.rho_w) * fluids.g * np.asarray(z, dtype=float)


def wetting_potential_bc(p_w, fluids, z=0.0):
    """Phi_w = p_w + rho_w g z."""
    return np.asarray(p_w, dtype=float) + fluids.rho_w * fluids.g * np.asarray(z, dtype=float)


class TwoPhaseModel:
    """Closure bundle consumed by the flow, capillary and transport solvers."""

    linear = False

    def __init__(self, rock, fluids):
        self.rock = rock
        self.fluids = fluids

    @property
    def porosity(self):
        return self.rock.porosity

    @property
    def permeability(self):
        return self.rock.permeability

    @property
    def has_capillarity(self):
        return self.rock.capillary_model != "zero"

    def mobilities(self, S):
        return mobilities_and_fractional_flow(S, self.rock, self.fluids)

    def lambda_t(self, S):
        lam = self.mobilities(S).lam_t
        if np.any(lam <= 0.0):
            raise NonPositiveMobility("total mobility must be positive")
        return lam

    def fractional_flow(self, S):
        m = self.mobilities(S)
        return m.f_w, m.df_w

    def capillary_potential(self, S, k, z=0.0):
        """Phi_c and dPhi_c/dS_w at saturations ``S`` with permeability ``k``."""
        pc, dpc = capillary_pressure(S, self.rock, k)
        return pc + (self.fluids.rho_n - self.fluids.rho_w) * self.fluids.g * z, dpc


class LinearTracerModel:
    """Tracer closures: lambda_t = 1, f_w(S) = S, no capillarity, no clipping."""

    linear = True
    has_capillarity = False

    def __init__(self, permeability, porosity=1.0):
        self.permeability = np.asarray(permeability, dtype=float)
        self.porosity = float(porosity)

    def lambda_t(self, S):
        return np.ones_like(np.asarray(S, dtype=float))

    def fractional_flow(self, S):
        S = np.asarray(S, dtype=float)
        return S.copy(), np.ones_like(S)

    def mobilities(self, S):
        S = np.asarray(S, dtype=float)
        one, zero = np.ones_like(S), np.zeros_like(S)
        return Mobilities(S.copy(), zero, one, S.copy(), one, zero)

    def capillary_potential(self, S, k, z=0.0):
        S = np.asarray(S, dtype=float)
        return np.zeros_like(S), np.zeros_like(S)


# ---------------------------------------------------------------------------
# permeability fields
# ---------------------------------------------------------------------------

def layered_permeability(mesh, n_layers=7, height=0.875, k_low_band=0.5, k_other=0.01):
    """Horizontal bands of equal height, alternating k; the bottom band gets ``k_low_band``."""
    band = np.floor(mesh.centers[:, 1] / (height / n_layers)).astype(int)
    band = np.clip(band, 0, n_layers - 1)
    return np.where(band % 2 == 0, k_low_band, k_other)


def random_permeability(mesh, seed=0, kinv_range=(2.0, 100.0), correlation=0.05, grid=128):
    """Seeded log-uniform field with k^-1 in ``kinv_range``.

    Gaussian noise on a ``grid`` x ``grid`` lattice over the mesh bounding box
    is smoothed with correlation length ``correlation``, rank-mapped to a
    uniform variable and sampled at the cell centers.
    """
    rng = np.random.default_rng(seed)
    noise = gaussian_filter(rng.standard_normal((grid, grid)), sigma=correlation * grid, mode="wrap")
    ranks = np.empty(noise.size)
    ranks[np.argsort(noise, axis=None)] = (np.arange(noise.size) + 0.5) / noise.size
    u = ranks.reshape(noise.shape)
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    ij = np.clip(((mesh.centers - lo) / (hi - lo) * grid).astype(int), 0, grid - 1)
    t = u[ij[:, 0], ij[:, 1]]
    a, b = np.log(kinv_range[0]), np.log(kinv_range[1])
    return 1.0 / np.exp(a + t * (b - a))


def save_permeability_csv(k, path):
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell_index", "k"])
        for i, v in enumerate(np.asarray(k, dtype=float)):
            writer.writerow([i, repr(float(v))])


def load_permeability_csv(path, n_cells=None):
    k = {}
    with open(Path(path), newline="", encoding="ascii") as fh:
        for row in csv.DictReader(fh):
            k[int(row["cell_index"])] = float(row["k"])
    n = n_cells if n_cells is not None else max(k) + 1
    if sorted(k) != list(range(n)):
        raise ConfigError("rock.permeability_file", "permeability CSV must list every cell exactly once")
    return np.array([k[i] for i in range(n)])
