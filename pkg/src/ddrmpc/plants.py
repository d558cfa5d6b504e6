"""Executable system models used to generate experiment data and simulate
closed loops: linear, polytopic, and Lur'e-type (linear + static
sector-bounded nonlinearity on a measured channel).

Nonlinearities are named built-ins (plus a tabulated form) so that plant
files are self-contained and datasets stay reproducible from config alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "LtiPlant",
    "PolytopicPlant",
    "LurePlant",
    "Nonlinearity",
    "SectorReport",
    "step_lti",
    "step_lure",
    "interpolate_vertices",
    "sector_check",
    "save_plant",
    "load_plant",
    "NONLINEARITIES",
]

WEIGHT_SUM_TOL = 1e-12


class PlantError(ValueError):
    pass


def _mat(a, rows=None, cols=None, name="matrix"):
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if rows is not None and m.shape[0] != rows:
        raise PlantError(f"{name}: expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise PlantError(f"{name}: expected {cols} cols, got {m.shape[1]}")
    if not np.all(np.isfinite(m)):
        raise PlantError(f"{name}: non-finite entries")
    return m


@dataclass(frozen=True)
class Nonlinearity:
    """Componentwise static map z -> gamma(z), identified by name so it can
    be persisted. Tabulated maps interpolate linearly between samples and
    clamp outside the table range."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    table: Optional[tuple] = None

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        out = np.asarray(self.fn(z), dtype=float)
        if out.shape != z.shape:
            raise PlantError(f"nonlinearity '{self.name}' changed shape {z.shape} -> {out.shape}")
        return out


def _tabulated(z_samples, g_samples) -> Nonlinearity:
    zs = np.asarray(z_samples, dtype=float)
    gs = np.asarray(g_samples, dtype=float)
    if zs.ndim != 1 or zs.shape != gs.shape or zs.size < 2:
        raise PlantError("tabulated nonlinearity needs two equal 1-d sample arrays")
    if np.any(np.diff(zs) <= 0):
        raise PlantError("tabulated z samples must be strictly increasing")
    return Nonlinearity("tabulated", lambda z: np.interp(z, zs, gs), table=(zs, gs))


NONLINEARITIES = {
    "sin_plus_id": Nonlinearity("sin_plus_id", lambda z: np.sin(z) + z),
    "saturation": Nonlinearity("saturation", lambda z: np.clip(z, -1.0, 1.0)),
    "zero": Nonlinearity("zero", lambda z: np.zeros_like(z)),
}


def get_nonlinearity(name: str, table=None) -> Nonlinearity:
    if name == "tabulated":
        if table is None:
            raise PlantError("tabulated nonlinearity requires a table")
        return _tabulated(*table)
    try:
        return NONLINEARITIES[name]
    except KeyError:
        raise PlantError(f"unknown nonlinearity '{name}' (known: {sorted(NONLINEARITIES)} + tabulated)")


@dataclass(frozen=True)
class LtiPlant:
    """x(k+1) = A x(k) + B u(k)."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = _mat(self.A, name="A")
        if A.shape[0] != A.shape[1]:
            raise PlantError(f"A must be square, got {A.shape}")
        B = _mat(self.B, rows=A.shape[0], name="B")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class PolytopicPlant:
    """Vertex pairs (A_j, B_j) spanning the uncertainty polytope; the mixing
    weights select the interpolated member used for simulation only."""

    vertices: tuple
    mixing_weights: np.ndarray

    def __init__(self, vertices: Sequence, mixing_weights=None):
        if not vertices:
            raise PlantError("need at least one vertex")
        vs = []
        n = m = None
        for j, (A, B) in enumerate(vertices):
            A = _mat(A, name=f"A_{j + 1}")
            B = _mat(B, name=f"B_{j + 1}")
            if n is None:
                n, m = A.shape[0], B.shape[1]
            if A.shape != (n, n) or B.shape != (n, m):
                raise PlantError(f"vertex {j + 1} shapes differ from vertex 1")
            vs.append((A, B))
        zeta = len(vs)
        if mixing_weights is None:
            lam = np.full(zeta, 1.0 / zeta)
        else:
            lam = np.asarray(mixing_weights, dtype=float).ravel()
        if lam.shape != (zeta,) or np.any(lam < 0):
            raise PlantError("mixing weights must be one nonnegative value per vertex")
        if abs(lam.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise PlantError(f"mixing weights sum to {lam.sum()!r}, expected 1")
        object.__setattr__(self, "vertices", tuple(vs))
        object.__setattr__(self, "mixing_weights", lam)

    @property
    def zeta(self) -> int:
        return len(self.vertices)

    @property
    def n(self) -> int:
        return self.vertices[0][0].shape[0]

    @property
    def m(self) -> int:
        return self.vertices[0][1].shape[1]


@dataclass(frozen=True)
class LurePlant:
    """x(k+1) = A x(k) + B u(k) + E gamma(H x(k)), with gamma confined to
    the sector [0, beta] componentwise."""

    A: np.ndarray
    B: np.ndarray
    E: np.ndarray
    H: np.ndarray
    gamma: Nonlinearity
    beta: np.ndarray

    def __post_init__(self):
        A = _mat(self.A, name="A")
        if A.shape[0] != A.shape[1]:
            raise PlantError(f"A must be square, got {A.shape}")
        n = A.shape[0]
        B = _mat(self.B, rows=n, name="B")
        E = _mat(self.E, rows=n, name="E")
        p = E.shape[1]
        H = _mat(self.H, rows=p, cols=n, name="H")
        beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        if beta.shape == (1, 1) and p > 1:
            beta = beta[0, 0] * np.eye(p)
        if beta.shape != (p, p):
            raise PlantError(f"beta must be {p}x{p}, got {beta.shape}")
        if np.any(beta < 0):
            raise PlantError("beta entries must be >= 0")
        for attr, val in (("A", A), ("B", B), ("E", E), ("H", H), ("beta", beta)):
            object.__setattr__(self, attr, val)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.E.shape[1]


@dataclass(frozen=True)
class SectorReport:
    """Sampled sector-bound test gamma(z) (beta z - gamma(z)) >= 0."""

    grid: np.ndarray
    products: np.ndarray
    min_product: float
    violating_z: Optional[float]

    @property
    def ok(self) -> bool:
        return self.violating_z is None


def step_lti(plant: LtiPlant, x, u) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    u = np.asarray(u, dtype=float).ravel()
    if x.shape != (plant.n,) or u.shape != (plant.m,):
        raise PlantError(f"state/input shape mismatch: x{x.shape} u{u.shape} for n={plant.n} m={plant.m}")
    return plant.A @ x + plant.B @ u


def step_lure(plant: LurePlant, x, u) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    u = np.asarray(u, dtype=float).ravel()
    if x.shape != (plant.n,) or u.shape != (plant.m,):
        raise PlantError(f"state/input shape mismatch: x{x.shape} u{u.shape} for n={plant.n} m={plant.m}")
    w = plant.gamma(plant.H @ x)
    return plant.A @ x + plant.B @ u + plant.E @ w


def interpolate_vertices(plant: PolytopicPlant, weights=None) -> LtiPlant:
    """Convex combination sum_j lambda_j (A_j, B_j) as a simulatable member."""
    lam = plant.mixing_weights if weights is None else np.asarray(weights, dtype=float).ravel()
    if lam.shape != (plant.zeta,) or np.any(lam < 0) or abs(lam.sum() - 1.0) > WEIGHT_SUM_TOL:
        raise PlantError("invalid mixing weights")
    A = sum(l * Aj for l, (Aj, _) in zip(lam, plant.vertices))
    B = sum(l * Bj for l, (_, Bj) in zip(lam, plant.vertices))
    return LtiPlant(A, B)


def sector_check(gamma: Nonlinearity, beta, grid=None) -> SectorReport:
    """Sampled necessary test of the sector bound on a scalar channel.

    This can only falsify: a clean report over the grid does not prove the
    bound holds off-grid. Default grid: 10^4 uniform points on [-10, 10].
    """
    if grid is None:
        grid = np.linspace(-10.0, 10.0, 10_000)
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size == 0:
        raise PlantError("sector grid must be nonempty")
    b = float(np.atleast_2d(np.asarray(beta, dtype=float))[0, 0])
    g = gamma(grid)
    products = g * (b * grid - g)
    imin = int(np.argmin(products))
    min_product = float(products[imin])
    violating = None
    bad = np.nonzero(products < 0)[0]
    if bad.size:
        violating = float(grid[bad[0]])
    return SectorReport(grid, products, min_product, violating)


# ---------------------------------------------------------------------------
# plant files: one JSON document per plant, matrices row-major

def _mat_to_json(m):
    m = np.atleast_2d(np.asarray(m, dtype=float))
    return {"rows": m.shape[0], "cols": m.shape[1], "data": m.ravel().tolist()}


def _mat_from_json(d, name="matrix"):
    m = np.asarray(d["data"], dtype=float).reshape(d["rows"], d["cols"])
    return _mat(m, name=name)


def plant_to_dict(plant) -> dict:
    if isinstance(plant, LtiPlant):
        return {"kind": "lti", "A": _mat_to_json(plant.A), "B": _mat_to_json(plant.B)}
    if isinstance(plant, PolytopicPlant):
        return {
            "kind": "polytopic",
            "vertices": [{"A": _mat_to_json(A), "B": _mat_to_json(B)} for A, B in plant.vertices],
            "mixing_weights": plant.mixing_weights.tolist(),
        }
    if isinstance(plant, LurePlant):
        d = {
            "kind": "lure",
            "A": _mat_to_json(plant.A),
            "B": _mat_to_json(plant.B),
            "E": _mat_to_json(plant.E),
            "H": _mat_to_json(plant.H),
            "beta": _mat_to_json(plant.beta),
            "nonlinearity": plant.gamma.name,
        }
        if plant.gamma.table is not None:
            zs, gs = plant.gamma.table
            d["table"] = {"z": zs.tolist(), "gamma": gs.tolist()}
        return d
    raise PlantError(f"unknown plant type {type(plant).__name__}")


def plant_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "lti":
        return LtiPlant(_mat_from_json(d["A"], "A"), _mat_from_json(d["B"], "B"))
    if kind == "polytopic":
        verts = [(_mat_from_json(v["A"], "A"), _mat_from_json(v["B"], "B")) for v in d["vertices"]]
        return PolytopicPlant(verts, d.get("mixing_weights"))
    if kind == "lure":
        table = None
        if "table" in d:
            table = (d["table"]["z"], d["table"]["gamma"])
        gamma = get_nonlinearity(d["nonlinearity"], table)
        return LurePlant(
            _mat_from_json(d["A"], "A"),
            _mat_from_json(d["B"], "B"),
            _mat_from_json(d["E"], "E"),
            _mat_from_json(d["H"], "H"),
            gamma,
            _mat_from_json(d["beta"], "beta"),
        )
    raise PlantError(f"plant file has unknown kind {kind!r}")


def save_plant(plant, path):
    with open(path, "w") as f:
        json.dump(plant_to_dict(plant), f, indent=1)


def load_plant(path):
    with open(path) as f:
        return plant_from_dict(json.load(f))
