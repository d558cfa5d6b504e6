"""Open-loop experiments and the data matrices built from them, plus
informativity diagnostics: the stacked regressor, its numerical rank, and
the set of systems consistent with the recorded data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .plants import LurePlant, PolytopicPlant, interpolate_vertices

__all__ = [
    "Dataset",
    "ShiftedData",
    "ConsistentSet",
    "ExperimentOverflow",
    "uniform_inputs",
    "run_experiment",
    "shift_split",
    "consistency_residual",
    "regressor",
    "regressor_rank",
    "consistent_set",
    "save_dataset",
    "load_dataset",
    "export_trace",
]

OVERFLOW_LIMIT = 1e12
CONSISTENCY_TOL = 1e-6


class DataError(ValueError):
    pass


class ExperimentOverflow(RuntimeError):
    """Open-loop run diverged; carries the step at which it happened."""

    def __init__(self, step: int, value: float):
        self.step = step
        self.value = value
        super().__init__(f"state norm {value:.3e} exceeded {OVERFLOW_LIMIT:.0e} at step {step}")


@dataclass(frozen=True)
class Dataset:
    """One recorded experiment: inputs U_minus (m x T), states X (n x (T+1)),
    and for Lur'e runs the measured nonlinearity channel W_minus (p x T)."""

    U_minus: np.ndarray
    X: np.ndarray
    W_minus: Optional[np.ndarray] = None
    seed: Optional[int] = None
    provenance: str = ""

    def __post_init__(self):
        U = np.atleast_2d(np.asarray(self.U_minus, dtype=float))
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if X.shape[1] != U.shape[1] + 1:
            raise DataError(f"X has {X.shape[1]} columns, expected T+1={U.shape[1] + 1}")
        if U.shape[1] < 1:
            raise DataError("experiment length T must be >= 1")
        W = self.W_minus
        if W is not None:
            W = np.atleast_2d(np.asarray(W, dtype=float))
            if W.shape[1] != U.shape[1]:
                raise DataError(f"W_minus has {W.shape[1]} columns, expected T={U.shape[1]}")
        object.__setattr__(self, "U_minus", U)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "W_minus", W)

    @property
    def T(self) -> int:
        return self.U_minus.shape[1]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.U_minus.shape[0]

    @property
    def p(self) -> int:
        return 0 if self.W_minus is None else self.W_minus.shape[0]


@dataclass(frozen=True)
class ShiftedData:
    X_minus: np.ndarray
    X_plus: np.ndarray


@dataclass(frozen=True)
class ConsistentSet:
    """All systems that reproduce the data exactly: the least-norm solution
    plus any row-space perturbation annihilated by the regressor.

    Members are [A B] (or [A B E]) = particular + C @ nullbasis.T for any
    coefficient matrix C (n x nullity)."""

    particular: np.ndarray
    nullbasis: np.ndarray  # (n+m(+p)) x nullity, orthonormal columns, Z^T v = 0
    regressor_rank: int
    n: int
    m: int
    p: int

    @property
    def unique(self) -> bool:
        return self.nullbasis.shape[1] == 0

    def split(self, member=None):
        """Split a member matrix into (A, B) or (A, B, E)."""
        M = self.particular if member is None else member
        A = M[:, : self.n]
        B = M[:, self.n: self.n + self.m]
        if self.p:
            return A, B, M[:, self.n + self.m:]
        return A, B

    def sample_members(self, count: int, seed: int = 0, scale: float = 1.0):
        """Draw consistent members; deterministic for a fixed seed."""
        rng = np.random.default_rng(seed)
        out = []
        for _ in range(count):
            if self.unique:
                out.append(self.particular.copy())
                continue
            C = rng.normal(scale=scale, size=(self.n, self.nullbasis.shape[1]))
            out.append(self.particular + C @ self.nullbasis.T)
        return out


def uniform_inputs(m: int, T: int, box, seed: int) -> np.ndarray:
    """Seeded i.i.d. uniform excitation over the input box.

    ``box`` is either a scalar amplitude a (box [-a, a] on every channel) or
    a sequence of (lo, hi) pairs, one per channel.
    """
    rng = np.random.default_rng(seed)
    if np.isscalar(box):
        lo = -float(box) * np.ones(m)
        hi = float(box) * np.ones(m)
    else:
        pairs = np.asarray(box, dtype=float).reshape(m, 2)
        lo, hi = pairs[:, 0], pairs[:, 1]
    if np.any(hi <= lo):
        raise DataError("input box must have hi > lo on every channel")
    return rng.uniform(lo[:, None], hi[:, None], size=(m, T))


def run_experiment(plant, x0, inputs, record_w: bool = False, seed=None, provenance: str = "") -> Dataset:
    """Drive the plant open loop from x0 with the given input columns.

    Polytopic plants are stepped at their mixing-weight interpolation.
    W_minus is recorded only when requested on a Lur'e plant.
    """
    U = np.atleast_2d(np.asarray(inputs, dtype=float))
    if not np.all(np.isfinite(U)):
        raise DataError("inputs must be finite")
    if isinstance(plant, PolytopicPlant):
        plant = interpolate_vertices(plant)
    lure = isinstance(plant, LurePlant)
    record_w = record_w and lure
    n, m = plant.n, plant.m
    if U.shape[0] != m:
        raise DataError(f"inputs have {U.shape[0]} rows, plant expects m={m}")
    T = U.shape[1]
    x = np.asarray(x0, dtype=float).ravel()
    if x.shape != (n,):
        raise DataError(f"x0 has shape {x.shape}, expected ({n},)")
    X = np.zeros((n, T + 1))
    X[:, 0] = x
    W = np.zeros((plant.p, T)) if lure else None
    for k in range(T):
        if lure:
            w = plant.gamma(plant.H @ X[:, k])
            W[:, k] = w
            X[:, k + 1] = plant.A @ X[:, k] + plant.B @ U[:, k] + plant.E @ w
        else:
            X[:, k + 1] = plant.A @ X[:, k] + plant.B @ U[:, k]
        nrm = np.abs(X[:, k + 1]).max()
        if not np.isfinite(nrm) or nrm > OVERFLOW_LIMIT:
            raise ExperimentOverflow(k + 1, nrm)
    return Dataset(U, X, W if record_w else None, seed=seed, provenance=provenance)


def shift_split(d: Dataset) -> ShiftedData:
    """X_minus = columns 0..T-1 of X, X_plus = columns 1..T."""
    return ShiftedData(d.X[:, :-1].copy(), d.X[:, 1:].copy())


def regressor(d: Dataset) -> np.ndarray:
    """Stacked regressor Z = [X_minus; U_minus] (plus W_minus when present)."""
    sh = shift_split(d)
    parts = [sh.X_minus, d.U_minus]
    if d.W_minus is not None:
        parts.append(d.W_minus)
    return np.vstack(parts)


def regressor_rank(d: Dataset, rtol: Optional[float] = None) -> int:
    Z = regressor(d)
    s = np.linalg.svd(Z, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    tol = (rtol if rtol is not None else max(Z.shape) * 1e-12) * s[0]
    return int(np.sum(s > tol))


def consistency_residual(d: Dataset, A, B, E=None) -> float:
    """Frobenius norm of X_plus - A X_minus - B U_minus (- E W_minus)."""
    sh = shift_split(d)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape != (d.n, d.n) or B.shape != (d.n, d.m):
        raise DataError(f"A/B shapes {A.shape}/{B.shape} do not match data (n={d.n}, m={d.m})")
    res = sh.X_plus - A @ sh.X_minus - B @ d.U_minus
    if E is not None:
        if d.W_minus is None:
            raise DataError("E supplied but dataset has no W_minus")
        E = np.atleast_2d(np.asarray(E, dtype=float))
        res = res - E @ d.W_minus
    return float(np.linalg.norm(res))


def consistent_set(d: Dataset, lure: bool = False, rtol: Optional[float] = None) -> ConsistentSet:
    """Least-norm solution of [A B(,E)] Z = X_plus plus the regressor's
    annihilator directions. Rejects data no exact system can explain."""
    sh = shift_split(d)
    if lure:
        if d.W_minus is None:
            raise DataError("lure=True requires W_minus in the dataset")
        Z = np.vstack([sh.X_minus, d.U_minus, d.W_minus])
        p = d.p
    else:
        Z = np.vstack([sh.X_minus, d.U_minus])
        p = 0
    particular = sh.X_plus @ np.linalg.pinv(Z)
    U, s, Vt = np.linalg.svd(Z, full_matrices=True)
    if s.size == 0 or s[0] == 0.0:
        rank = 0
    else:
        tol = (rtol if rtol is not None else max(Z.shape) * 1e-12) * s[0]
        rank = int(np.sum(s > tol))
    nullbasis = U[:, rank:]
    resid = float(np.linalg.norm(sh.X_plus - particular @ Z))
    scale = max(1.0, float(np.linalg.norm(sh.X_plus)))
    if resid > CONSISTENCY_TOL * scale:
        raise DataError(
            f"data are not exactly consistent with any system (residual {resid:.3e}); corrupted input?"
        )
    return ConsistentSet(particular, nullbasis, rank, d.n, d.m, p)


# ---------------------------------------------------------------------------
# persistence

def dataset_to_dict(d: Dataset) -> dict:
    out = {
        "n": d.n,
        "m": d.m,
        "p": d.p,
        "T": d.T,
        "seed": d.seed,
        "provenance": d.provenance,
        "U_minus": d.U_minus.ravel().tolist(),
        "X": d.X.ravel().tolist(),
    }
    if d.W_minus is not None:
        out["W_minus"] = d.W_minus.ravel().tolist()
    return out


def dataset_from_dict(obj: dict) -> Dataset:
    n, m, T = int(obj["n"]), int(obj["m"]), int(obj["T"])
    U = np.asarray(obj["U_minus"], dtype=float).reshape(m, T)
    X = np.asarray(obj["X"], dtype=float).reshape(n, T + 1)
    W = None
    if obj.get("W_minus") is not None:
        p = int(obj["p"])
        W = np.asarray(obj["W_minus"], dtype=float).reshape(p, T)
    return Dataset(U, X, W, seed=obj.get("seed"), provenance=obj.get("provenance", ""))


def save_dataset(d: Dataset, path):
    with open(path, "w") as f:
        json.dump(dataset_to_dict(d), f)


def load_dataset(path) -> Dataset:
    with open(path) as f:
        return dataset_from_dict(json.load(f))


def export_trace(d: Dataset, path):
    """Columnar per-step trace: k, u(k), x(k), and w(k) when recorded."""
    cols = ["k"]
    cols += [f"u{i + 1}" for i in range(d.m)]
    cols += [f"x{i + 1}" for i in range(d.n)]
    if d.W_minus is not None:
        cols += [f"w{i + 1}" for i in range(d.p)]
    with open(path, "w") as f:
        f.write(",".join(cols) + "\n")
        for k in range(d.T):
            row = [str(k)]
            row += [repr(float(v)) for v in d.U_minus[:, k]]
            row += [repr(float(v)) for v in d.X[:, k]]
            if d.W_minus is not None:
                row += [repr(float(v)) for v in d.W_minus[:, k]]
            f.write(",".join(row) + "\n")
