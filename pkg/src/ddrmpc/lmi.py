"""Affine PSD block constraints for the three synthesis problems (nominal,
polytopic, Lur'e), the constraint-row embedding, and the standalone
direction/containment checkers.

An LmiProblem stores each named block as a constant matrix plus one
coefficient matrix per scalar decision coordinate, so that evaluation at a
DecisionPoint is plain summation and the conic lowering is mechanical. The
block patterns are hard-coded in their published printed form; no
Schur-complement reformulation happens here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .datalab import Dataset, shift_split
from .matcore import BlockLayout, SymMatrix, assemble_blocks, is_psd

__all__ = [
    "Weights",
    "ConstraintRows",
    "DecisionPoint",
    "LmiBlock",
    "LmiProblem",
    "FinslerPair",
    "make_constraint_rows",
    "input_box_rows",
    "state_box_rows",
    "psi",
    "build_nominal",
    "build_polytopic",
    "build_lure",
    "finsler_check",
    "ellipsoid_contained",
    "dump_problem",
]

PD_MARGIN = 1e-12


class LmiError(ValueError):
    pass


def _sqrtm_pd(M: np.ndarray, name: str) -> np.ndarray:
    """Symmetric principal square root; validates M is PD first."""
    M = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(M)
    if w[0] <= PD_MARGIN * max(1.0, w[-1]):
        raise LmiError(f"{name} must be positive definite (min eig {w[0]:.3e})")
    return V @ np.diag(np.sqrt(w)) @ V.T


@dataclass(frozen=True)
class Weights:
    """Stage-cost weights and their stacked square roots:
    Q_hat = [Q^{1/2}; 0] and R_hat = [0; R^{1/2}], both (n+m)-row."""

    Q: np.ndarray
    R: np.ndarray
    Q_hat: np.ndarray = field(init=False)
    R_hat: np.ndarray = field(init=False)

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if Q.shape[0] != Q.shape[1] or R.shape[0] != R.shape[1]:
            raise LmiError("Q and R must be square")
        n, m = Q.shape[0], R.shape[0]
        Qr = _sqrtm_pd(Q, "Q")
        Rr = _sqrtm_pd(R, "R")
        object.__setattr__(self, "Q", 0.5 * (Q + Q.T))
        object.__setattr__(self, "R", 0.5 * (R + R.T))
        object.__setattr__(self, "Q_hat", np.vstack([Qr, np.zeros((m, n))]))
        object.__setattr__(self, "R_hat", np.vstack([np.zeros((n, m)), Rr]))

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def m(self) -> int:
        return self.R.shape[0]


@dataclass(frozen=True)
class ConstraintRows:
    """Combined half-space rows c_i x + d_i u <= 1."""

    rows: tuple  # of (c: (1,n), d: (1,m))

    @property
    def r(self) -> int:
        return len(self.rows)


def make_constraint_rows(state_rows, input_rows, n: int, m: int) -> ConstraintRows:
    """Merge pure state rows (c x <= 1) and pure input rows (d u <= 1) into
    the combined form; each is padded with zeros on the other channel."""
    rows = []
    for c in np.atleast_2d(np.asarray(state_rows, dtype=float)) if len(state_rows) else []:
        c = c.reshape(1, n)
        if not np.all(np.isfinite(c)):
            raise LmiError("non-finite state constraint row")
        rows.append((c, np.zeros((1, m))))
    for d in np.atleast_2d(np.asarray(input_rows, dtype=float)) if len(input_rows) else []:
        d = d.reshape(1, m)
        if not np.all(np.isfinite(d)):
            raise LmiError("non-finite input constraint row")
        rows.append((np.zeros((1, n)), d))
    return ConstraintRows(tuple(rows))


def _box_faces(lo: float, hi: float, what: str) -> List[float]:
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise LmiError(f"{what}: bounds must be finite (got [{lo}, {hi}])")
    if not (lo < 0.0 < hi):
        raise LmiError(
            f"{what}: box [{lo}, {hi}] must contain 0 strictly; the <=1 normal form needs nonzero bounds"
        )
    return [1.0 / hi, 1.0 / lo]  # v <= hi  ->  v/hi <= 1 ;  v >= lo  ->  v/lo <= 1 (lo < 0)


def input_box_rows(bounds, m: int) -> np.ndarray:
    """Rows for per-channel input boxes. ``bounds``: scalar a for [-a, a] on
    all channels, or one (lo, hi) pair per channel."""
    if np.isscalar(bounds):
        bounds = [(-float(bounds), float(bounds))] * m
    rows = []
    for i, (lo, hi) in enumerate(bounds):
        for f in _box_faces(float(lo), float(hi), f"input {i + 1}"):
            d = np.zeros(m)
            d[i] = f
            rows.append(d)
    return np.asarray(rows)


def state_box_rows(bounds: Dict[int, Tuple[float, float]], n: int) -> np.ndarray:
    """Rows for boxes on selected state components, keyed by 0-based index."""
    rows = []
    for i in sorted(bounds):
        lo, hi = bounds[i]
        for f in _box_faces(float(lo), float(hi), f"state {i + 1}"):
            c = np.zeros(n)
            c[i] = f
            rows.append(c)
    return np.asarray(rows) if rows else np.zeros((0, n))


@dataclass(frozen=True)
class DecisionPoint:
    """One point in the decision space of the synthesis problems."""

    N: np.ndarray
    L: np.ndarray
    alpha: float
    eta: float
    eps: float

    def __post_init__(self):
        N = np.atleast_2d(np.asarray(self.N, dtype=float))
        L = np.atleast_2d(np.asarray(self.L, dtype=float))
        if N.shape[0] != N.shape[1]:
            raise LmiError("N must be square")
        if np.abs(N - N.T).max() > 1e-9 * max(1.0, np.abs(N).max()):
            raise LmiError("N must be symmetric")
        if L.shape[1] != N.shape[0]:
            raise LmiError(f"L has {L.shape[1]} columns, expected n={N.shape[0]}")
        for nm, v in (("alpha", self.alpha), ("eta", self.eta), ("eps", self.eps)):
            if not (np.isfinite(v) and v > 0):
                raise LmiError(f"{nm} must be a positive real, got {v!r}")
        object.__setattr__(self, "N", 0.5 * (N + N.T))
        object.__setattr__(self, "L", L)


@dataclass(frozen=True)
class LmiBlock:
    """One named PSD constraint: const + sum_k theta_k * coeffs[k] >= 0."""

    name: str
    const: np.ndarray
    coeffs: Dict[str, np.ndarray]

    @property
    def side(self) -> int:
        return self.const.shape[0]


@dataclass(frozen=True)
class LmiProblem:
    """Affine PSD feasibility/minimization problem over the coordinates of
    (N upper triangle, L entries, alpha, eta, eps); objective: min alpha."""

    var_layout: tuple  # coordinate names, fixed order
    blocks: tuple      # of LmiBlock
    mode: str          # nominal | polytopic | lure
    dims: dict         # n, m, p, T, r, zeta

    @property
    def num_vars(self) -> int:
        return len(self.var_layout)

    def pack(self, dp: DecisionPoint) -> np.ndarray:
        n = self.dims["n"]
        m = self.dims["m"]
        if dp.N.shape != (n, n) or dp.L.shape != (m, n):
            raise LmiError("DecisionPoint dimensions do not match problem")
        th = []
        for i in range(n):
            for j in range(i, n):
                th.append(dp.N[i, j])
        th.extend(dp.L.ravel())
        th.extend([dp.alpha, dp.eta, dp.eps])
        return np.asarray(th)

    def unpack(self, theta: np.ndarray) -> DecisionPoint:
        n = self.dims["n"]
        m = self.dims["m"]
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.shape != (self.num_vars,):
            raise LmiError(f"theta has length {theta.size}, expected {self.num_vars}")
        N = np.zeros((n, n))
        k = 0
        for i in range(n):
            for j in range(i, n):
                N[i, j] = N[j, i] = theta[k]
                k += 1
        L = theta[k:k + m * n].reshape(m, n)
        alpha, eta, eps = theta[-3], theta[-2], theta[-1]
        return DecisionPoint(N, L, float(alpha), float(eta), float(eps))

    def eval_block(self, block: LmiBlock, point) -> np.ndarray:
        theta = point if isinstance(point, np.ndarray) else self.pack(point)
        names = {nm: i for i, nm in enumerate(self.var_layout)}
        M = block.const.copy()
        for nm, C in block.coeffs.items():
            M = M + theta[names[nm]] * C
        return M


@dataclass(frozen=True)
class FinslerPair:
    """Matrices (M, Xi) of the direction equivalence: the quadratic form of M
    is PSD on the variety annihilated by Xi iff M - eps*Xi >= 0 for some eps."""

    M: SymMatrix
    Xi: SymMatrix
    split: int

    def __post_init__(self):
        if self.M.side != self.Xi.side:
            raise LmiError("M and Xi must have matching sides")
        if not 0 < self.split < self.M.side:
            raise LmiError("split must partition the matrices")


def finsler_check(fp: FinslerPair, eps: float, tol: float = 0.0) -> bool:
    """True iff M - eps*Xi is PSD at tolerance tol."""
    return is_psd(SymMatrix(fp.M.entries - eps * fp.Xi.entries), tol)


def ellipsoid_contained(P, alpha: float, rows: ConstraintRows, K, tol: float = 0.0):
    """Containment of {x : x'Px <= alpha} in every closed-loop half space
    (c_i + d_i K) x <= 1. Returns (per-row ok, per-row margins)."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    n = P.shape[0]
    w_eigs = np.linalg.eigvalsh(0.5 * (P + P.T))
    if w_eigs[0] <= 0:
        raise LmiError(f"P must be positive definite (min eig {w_eigs[0]:.3e})")
    if alpha <= 0:
        raise LmiError("alpha must be positive")
    K = np.atleast_2d(np.asarray(K, dtype=float))
    Pinv = np.linalg.inv(0.5 * (P + P.T))
    margins = []
    for c, d in rows.rows:
        w = c + d @ K
        margins.append(float(1.0 - alpha * (w @ Pinv @ w.T)[0, 0]))
    margins = np.asarray(margins)
    return margins >= -tol, margins


def psi(N, L, w: Weights) -> np.ndarray:
    """Q_hat N + R_hat L: the stacked cost rows [Q^{1/2} N; R^{1/2} L]."""
    N = np.atleast_2d(np.asarray(N, dtype=float))
    L = np.atleast_2d(np.asarray(L, dtype=float))
    if N.shape != (w.n, w.n) or L.shape != (w.m, w.n):
        raise LmiError("psi: N/L shapes do not match weights")
    return w.Q_hat @ N + w.R_hat @ L


# ---------------------------------------------------------------------------
# builders

def _coordinate_names(n: int, m: int):
    names = [f"N_{i}_{j}" for i in range(n) for j in range(i, n)]
    names += [f"L_{i}_{j}" for i in range(m) for j in range(n)]
    names += ["alpha", "eta", "eps"]
    return tuple(names)


def _probe_affine(fn, layout: tuple, n: int, m: int) -> LmiBlock:
    """Extract (const, coeffs) of an affine matrix map by probing coordinate
    unit vectors. Exact for affine maps built from sums and fixed products."""
    nv = len(layout)
    zero = np.zeros(nv)
    const = np.asarray(fn(zero), dtype=float)
    coeffs = {}
    for i, nm in enumerate(layout):
        e = np.zeros(nv)
        e[i] = 1.0
        C = np.asarray(fn(e), dtype=float) - const
        if np.any(C != 0.0):
            coeffs[nm] = C
    return const, coeffs


def _unpack_raw(theta, n, m):
    N = np.zeros((n, n))
    k = 0
    for i in range(n):
        for j in range(i, n):
            N[i, j] = N[j, i] = theta[k]
            k += 1
    L = theta[k:k + m * n].reshape(m, n)
    return N, L, theta[-3], theta[-2], theta[-1]


def _data_arrays(d: Dataset):
    sh = shift_split(d)
    return sh.X_plus, sh.X_minus, d.U_minus


def _ellip_block(x0, n, m, layout) -> LmiBlock:
    x0 = np.asarray(x0, dtype=float).reshape(n, 1)

    def fn(theta):
        N, L, al, et, ep = _unpack_raw(theta, n, m)
        grid = [[np.ones((1, 1)), x0.T], [x0, N]]
        return assemble_blocks(BlockLayout([1, n]), grid).entries

    const, coeffs = _probe_affine(fn, layout, n, m)
    return LmiBlock("ellip", const, coeffs)


def _con_blocks(rows: ConstraintRows, n, m, layout) -> List[LmiBlock]:
    out = []
    for i, (c, d) in enumerate(rows.rows):
        def fn(theta, c=c, d=d):
            N, L, al, et, ep = _unpack_raw(theta, n, m)
            row = d @ L + c @ N
            grid = [[np.ones((1, 1)), row], [row.T, N]]
            return assemble_blocks(BlockLayout([1, n]), grid).entries

        const, coeffs = _probe_affine(fn, layout, n, m)
        out.append(LmiBlock(f"con_{i + 1}", const, coeffs))
    return out


def _stab2_nominal(w: Weights, n, m, layout) -> LmiBlock:
    def fn(theta):
        N, L, al, et, ep = _unpack_raw(theta, n, m)
        Psi = w.Q_hat @ N + w.R_hat @ L
        grid = [[N, Psi.T], [Psi, al * np.eye(n + m)]]
        return assemble_blocks(BlockLayout([n, n + m]), grid).entries

    const, coeffs = _probe_affine(fn, layout, n, m)
    return LmiBlock("stab2", const, coeffs)


def _stab_nominal(name, d: Dataset, w: Weights, n, m, layout) -> LmiBlock:
    Xp, Xm, Um = _data_arrays(d)
    T = d.T
    D = np.vstack([Xp, -Xm, -Um, np.zeros((n, T)), np.zeros((n + m, T))])
    DDT = D @ D.T

    def fn(theta):
        N, L, al, et, ep = _unpack_raw(theta, n, m)
        Psi = w.Q_hat @ N + w.R_hat @ L
        grid = [
            [N - et * np.eye(n), None, None, None, None],
            [None, None, None, N, None],
            [None, None, None, L, None],
            [None, N, L.T, N, Psi.T],
            [None, None, None, Psi, al * np.eye(n + m)],
        ]
        M0 = assemble_blocks(BlockLayout([n, n, m, n, n + m]), grid).entries
        return M0 + ep * DDT

    const, coeffs = _probe_affine(fn, layout, n, m)
    return LmiBlock(name, const, coeffs)


def _stab_lure(d: Dataset, w: Weights, H, beta, n, m, p, layout) -> LmiBlock:
    Xp, Xm, Um = _data_arrays(d)
    Wm = d.W_minus
    T = d.T
    D = np.vstack([Xp, -Xm, -Um, -Wm, np.zeros((p, T)), np.zeros((n, T)), np.zeros((n + m, T))])
    DDT = D @ D.T

    def fn(theta):
        N, L, al, et, ep = _unpack_raw(theta, n, m)
        Psi = w.Q_hat @ N + w.R_hat @ L
        bHN = 0.5 * beta @ H @ N  # p x n
        aIp = al * np.eye(p)
        grid = [
            [N - et * np.eye(n), None, None, None, None, None, None],
            [None, None, None, None, None, N, None],
            [None, None, None, None, None, L, None],
            [None, None, None, None, aIp, None, None],
            [None, None, None, aIp, aIp, -bHN, None],
            [None, N, L.T, None, -bHN.T, N, Psi.T],
            [None, None, None, None, None, Psi, al * np.eye(n + m)],
        ]
        M0 = assemble_blocks(BlockLayout([n, n, m, p, p, n, n + m]), grid).entries
        return M0 + ep * DDT

    const, coeffs = _probe_affine(fn, layout, n, m)
    return LmiBlock("stab", const, coeffs)


def _stab2_lure(w: Weights, H, beta, n, m, p, layout) -> LmiBlock:
    def fn(theta):
        N, L, al, et, ep = _unpack_raw(theta, n, m)
        Psi = w.Q_hat @ N + w.R_hat @ L
        bHN = 0.5 * beta @ H @ N
        grid = [
            [N, -bHN.T, Psi.T],
            [-bHN, al * np.eye(p), None],
            [Psi, None, al * np.eye(n + m)],
        ]
        return assemble_blocks(BlockLayout([n, p, n + m]), grid).entries

    const, coeffs = _probe_affine(fn, layout, n, m)
    return LmiBlock("stab2", const, coeffs)


def _check_compat(d: Dataset, w: Weights, rows: ConstraintRows, x0):
    if d.n != w.n or d.m != w.m:
        raise LmiError(f"dataset dims (n={d.n}, m={d.m}) do not match weights (n={w.n}, m={w.m})")
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.shape != (d.n,):
        raise LmiError(f"x0 has shape {x0.shape}, expected ({d.n},)")
    for c, dd in rows.rows:
        if c.shape != (1, d.n) or dd.shape != (1, d.m):
            raise LmiError("constraint row shapes do not match plant dimensions")
    return x0


def build_nominal(d: Dataset, w: Weights, rows: ConstraintRows, x0) -> LmiProblem:
    """Single-dataset synthesis problem: ellip, stab (with the eps-scaled
    data outer product), stab2, and one block per constraint row."""
    x0 = _check_compat(d, w, rows, x0)
    n, m = d.n, d.m
    layout = _coordinate_names(n, m)
    blocks = [_ellip_block(x0, n, m, layout),
              _stab_nominal("stab", d, w, n, m, layout),
              _stab2_nominal(w, n, m, layout)]
    blocks += _con_blocks(rows, n, m, layout)
    dims = {"n": n, "m": m, "p": 0, "T": d.T, "r": rows.r, "zeta": 1}
    return LmiProblem(layout, tuple(blocks), "nominal", dims)


def build_polytopic(datasets: Sequence[Dataset], w: Weights, rows: ConstraintRows, x0) -> LmiProblem:
    """Shared decision variables with one stab block per vertex dataset."""
    if not datasets:
        raise LmiError("need at least one vertex dataset")
    for d in datasets[1:]:
        if d.n != datasets[0].n or d.m != datasets[0].m:
            raise LmiError("vertex datasets disagree on (n, m)")
    x0 = _check_compat(datasets[0], w, rows, x0)
    n, m = datasets[0].n, datasets[0].m
    layout = _coordinate_names(n, m)
    blocks = [_ellip_block(x0, n, m, layout)]
    for j, d in enumerate(datasets):
        blocks.append(_stab_nominal(f"stab_{j + 1}", d, w, n, m, layout))
    blocks.append(_stab2_nominal(w, n, m, layout))
    blocks += _con_blocks(rows, n, m, layout)
    dims = {"n": n, "m": m, "p": 0, "T": max(d.T for d in datasets), "r": rows.r,
            "zeta": len(datasets)}
    return LmiProblem(layout, tuple(blocks), "polytopic", dims)


def build_lure(d: Dataset, w: Weights, rows: ConstraintRows, x0, H, beta) -> LmiProblem:
    """Sector-bounded synthesis problem with the measured nonlinearity
    channel folded into the data vector and the half-sector coupling rows."""
    if d.W_minus is None:
        raise LmiError("Lur'e synthesis requires W_minus in the dataset")
    x0 = _check_compat(d, w, rows, x0)
    n, m, p = d.n, d.m, d.p
    H = np.atleast_2d(np.asarray(H, dtype=float))
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    if H.shape != (p, n):
        raise LmiError(f"H must be {p}x{n}, got {H.shape}")
    if beta.shape != (p, p):
        raise LmiError(f"beta must be {p}x{p}, got {beta.shape}")
    layout = _coordinate_names(n, m)
    blocks = [_ellip_block(x0, n, m, layout),
              _stab_lure(d, w, H, beta, n, m, p, layout),
              _stab2_lure(w, H, beta, n, m, p, layout)]
    blocks += _con_blocks(rows, n, m, layout)
    dims = {"n": n, "m": m, "p": p, "T": d.T, "r": rows.r, "zeta": 1}
    return LmiProblem(layout, tuple(blocks), "lure", dims)


# ---------------------------------------------------------------------------
# debug dump: stable text listing used by golden-file tests

def dump_problem(p: LmiProblem) -> str:
    lines = [
        "lmi-problem mode={} n={} m={} p={} T={} r={} zeta={}".format(
            p.mode, p.dims["n"], p.dims["m"], p.dims["p"], p.dims["T"], p.dims["r"], p.dims["zeta"]
        ),
        "vars: " + " ".join(p.var_layout),
        "objective: minimize alpha",
    ]
    for b in p.blocks:
        lines.append(f"block {b.name} side={b.side}")
        lines.append("  const " + _entries(b.const))
        for nm in p.var_layout:
            if nm in b.coeffs:
                lines.append(f"  coeff {nm} " + _entries(b.coeffs[nm]))
    return "\n".join(lines) + "\n"


def _entries(M: np.ndarray) -> str:
    idx = np.argwhere(M != 0.0)
    if idx.size == 0:
        return "zero"
    return " ".join(f"({i},{j})={float(M[i, j])!r}" for i, j in idx)
