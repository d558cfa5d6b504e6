"""Conic standard form, the solver delegation, and independent solution
re-verification.

The backend is the Clarabel interior-point solver, called directly on the
standard primal form (min q'x s.t. Ax + s = b, s in a product of nonnegative
and PSD-triangle cones). Blocks are kept dense and chordal decomposition is
disabled.

The synthesis problems carry one structural quirk the generic path cannot
handle well: the data coordinate (eps) multiplies a positive-semidefinite
outer product in every block it touches, so enlarging it never hurts
feasibility and the optimum is approached only along an unbounded ray.
``solve_lmi`` detects such a recession coordinate, projects the affected
blocks onto the nullspace of its coefficient (the exact limit of the ray),
solves the reduced well-scaled problem with a strict interior margin, and
then recovers a finite value of the coordinate by eigenvalue bisection. The
returned point is always re-verified on the original blocks.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import clarabel

from .lmi import DecisionPoint, LmiProblem
from .matcore import min_eig

__all__ = [
    "ConicProgram",
    "SolverSettings",
    "Solution",
    "lower",
    "solve",
    "solve_lmi",
    "check_solution",
    "export_triplets",
]

_SQRT2 = np.sqrt(2.0)

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"
STATUS_MAX_ITERS = "max_iters"
STATUS_NUMERICAL = "numerical_failure"


@dataclass(frozen=True)
class SolverSettings:
    """Tolerance contract for the solver layer.

    ``delta`` is the strictness margin knob: strict matrix inequalities are
    lowered as >= delta*scale(const)*I, and the positive scalars get delta as
    their lower bound. ``margin_ladder`` lists the interior margins (relative
    to each block's magnitude envelope) tried by the recession reduction; a
    larger margin costs a slightly larger objective but makes the recovered
    data coordinate smaller and every certificate strictly interior.
    """

    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iters: int = 200
    delta: float = 1e-6
    margin_ladder: tuple = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2)
    seed_note: str = ""

    def __post_init__(self):
        for nm in ("feas_tol", "gap_tol", "delta"):
            if getattr(self, nm) <= 0:
                raise ValueError(f"{nm} must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class ConicProgram:
    """min objective . x  s.t.  const_b + sum_i x_i coeff_b_i >= 0 (PSD)
    for every block b, and x_i >= lb_i for bounded scalars."""

    num_vars: int
    objective: np.ndarray
    psd_blocks: tuple  # of (name, const ndarray, coeffs {var_index: ndarray})
    scalar_bounds: dict  # var_index -> lower bound

    def __post_init__(self):
        obj = np.asarray(self.objective, dtype=float).ravel()
        if obj.shape != (self.num_vars,):
            raise ValueError("objective length does not match num_vars")
        for name, const, coeffs in self.psd_blocks:
            side = const.shape[0]
            for i, C in coeffs.items():
                if not 0 <= i < self.num_vars:
                    raise ValueError(f"block {name}: coefficient for unknown variable {i}")
                if C.shape != (side, side):
                    raise ValueError(f"block {name}: coefficient shape {C.shape} != {(side, side)}")
        object.__setattr__(self, "objective", obj)


@dataclass(frozen=True)
class Solution:
    status: str
    point: Optional[np.ndarray]
    objective_value: Optional[float]
    residuals: dict  # per-block min eigenvalue, gap estimate, margins used
    iterations: int = 0
    message: str = ""


def lower(p: LmiProblem, s: SolverSettings) -> ConicProgram:
    """One conic variable per scalar coordinate; strictness margin folded
    into block constants; alpha/eta/eps bounded below by delta."""
    names = {nm: i for i, nm in enumerate(p.var_layout)}
    obj = np.zeros(p.num_vars)
    obj[names["alpha"]] = 1.0
    blocks = []
    for b in p.blocks:
        scale = float(np.abs(b.const).max())
        margin = s.delta * scale
        const = b.const - margin * np.eye(b.side)
        blocks.append((b.name, const, {names[nm]: C for nm, C in b.coeffs.items()}))
    bounds = {names[nm]: s.delta for nm in ("alpha", "eta", "eps")}
    return ConicProgram(p.num_vars, obj, tuple(blocks), bounds)


def _svec(M: np.ndarray) -> np.ndarray:
    """Clarabel's scaled upper-triangle vectorization (column stacked,
    off-diagonals times sqrt(2))."""
    n = M.shape[0]
    out = np.empty(n * (n + 1) // 2)
    k = 0
    for j in range(n):
        for i in range(j + 1):
            out[k] = M[i, j] * (1.0 if i == j else _SQRT2)
            k += 1
    return out


def _clarabel_solve(cp: ConicProgram, s: SolverSettings):
    rows_A, rows_b, cones = [], [], []
    if cp.scalar_bounds:
        idx = sorted(cp.scalar_bounds)
        Ab = sp.lil_matrix((len(idx), cp.num_vars))
        bb = np.empty(len(idx))
        for r, i in enumerate(idx):
            Ab[r, i] = -1.0
            bb[r] = -cp.scalar_bounds[i]
        rows_A.append(Ab.tocsc())
        rows_b.append(bb)
        cones.append(clarabel.NonnegativeConeT(len(idx)))
    for name, const, coeffs in cp.psd_blocks:
        side = const.shape[0]
        Ablk = np.zeros((side * (side + 1) // 2, cp.num_vars))
        for i, C in coeffs.items():
            Ablk[:, i] = -_svec(C)
        rows_A.append(sp.csc_matrix(Ablk))
        rows_b.append(_svec(const))
        cones.append(clarabel.PSDTriangleConeT(side))
    A = sp.vstack(rows_A).tocsc()
    b = np.concatenate(rows_b)
    P = sp.csc_matrix((cp.num_vars, cp.num_vars))
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = s.max_iters
    settings.tol_gap_abs = s.gap_tol
    settings.tol_gap_rel = s.gap_tol
    settings.tol_feas = s.feas_tol
    settings.reduced_tol_gap_abs = 100 * s.gap_tol
    settings.reduced_tol_gap_rel = 100 * s.gap_tol
    settings.reduced_tol_feas = 100 * s.feas_tol
    settings.chordal_decomposition_enable = False
    solver = clarabel.DefaultSolver(P, cp.objective, A, b, cones, settings)
    return solver.solve()


def _block_residuals(cp: ConicProgram, x: np.ndarray) -> Dict[str, float]:
    out = {}
    for name, const, coeffs in cp.psd_blocks:
        M = const.copy()
        for i, C in coeffs.items():
            M = M + x[i] * C
        out[name] = min_eig(M)
    return out


def solve(cp: ConicProgram, s: SolverSettings = SolverSettings()) -> Solution:
    """Single-shot interior-point solve with independent feasibility
    re-verification of any claimed-optimal point."""
    raw = _clarabel_solve(cp, s)
    st = raw.status
    x = np.asarray(raw.x, dtype=float) if raw.x is not None else None
    gap = abs(raw.obj_val - raw.obj_val_dual) if np.isfinite(raw.obj_val) else np.inf
    S = clarabel.SolverStatus
    residuals = {"gap": float(gap)}
    if st in (S.PrimalInfeasible, S.AlmostPrimalInfeasible):
        return Solution(STATUS_INFEASIBLE, None, None, residuals, raw.iterations, str(st))
    if st in (S.DualInfeasible, S.AlmostDualInfeasible):
        return Solution(STATUS_UNBOUNDED, None, None, residuals, raw.iterations, str(st))
    if st == S.MaxIterations:
        return Solution(STATUS_MAX_ITERS, x, float(raw.obj_val), residuals, raw.iterations, str(st))
    if st in (S.Solved, S.AlmostSolved) and x is not None:
        blocks = _block_residuals(cp, x)
        residuals["blocks"] = blocks
        feas_ok = all(v >= -s.feas_tol for v in blocks.values()) and all(
            x[i] >= lb - s.feas_tol for i, lb in cp.scalar_bounds.items()
        )
        gap_ok = gap <= 100 * s.gap_tol * max(1.0, abs(raw.obj_val))
        if st == S.Solved or (feas_ok and gap_ok):
            return Solution(STATUS_OPTIMAL, x, float(raw.obj_val), residuals, raw.iterations, str(st))
        return Solution(STATUS_NUMERICAL, x, float(raw.obj_val), residuals, raw.iterations,
                        f"{st}: feasible={feas_ok} gap={gap:.2e}")
    return Solution(STATUS_NUMERICAL, x, None, residuals, raw.iterations, str(st))


# ---------------------------------------------------------------------------
# recession-direction reduction

def _find_recession_var(cp: ConicProgram) -> Optional[int]:
    """A coordinate with zero objective weight whose every nonzero block
    coefficient is PSD: increasing it never hurts feasibility."""
    candidates = []
    for i in range(cp.num_vars):
        if cp.objective[i] != 0.0:
            continue
        seen = False
        psd = True
        for name, const, coeffs in cp.psd_blocks:
            C = coeffs.get(i)
            if C is None:
                continue
            seen = True
            w = np.linalg.eigvalsh(0.5 * (C + C.T))
            if w[0] < -1e-12 * max(1.0, abs(w[-1])):
                psd = False
                break
        if seen and psd:
            candidates.append(i)
    if len(candidates) == 1:
        return candidates[0]
    return None


def _envelope(const: np.ndarray, coeffs) -> float:
    env = np.abs(const).copy()
    for C in coeffs.values():
        env = env + np.abs(C)
    return float(env.max()) if env.size else 1.0


def _ruiz_scale(const: np.ndarray, coeffs) -> np.ndarray:
    """Diagonal scaling that equilibrates the block's magnitude envelope
    |const| + sum |coeff|. Makes the solver see comparably scaled rows no
    matter how the weights or data were scaled externally."""
    env = np.abs(const).copy()
    for C in coeffs.values():
        env = env + np.abs(C)
    s = np.ones(env.shape[0])
    for _ in range(8):
        rows = np.sqrt((env * np.outer(s, s)).max(axis=1))
        rows[rows == 0] = 1.0
        s = s / np.sqrt(rows)
    return s


def _reduce_program(cp: ConicProgram, rec: int, margin: float) -> Tuple[ConicProgram, list, dict]:
    """Project blocks touched by the recession variable onto the nullspace
    of its (PSD) coefficient, drop the variable, and shift every block by a
    strict interior margin relative to its magnitude envelope."""
    keep = [i for i in range(cp.num_vars) if i != rec]
    remap = {i: k for k, i in enumerate(keep)}
    blocks2 = []
    recover = []  # (name, const, coeffs-without-rec, G) for the eps recovery
    for name, const, coeffs in cp.psd_blocks:
        co = {i: C for i, C in coeffs.items() if i != rec}
        reduced = rec in coeffs
        if reduced:
            G = coeffs[rec]
            w, V = np.linalg.eigh(0.5 * (G + G.T))
            wmax = max(w[-1], 0.0)
            null_cols = V[:, w < 1e-12 * max(wmax, 1.0)]
            recover.append((name, const, co, G))
            const_r = null_cols.T @ const @ null_cols
            co_r = {}
            for i, C in co.items():
                Cr = null_cols.T @ C @ null_cols
                if np.abs(Cr).max() > 0.0:
                    co_r[i] = Cr
            const, co = const_r, co_r
            if const.shape[0] == 0:
                continue  # full-rank coefficient: the ray handles the whole block
        s_eq = _ruiz_scale(const, co)
        S = np.outer(s_eq, s_eq)
        const = const * S
        co = {i: C * S for i, C in co.items()}
        if reduced:
            # only the projected data blocks need a strict interior margin:
            # it is what makes the finite-eps recovery sound
            scale = max(_envelope(const, co), 1.0)
            const = const - margin * scale * np.eye(const.shape[0])
        blocks2.append((name, const, {remap[i]: C for i, C in co.items()}))
    obj = cp.objective[keep]
    bounds = {remap[i]: lb for i, lb in cp.scalar_bounds.items() if i != rec}
    return ConicProgram(len(keep), obj, tuple(blocks2), bounds), recover, remap


def _recover_recession(x_full: np.ndarray, recover, lb: float, cap: float) -> Optional[float]:
    """Smallest power-of-two multiple of lb that makes every touched block
    PSD at the reduced solution, doubled once for slack; None if the cap is
    hit (the margin was too thin to trust the eigenvalue check)."""
    need = lb
    for name, const, coeffs, G in recover:
        M0 = const.copy()
        for i, C in coeffs.items():
            M0 = M0 + x_full[i] * C
        e = lb
        ok = None
        while e <= cap:
            if min_eig(M0 + e * G) >= 0.0:
                ok = e
                break
            e *= 2.0
        if ok is None:
            return None
        need = max(need, ok)
    return min(2.0 * need, cap)


def solve_lmi(p: LmiProblem, s: SolverSettings = SolverSettings()) -> Solution:
    """Production solve of a synthesis LmiProblem.

    Uses the recession reduction when the problem has a data coordinate;
    falls back to the plain path otherwise. Any returned optimal point is
    verified on the original blocks via eigenvalue checks.
    """
    cp = lower(p, s)
    rec = _find_recession_var(cp)
    if rec is None:
        return solve(cp, s)

    smallest_margin_infeasible = False
    attempts = []
    for idx, margin in enumerate(s.margin_ladder):
        red, recover, remap = _reduce_program(cp, rec, margin)
        sol = solve(red, s)
        attempts.append((margin, sol.status))
        if sol.status == STATUS_INFEASIBLE:
            # margins only shrink the feasible set, so larger ones stay
            # infeasible; only the smallest margin speaks for the problem
            smallest_margin_infeasible = idx == 0
            break
        if sol.status != STATUS_OPTIMAL or sol.point is None:
            continue
        x_full = np.zeros(cp.num_vars)
        for i in range(cp.num_vars):
            if i != rec:
                x_full[i] = sol.point[remap[i]]
        # eigenvalue-trust cap: eps * ||G|| * machine-eps must stay well
        # below the interior margin for min_eig to be meaningful
        gnorm = max(
            (np.abs(G).max() for _, _, _, G in recover), default=1.0
        )
        cap = margin / (64.0 * np.finfo(float).eps * max(gnorm, 1.0))
        eps_val = _recover_recession(x_full, recover, cp.scalar_bounds.get(rec, s.delta), cap)
        if eps_val is None:
            continue
        x_full[rec] = eps_val
        blocks = _block_residuals(cp, x_full)
        if any(v < -s.feas_tol for v in blocks.values()):
            continue
        residuals = {
            "gap": sol.residuals.get("gap", np.nan),
            "blocks": blocks,
            "interior_margin": margin,
            "delta": s.delta,
            "recovered_eps": eps_val,
        }
        obj = float(cp.objective @ x_full)
        return Solution(STATUS_OPTIMAL, x_full, obj, residuals, sol.iterations,
                        f"reduced solve at margin {margin:g}")
    status = STATUS_INFEASIBLE if smallest_margin_infeasible else STATUS_NUMERICAL
    return Solution(status, None, None, {"attempts": attempts}, 0,
                    "recession reduction exhausted the margin ladder")


def check_solution(p: LmiProblem, point: DecisionPoint, tol: float) -> Tuple[bool, Dict[str, float]]:
    """Evaluate every block of the problem at the point and report min
    eigenvalues; passes iff all are >= -tol. Independent of the solver."""
    report = {}
    for b in p.blocks:
        report[b.name] = min_eig(p.eval_block(b, point))
    return all(v >= -tol for v in report.values()), report


def export_triplets(cp: ConicProgram) -> str:
    """Sparse triplet text: block id, row, col, variable id or CONST, value."""
    buf = io.StringIO()
    buf.write(f"vars {cp.num_vars}\n")
    for i, v in enumerate(cp.objective):
        if v != 0.0:
            buf.write(f"obj {i} {float(v)!r}\n")
    for i, lb in sorted(cp.scalar_bounds.items()):
        buf.write(f"bound {i} {float(lb)!r}\n")
    for bid, (name, const, coeffs) in enumerate(cp.psd_blocks):
        buf.write(f"psdblock {bid} {name} {const.shape[0]}\n")
        for r, c in np.argwhere(const != 0.0):
            if r <= c:
                buf.write(f"{bid} {r} {c} CONST {float(const[r, c])!r}\n")
        for i in sorted(coeffs):
            C = coeffs[i]
            for r, c in np.argwhere(C != 0.0):
                if r <= c:
                    buf.write(f"{bid} {r} {c} {i} {float(C[r, c])!r}\n")
    return buf.getvalue()
