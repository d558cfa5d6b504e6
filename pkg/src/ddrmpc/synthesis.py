"""End-to-end synthesis pipelines: build the LMI problem from data, solve,
recover the gain and Lyapunov matrix, and verify every certificate the
solution claims (solver-independent LMI residuals, closed-loop spectral
radii over the consistent-system set, ellipsoid containment, simulated
Lyapunov decrease, and the cost bound).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .datalab import Dataset, ConsistentSet, consistent_set
from .lmi import (
    ConstraintRows,
    DecisionPoint,
    LmiProblem,
    Weights,
    build_lure,
    build_nominal,
    build_polytopic,
    ellipsoid_contained,
)
from .matcore import spectral_radius
from .plants import LtiPlant, LurePlant, Nonlinearity, sector_check
from .sdp import STATUS_OPTIMAL, SolverSettings, Solution, check_solution, solve_lmi
from .simloop import simulate, check_against_bound

__all__ = [
    "Controller",
    "CertificateReport",
    "SynthesisError",
    "InformativityNotEstablished",
    "recover_gain",
    "synthesize_nominal",
    "synthesize_polytopic",
    "synthesize_lure",
    "verify_certificate",
    "save_controller",
    "load_controller",
    "report_to_dict",
]

GAIN_RESIDUAL_TOL = 1e-7
N_COND_CAP = 1e10
RADIUS_MARGIN = 1e-4
CHECK_TOL = 1e-6
SAMPLE_COUNT = 20
SAMPLE_SEED = 20_25
LYAP_TOL_FACTOR = 1e-8


class SynthesisError(RuntimeError):
    pass


class InformativityNotEstablished(SynthesisError):
    """The solver could not certify the data informative; carries the
    solver verdict so callers can distinguish infeasible from numerical."""

    def __init__(self, solution: Solution):
        self.solution = solution
        super().__init__(
            f"informativity not established: solver status '{solution.status}' ({solution.message})"
        )


@dataclass(frozen=True)
class Controller:
    """Synthesized state feedback with its Lyapunov certificate."""

    K: np.ndarray
    P: np.ndarray
    alpha: float
    raw: DecisionPoint
    mode: str
    x0: np.ndarray

    def __post_init__(self):
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        x0 = np.asarray(self.x0, dtype=float).ravel()
        scaleL = max(1.0, float(np.abs(self.raw.L).max()))
        if np.abs(K @ self.raw.N - self.raw.L).max() > GAIN_RESIDUAL_TOL * scaleL:
            raise SynthesisError("gain residual K N - L too large")
        scaleP = max(1.0, float(np.abs(P).max()))
        if np.abs(P @ self.raw.N - self.alpha * np.eye(P.shape[0])).max() > GAIN_RESIDUAL_TOL * scaleP * max(1.0, self.alpha):
            raise SynthesisError("Lyapunov residual P N - alpha I too large")
        if np.linalg.eigvalsh(0.5 * (P + P.T))[0] <= 0:
            raise SynthesisError("P must be positive definite")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "P", 0.5 * (P + P.T))
        object.__setattr__(self, "x0", x0)


@dataclass
class CertificateReport:
    """Everything the verifier measured, plus the derived pass/fail flags."""

    solver_status: str
    objective: Optional[float]
    lmi_residuals: Dict[str, float] = field(default_factory=dict)
    lmi_ok: bool = False
    sample_radii: List[float] = field(default_factory=list)
    vertex_radii: List[float] = field(default_factory=list)
    radii_ok: bool = False
    ellipsoid_margins: List[float] = field(default_factory=list)
    containment_ok: bool = False
    lyapunov_max_violation: Optional[float] = None
    lyapunov_ok: bool = False
    sim_cost: Optional[float] = None
    cost_slack: Optional[float] = None
    cost_bound_ok: bool = False
    sector_min: Optional[float] = None
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(
            self.solver_status == STATUS_OPTIMAL
            and self.lmi_ok
            and self.radii_ok
            and self.containment_ok
            and self.lyapunov_ok
            and self.cost_bound_ok
        )


def recover_gain(dp: DecisionPoint):
    """K = L N^{-1} and P = alpha N^{-1} (symmetrized)."""
    cond = np.linalg.cond(dp.N)
    if not np.isfinite(cond) or cond > N_COND_CAP:
        raise SynthesisError(f"N is near singular (condition estimate {cond:.3e})")
    Ninv = np.linalg.inv(dp.N)
    K = dp.L @ Ninv
    P = dp.alpha * Ninv
    return K, 0.5 * (P + P.T)


def _closed_loop_radii(K: np.ndarray, members) -> List[float]:
    out = []
    for member in members:
        A = member[0] if isinstance(member, tuple) else member
        B = member[1] if isinstance(member, tuple) else None
        if B is None:
            raise SynthesisError("member must be an (A, B[, E]) tuple")
        out.append(spectral_radius(A + B @ K))
    return out


def verify_certificate(
    ctrl: Controller,
    problem: LmiProblem,
    consistent_sets: Sequence[ConsistentSet],
    rows: ConstraintRows,
    weights: Weights,
    settings: SolverSettings = SolverSettings(),
    sim_plant=None,
    sim_budget: int = 500,
    solution_status: str = STATUS_OPTIMAL,
    objective: Optional[float] = None,
    sample_count: int = SAMPLE_COUNT,
) -> CertificateReport:
    """Re-derive every claimed property of a synthesized controller.

    (a) LMI residuals at the raw decision point, bypassing the solver;
    (b) closed-loop spectral radii over sampled consistent systems;
    (c) ellipsoid containment margins against the constraint rows;
    (d) Lyapunov decrease along a simulation; (e) cost bound J <= alpha.
    Report-only: nothing raises on failed checks.
    """
    rep = CertificateReport(solver_status=solution_status, objective=objective)
    lmi_ok, residuals = check_solution(problem, ctrl.raw, CHECK_TOL)
    rep.lmi_residuals = residuals
    rep.lmi_ok = lmi_ok

    radii = []
    vertex_radii = []
    for cs in consistent_sets:
        members = cs.sample_members(sample_count, seed=SAMPLE_SEED)
        pairs = [cs.split(M)[:2] for M in members]
        rs = _closed_loop_radii(ctrl.K, pairs)
        radii.extend(rs)
        vertex_radii.append(spectral_radius(cs.split()[0] + cs.split()[1] @ ctrl.K))
    rep.sample_radii = radii
    rep.vertex_radii = vertex_radii
    rep.radii_ok = bool(radii) and max(radii) < 1.0 - RADIUS_MARGIN

    ok, margins = ellipsoid_contained(ctrl.P, ctrl.alpha, rows, ctrl.K, tol=CHECK_TOL)
    rep.ellipsoid_margins = margins.tolist()
    rep.containment_ok = bool(np.all(ok))

    plants = []
    if sim_plant is not None:
        plants.append(sim_plant)
    else:
        for cs in consistent_sets:
            A, B = cs.split()[:2]
            plants.append(LtiPlant(A, B))
        if ctrl.mode == "lure":
            rep.notes.append(
                "nonlinearity unavailable: simulation checks cover the linear part only"
            )
    lyap_viol = -np.inf
    cost_ok = True
    worst_slack = np.inf
    sim_cost = None
    sector_min = None
    lyap_tol = LYAP_TOL_FACTOR * max(ctrl.alpha, 1.0)
    for plant in plants:
        try:
            sr = simulate(plant, ctrl.K, ctrl.x0, sim_budget, weights, rows, P=ctrl.P)
        except Exception as exc:  # divergence counts as a failed certificate
            rep.notes.append(f"verification simulation failed: {exc}")
            rep.lyapunov_ok = False
            rep.cost_bound_ok = False
            return rep
        dv = np.diff(sr.lyapunov) + sr.stage_costs
        lyap_viol = max(lyap_viol, float(dv.max()))
        ok_cost, slack = check_against_bound(sr, ctrl.alpha)
        cost_ok = cost_ok and ok_cost
        worst_slack = min(worst_slack, slack)
        sim_cost = sr.total_cost if sim_cost is None else max(sim_cost, sr.total_cost)
        if isinstance(plant, LurePlant):
            z = plant.H @ sr.states
            w = plant.gamma(z)
            resid = w * (plant.beta @ z - w)
            smin = float(resid.min())
            sector_min = smin if sector_min is None else min(sector_min, smin)
    rep.lyapunov_max_violation = lyap_viol
    rep.lyapunov_ok = lyap_viol <= lyap_tol
    rep.sim_cost = sim_cost
    rep.cost_slack = worst_slack
    rep.cost_bound_ok = cost_ok
    rep.sector_min = sector_min
    return rep


def _finish(problem: LmiProblem, sol: Solution, mode: str, x0, consistent_sets, rows, weights,
            settings, sim_plant=None, sim_budget=500):
    if sol.status != STATUS_OPTIMAL or sol.point is None:
        raise InformativityNotEstablished(sol)
    dp = problem.unpack(sol.point)
    K, P = recover_gain(dp)
    ctrl = Controller(K, P, dp.alpha, dp, mode, np.asarray(x0, dtype=float).ravel())
    rep = verify_certificate(
        ctrl, problem, consistent_sets, rows, weights, settings,
        sim_plant=sim_plant, sim_budget=sim_budget,
        solution_status=sol.status, objective=sol.objective_value,
    )
    return ctrl, rep


def synthesize_nominal(
    dataset: Dataset,
    weights: Weights,
    rows: ConstraintRows,
    x0,
    settings: SolverSettings = SolverSettings(),
    sim_budget: int = 500,
):
    problem = build_nominal(dataset, weights, rows, x0)
    sol = solve_lmi(problem, settings)
    cs = consistent_set(dataset)
    return _finish(problem, sol, "nominal", x0, [cs], rows, weights, settings, sim_budget=sim_budget)


def synthesize_polytopic(
    datasets: Sequence[Dataset],
    weights: Weights,
    rows: ConstraintRows,
    x0,
    settings: SolverSettings = SolverSettings(),
    sim_budget: int = 500,
):
    problem = build_polytopic(list(datasets), weights, rows, x0)
    sol = solve_lmi(problem, settings)
    sets = [consistent_set(d) for d in datasets]
    return _finish(problem, sol, "polytopic", x0, sets, rows, weights, settings, sim_budget=sim_budget)


def synthesize_lure(
    dataset: Dataset,
    weights: Weights,
    rows: ConstraintRows,
    x0,
    H,
    beta,
    settings: SolverSettings = SolverSettings(),
    gamma: Optional[Nonlinearity] = None,
    sim_budget: int = 1000,
):
    """Sector synthesis; when the generating nonlinearity is on record it is
    sanity-checked against the sector bound before solving, and the
    verification simulation runs on the reconstructed Lur'e system."""
    if dataset.W_minus is None:
        raise SynthesisError("Lur'e synthesis requires a dataset with W_minus")
    sim_plant = None
    if gamma is not None:
        sc = sector_check(gamma, beta)
        if not sc.ok:
            raise SynthesisError(
                f"recorded nonlinearity violates the sector bound at z = {sc.violating_z!r}"
            )
    problem = build_lure(dataset, weights, rows, x0, H, beta)
    sol = solve_lmi(problem, settings)
    cs = consistent_set(dataset, lure=True)
    if gamma is not None:
        A, B, E = cs.split()
        sim_plant = LurePlant(A, B, E, H, gamma, beta)
    return _finish(problem, sol, "lure", x0, [cs], rows, weights, settings,
                   sim_plant=sim_plant, sim_budget=sim_budget)


# ---------------------------------------------------------------------------
# persistence

def controller_to_dict(ctrl: Controller, settings: Optional[SolverSettings] = None,
                       dataset_digests: Optional[list] = None) -> dict:
    d = {
        "mode": ctrl.mode,
        "K": ctrl.K.tolist(),
        "P": ctrl.P.tolist(),
        "alpha": ctrl.alpha,
        "N": ctrl.raw.N.tolist(),
        "L": ctrl.raw.L.tolist(),
        "eta": ctrl.raw.eta,
        "eps": ctrl.raw.eps,
        "x0": ctrl.x0.tolist(),
    }
    if settings is not None:
        d["settings"] = {
            "feas_tol": settings.feas_tol,
            "gap_tol": settings.gap_tol,
            "max_iters": settings.max_iters,
            "delta": settings.delta,
        }
    if dataset_digests:
        d["dataset_digests"] = list(dataset_digests)
    return d


def controller_from_dict(d: dict) -> Controller:
    dp = DecisionPoint(
        np.asarray(d["N"], dtype=float),
        np.asarray(d["L"], dtype=float),
        float(d["alpha"]),
        float(d["eta"]),
        float(d["eps"]),
    )
    return Controller(
        np.asarray(d["K"], dtype=float),
        np.asarray(d["P"], dtype=float),
        float(d["alpha"]),
        dp,
        d["mode"],
        np.asarray(d["x0"], dtype=float),
    )


def save_controller(ctrl: Controller, path, settings=None, dataset_digests=None):
    with open(path, "w") as f:
        json.dump(controller_to_dict(ctrl, settings, dataset_digests), f, indent=1)


def load_controller(path) -> Controller:
    with open(path) as f:
        return controller_from_dict(json.load(f))


def report_to_dict(rep: CertificateReport) -> dict:
    return {
        "passed": rep.passed,
        "solver_status": rep.solver_status,
        "objective": rep.objective,
        "lmi_ok": rep.lmi_ok,
        "lmi_residuals": rep.lmi_residuals,
        "sample_radii": rep.sample_radii,
        "vertex_radii": rep.vertex_radii,
        "radii_ok": rep.radii_ok,
        "ellipsoid_margins": rep.ellipsoid_margins,
        "containment_ok": rep.containment_ok,
        "lyapunov_max_violation": rep.lyapunov_max_violation,
        "lyapunov_ok": rep.lyapunov_ok,
        "sim_cost": rep.sim_cost,
        "cost_slack": rep.cost_slack,
        "cost_bound_ok": rep.cost_bound_ok,
        "sector_min": rep.sector_min,
        "notes": rep.notes,
    }
