"""Closed-loop simulation with stage-cost, Lyapunov, and constraint-margin
accounting. Margins are logged, never enforced: a bad certificate shows up
as a negative margin in the result instead of being masked by saturation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .lmi import ConstraintRows, Weights
from .plants import LurePlant, PolytopicPlant, interpolate_vertices, step_lti, step_lure

__all__ = [
    "SimResult",
    "SimulationDiverged",
    "simulate",
    "accumulated_cost",
    "tail_bound",
    "check_against_bound",
    "export_trajectory",
]

DIVERGENCE_LIMIT = 1e12
CONVERGENCE_THRESHOLD = 1e-3
COST_REL_TOL = 1e-6
COST_ABS_TOL = 1e-9


class SimulationDiverged(RuntimeError):
    def __init__(self, step: int, value: float):
        self.step = step
        self.value = value
        super().__init__(f"closed loop diverged at step {step} (|x| = {value:.3e})")


@dataclass(frozen=True)
class SimResult:
    """Trajectory log of one closed-loop run."""

    states: np.ndarray            # n x (steps+1)
    inputs: np.ndarray            # m x steps
    stage_costs: np.ndarray       # steps
    lyapunov: Optional[np.ndarray]        # steps+1 values of x'Px, when P given
    constraint_margins: Optional[np.ndarray]  # r x steps, 1 - (c x + d u)
    total_cost: float
    converged: bool
    convergence_step: Optional[int]
    resolve_log: tuple = ()       # (step, ok) events when online re-solving

    @property
    def steps(self) -> int:
        return self.inputs.shape[1]

    @property
    def min_margin(self) -> float:
        if self.constraint_margins is None or self.constraint_margins.size == 0:
            return np.inf
        return float(self.constraint_margins.min())


def _stepper(plant):
    if isinstance(plant, PolytopicPlant):
        member = interpolate_vertices(plant)
        return member, lambda x, u: step_lti(member, x, u)
    if isinstance(plant, LurePlant):
        return plant, lambda x, u: step_lure(plant, x, u)
    return plant, lambda x, u: step_lti(plant, x, u)


def simulate(
    plant,
    K,
    x0,
    steps: int,
    weights: Weights,
    rows: Optional[ConstraintRows] = None,
    P=None,
    resolve: Optional[Callable] = None,
    convergence_threshold: float = CONVERGENCE_THRESHOLD,
) -> SimResult:
    """Run u = K x for ``steps`` steps from x0 and log everything.

    ``resolve``, when given, is called with the current state before each
    step and may return a fresh gain; a None return or an exception keeps
    the previous gain and is recorded in resolve_log.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    plant, step_fn = _stepper(plant)
    n, m = plant.n, plant.m
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (m, n):
        raise ValueError(f"K has shape {K.shape}, expected ({m}, {n})")
    x = np.asarray(x0, dtype=float).ravel()
    if x.shape != (n,):
        raise ValueError(f"x0 has shape {x.shape}, expected ({n},)")
    P_arr = None if P is None else np.atleast_2d(np.asarray(P, dtype=float))

    X = np.zeros((n, steps + 1))
    U = np.zeros((m, steps))
    stage = np.zeros(steps)
    lyap = np.zeros(steps + 1) if P_arr is not None else None
    margins = np.zeros((rows.r, steps)) if rows is not None else None
    resolve_log = []

    X[:, 0] = x
    if lyap is not None:
        lyap[0] = x @ P_arr @ x
    converged = False
    conv_step: Optional[int] = None
    if np.abs(x).max() < convergence_threshold:
        converged, conv_step = True, 0
    for k in range(steps):
        if resolve is not None:
            try:
                newK = resolve(X[:, k])
                ok = newK is not None
                if ok:
                    newK = np.atleast_2d(np.asarray(newK, dtype=float))
                    if newK.shape != (m, n):
                        raise ValueError(f"resolve returned gain of shape {newK.shape}")
                    K = newK
            except Exception:
                ok = False
            resolve_log.append((k, ok))
        u = K @ X[:, k]
        U[:, k] = u
        stage[k] = X[:, k] @ weights.Q @ X[:, k] + u @ weights.R @ u
        if margins is not None:
            for i, (c, d) in enumerate(rows.rows):
                margins[i, k] = 1.0 - float((c @ X[:, k] + d @ u)[0])
        xn = step_fn(X[:, k], u)
        nrm = np.abs(xn).max()
        if not np.isfinite(nrm) or nrm > DIVERGENCE_LIMIT:
            raise SimulationDiverged(k + 1, nrm)
        X[:, k + 1] = xn
        if lyap is not None:
            lyap[k + 1] = xn @ P_arr @ xn
        if not converged and nrm < convergence_threshold:
            converged, conv_step = True, k + 1
    return SimResult(
        states=X,
        inputs=U,
        stage_costs=stage,
        lyapunov=lyap,
        constraint_margins=margins,
        total_cost=float(stage.sum()),
        converged=converged,
        convergence_step=conv_step,
        resolve_log=tuple(resolve_log),
    )


def accumulated_cost(sr: SimResult) -> float:
    """Finite-horizon cost sum; see tail_bound for the truncation estimate."""
    return sr.total_cost


def tail_bound(sr: SimResult) -> Optional[float]:
    """Crude bound on the truncated tail after convergence: the stage cost
    at the convergence step divided by (1 - estimated geometric decay)."""
    if not sr.converged or sr.convergence_step is None:
        return None
    k = min(sr.convergence_step, sr.steps - 1)
    c_k = float(sr.stage_costs[k])
    if c_k == 0.0:
        return 0.0
    later = sr.stage_costs[k:]
    ratios = [later[i + 1] / later[i] for i in range(len(later) - 1) if later[i] > 0]
    decay = min(max(ratios, default=0.0), 0.999)
    return c_k / (1.0 - decay)


def check_against_bound(sr: SimResult, alpha: float):
    """(J <= alpha within tolerance, slack alpha - J)."""
    J = sr.total_cost
    ok = J <= alpha * (1.0 + COST_REL_TOL) + COST_ABS_TOL
    return bool(ok), float(alpha - J)


def export_trajectory(sr: SimResult, path):
    """Columnar text: k, x entries, u entries, V(k), stage cost, min margin."""
    n = sr.states.shape[0]
    m = sr.inputs.shape[0]
    cols = ["k"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)]
    cols += ["lyapunov", "stage_cost", "min_margin"]
    with open(path, "w") as f:
        f.write(",".join(cols) + "\n")
        for k in range(sr.steps):
            row = [str(k)]
            row += [repr(float(v)) for v in sr.states[:, k]]
            row += [repr(float(v)) for v in sr.inputs[:, k]]
            row.append(repr(float(sr.lyapunov[k])) if sr.lyapunov is not None else "")
            row.append(repr(float(sr.stage_costs[k])))
            if sr.constraint_margins is not None and sr.constraint_margins.size:
                row.append(repr(float(sr.constraint_margins[:, k].min())))
            else:
                row.append("")
            f.write(",".join(row) + "\n")
        # terminal state row
        row = [str(sr.steps)]
        row += [repr(float(v)) for v in sr.states[:, sr.steps]]
        row += [""] * m
        row.append(repr(float(sr.lyapunov[sr.steps])) if sr.lyapunov is not None else "")
        row += ["", ""]
        f.write(",".join(row) + "\n")
