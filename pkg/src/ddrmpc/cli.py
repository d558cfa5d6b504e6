"""Command-line driver: data generation, synthesis, verification, simulation,
and one-command reproduction of the two bundled benchmark studies.

Every command writes a manifest recording the effective parameters and the
sha256 digests of its inputs, so any output can be regenerated without the
original shell history. Exit code 0 means every certificate the command was
asked for passed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .datalab import (
    consistent_set,
    export_trace,
    load_dataset,
    regressor_rank,
    run_experiment,
    save_dataset,
    uniform_inputs,
)
from .lmi import (
    ConstraintRows,
    Weights,
    build_lure,
    build_nominal,
    build_polytopic,
    input_box_rows,
    make_constraint_rows,
    state_box_rows,
)
from .matcore import spectral_radius
from .plants import (
    LurePlant,
    PolytopicPlant,
    get_nonlinearity,
    interpolate_vertices,
    load_plant,
    save_plant,
)
from .presets import get_preset
from .sdp import SolverSettings
from .simloop import export_trajectory, simulate, check_against_bound
from .synthesis import (
    InformativityNotEstablished,
    load_controller,
    report_to_dict,
    save_controller,
    synthesize_lure,
    synthesize_nominal,
    synthesize_polytopic,
    verify_certificate,
)

EXIT_OK = 0
EXIT_FAILED = 1


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        h.update(f.read())
    return h.hexdigest()


def _write_manifest(out_dir, command, params, inputs, outputs):
    manifest = {
        "tool": "ddrmpc",
        "version": __version__,
        "command": command,
        "params": params,
        "inputs": {str(p): _digest(p) for p in inputs if os.path.exists(str(p))},
        "outputs": [str(o) for o in outputs],
    }
    path = os.path.join(out_dir, f"{command}.manifest.json")
    with open(path, "w") as f:
        json.dump(manifest, f, indent=1)
    return path


def _vector(text: str) -> np.ndarray:
    return np.asarray([float(v) for v in text.split(",")], dtype=float)


def _settings(args) -> SolverSettings:
    return SolverSettings(feas_tol=args.tol_feas, gap_tol=args.tol_gap, delta=args.delta)


def _load_config(path) -> dict:
    with open(path) as f:
        return json.load(f)


def _rows_from_config(cfg: dict, n: int, m: int) -> ConstraintRows:
    state_rows = np.zeros((0, n))
    input_rows = np.zeros((0, m))
    if cfg.get("input_box") is not None:
        box = cfg["input_box"]
        input_rows = input_box_rows(box if np.isscalar(box) else [tuple(b) for b in box], m)
    if cfg.get("state_boxes"):
        boxes = {int(k) - 1: tuple(v) for k, v in cfg["state_boxes"].items()}
        state_rows = state_box_rows(boxes, n)
    return make_constraint_rows(state_rows, input_rows, n, m)


def _weights_from_config(cfg: dict) -> Weights:
    return Weights(np.asarray(cfg["Q"], dtype=float), np.asarray(cfg["R"], dtype=float))


# ---------------------------------------------------------------------------
# gen

def cmd_gen(args) -> int:
    plant = load_plant(args.plant)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)) or ".", exist_ok=True)
    m = plant.m
    if args.zero_input:
        inputs = np.zeros((m, args.length))
    else:
        inputs = uniform_inputs(m, args.length, args.amplitude, args.seed)
    x0 = _vector(args.x0) if args.x0 else np.zeros(plant.n)
    if args.record_w and not isinstance(plant, LurePlant):
        print("note: --record-w has no effect on a plant without a nonlinearity channel",
              file=sys.stderr)
    ds = run_experiment(plant, x0, inputs, record_w=args.record_w, seed=args.seed,
                        provenance=f"gen from {os.path.basename(args.plant)}")
    save_dataset(ds, args.out)
    rank = regressor_rank(ds)
    print(f"dataset written to {args.out}: T={ds.T} n={ds.n} m={ds.m} p={ds.p} regressor_rank={rank}")
    if args.trace:
        export_trace(ds, args.trace)
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    _write_manifest(out_dir, "gen",
                    {"plant": args.plant, "x0": args.x0, "T": args.length, "seed": args.seed,
                     "amplitude": args.amplitude, "zero_input": args.zero_input,
                     "record_w": args.record_w, "out": args.out},
                    [args.plant], [args.out])
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth

def _synthesize(mode, datasets, cfg, settings):
    if mode != "polytopic" and len(datasets) != 1:
        raise ValueError(f"{mode} mode takes exactly one dataset, got {len(datasets)}")
    weights = _weights_from_config(cfg)
    n, m = datasets[0].n, datasets[0].m
    rows = _rows_from_config(cfg, n, m)
    x0 = np.asarray(cfg["x0"], dtype=float)
    if mode == "nominal":
        return synthesize_nominal(datasets[0], weights, rows, x0, settings), weights, rows
    if mode == "polytopic":
        return synthesize_polytopic(datasets, weights, rows, x0, settings), weights, rows
    if mode == "lure":
        H = np.asarray(cfg["H"], dtype=float)
        beta = np.asarray(cfg["beta"], dtype=float)
        gamma = get_nonlinearity(cfg["nonlinearity"]) if cfg.get("nonlinearity") else None
        return (
            synthesize_lure(datasets[0], weights, rows, x0, H, beta, settings, gamma=gamma),
            weights,
            rows,
        )
    raise ValueError(f"unknown mode {mode!r}")


def cmd_synth(args) -> int:
    cfg = _load_config(args.config)
    datasets = [load_dataset(p) for p in args.data]
    if args.mode == "lure" and datasets[0].W_minus is None:
        print("error: lure mode requires a dataset with the measured nonlinearity channel",
              file=sys.stderr)
        return EXIT_FAILED
    settings = _settings(args)
    os.makedirs(args.out, exist_ok=True)
    try:
        (ctrl, rep), weights, rows = _synthesize(args.mode, datasets, cfg, settings)
    except InformativityNotEstablished as exc:
        print(f"synthesis failed: {exc}", file=sys.stderr)
        diag = {"status": exc.solution.status, "message": exc.solution.message,
                "residuals": {k: v for k, v in exc.solution.residuals.items() if k != "blocks"}}
        with open(os.path.join(args.out, "report.json"), "w") as f:
            json.dump({"passed": False, "informativity": "not established", **diag}, f, indent=1)
        return EXIT_FAILED
    ctrl_path = os.path.join(args.out, "controller.json")
    rep_path = os.path.join(args.out, "report.json")
    save_controller(ctrl, ctrl_path, settings, [_digest(p) for p in args.data])
    with open(rep_path, "w") as f:
        json.dump({"informativity": "established" if rep.passed else "not confirmed",
                   **report_to_dict(rep)}, f, indent=1)
    print(f"mode={args.mode} status={rep.solver_status} alpha={ctrl.alpha:.6g} "
          f"K={np.array2string(ctrl.K, precision=6)}")
    print(f"certificates {'PASSED' if rep.passed else 'FAILED'}; report at {rep_path}")
    _write_manifest(args.out, "synth",
                    {"mode": args.mode, "data": list(args.data), "config": args.config,
                     "tol_feas": args.tol_feas, "tol_gap": args.tol_gap, "delta": args.delta},
                    list(args.data) + [args.config], [ctrl_path, rep_path])
    return EXIT_OK if rep.passed else EXIT_FAILED


# ---------------------------------------------------------------------------
# verify

def cmd_verify(args) -> int:
    cfg = _load_config(args.config)
    datasets = [load_dataset(p) for p in args.data]
    ctrl = load_controller(args.controller)
    weights = _weights_from_config(cfg)
    n, m = datasets[0].n, datasets[0].m
    rows = _rows_from_config(cfg, n, m)
    settings = _settings(args)
    mode = ctrl.mode
    if mode == "polytopic":
        problem = build_polytopic(datasets, weights, rows, ctrl.x0)
        sets = [consistent_set(d) for d in datasets]
        sim_plant = None
    elif mode == "lure":
        H = np.asarray(cfg["H"], dtype=float)
        beta = np.asarray(cfg["beta"], dtype=float)
        problem = build_lure(datasets[0], weights, rows, ctrl.x0, H, beta)
        sets = [consistent_set(datasets[0], lure=True)]
        sim_plant = None
        if cfg.get("nonlinearity"):
            A, B, E = sets[0].split()
            sim_plant = LurePlant(A, B, E, H, get_nonlinearity(cfg["nonlinearity"]), beta)
    else:
        problem = build_nominal(datasets[0], weights, rows, ctrl.x0)
        sets = [consistent_set(datasets[0])]
        sim_plant = None
    rep = verify_certificate(ctrl, problem, sets, rows, weights, settings,
                             sim_plant=sim_plant, sim_budget=args.steps,
                             objective=ctrl.alpha)
    os.makedirs(args.out, exist_ok=True)
    rep_path = os.path.join(args.out, "verify_report.json")
    with open(rep_path, "w") as f:
        json.dump(report_to_dict(rep), f, indent=1)
    print(f"verify: {'PASSED' if rep.passed else 'FAILED'}; report at {rep_path}")
    _write_manifest(args.out, "verify",
                    {"controller": args.controller, "data": list(args.data),
                     "config": args.config, "steps": args.steps},
                    [args.controller, args.config] + list(args.data), [rep_path])
    return EXIT_OK if rep.passed else EXIT_FAILED


# ---------------------------------------------------------------------------
# sim

def cmd_sim(args) -> int:
    plant = load_plant(args.plant)
    ctrl = load_controller(args.controller)
    n = plant.n
    if ctrl.K.shape[1] != n:
        print(f"error: controller is for n={ctrl.K.shape[1]}, plant has n={n}", file=sys.stderr)
        return EXIT_FAILED
    cfg = _load_config(args.config) if args.config else None
    if cfg:
        weights = _weights_from_config(cfg)
        rows = _rows_from_config(cfg, n, plant.m)
    else:
        weights = Weights(np.eye(n), np.eye(plant.m))
        rows = ConstraintRows(())
    x0 = _vector(args.x0) if args.x0 else ctrl.x0
    sr = simulate(plant, ctrl.K, x0, args.steps, weights, rows, P=ctrl.P)
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    os.makedirs(out_dir, exist_ok=True)
    export_trajectory(sr, args.out)
    ok_cost, slack = check_against_bound(sr, ctrl.alpha)
    min_margin = sr.min_margin
    print(
        f"J={sr.total_cost:.6g} alpha={ctrl.alpha:.6g} slack={slack:.6g} "
        f"converged={sr.converged} step={sr.convergence_step} min_margin={min_margin:.6g}"
    )
    if args.plot:
        _plot_trajectory(sr, os.path.splitext(args.out)[0] + ".svg")
    _write_manifest(out_dir, "sim",
                    {"controller": args.controller, "plant": args.plant, "x0": args.x0,
                     "steps": args.steps, "out": args.out},
                    [args.controller, args.plant] + ([args.config] if args.config else []),
                    [args.out])
    margins_ok = rows.r == 0 or min_margin >= -1e-8
    return EXIT_OK if (ok_cost and margins_ok and sr.converged) else EXIT_FAILED


def _plot_trajectory(sr, path):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not available; skipping plot", file=sys.stderr)
        return
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    ks = np.arange(sr.states.shape[1])
    for i in range(sr.states.shape[0]):
        ax1.plot(ks, sr.states[i], label=f"x{i + 1}")
    ax1.set_ylabel("state")
    ax1.legend(loc="best", fontsize=8)
    for i in range(sr.inputs.shape[0]):
        ax2.step(np.arange(sr.steps), sr.inputs[i], where="post", label=f"u{i + 1}")
    ax2.set_ylabel("input")
    ax2.set_xlabel("step")
    ax2.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    print(f"plot written to {path}")


# ---------------------------------------------------------------------------
# repro

def _preset_config(preset) -> dict:
    cfg = {
        "Q": np.asarray(preset["Q"]).tolist(),
        "R": np.asarray(preset["R"]).tolist(),
        "input_box": preset["input_box"],
        "state_boxes": {str(k + 1): list(v) for k, v in preset["state_boxes"].items()},
        "x0": np.asarray(preset["x0"]).tolist(),
    }
    plant = preset["plant"]
    if isinstance(plant, LurePlant):
        cfg["H"] = plant.H.tolist()
        cfg["beta"] = plant.beta.tolist()
        cfg["nonlinearity"] = plant.gamma.name
    return cfg


def cmd_repro(args) -> int:
    preset = get_preset(args.example)
    out = args.out
    os.makedirs(out, exist_ok=True)
    plant = preset["plant"]
    settings = _settings(args)
    weights = Weights(preset["Q"], preset["R"])
    n, m = plant.n, plant.m
    cfg = _preset_config(preset)
    rows = _rows_from_config(cfg, n, m)
    x0 = preset["x0"]
    seed = args.seed if args.seed is not None else None

    # --- gen ---
    plant_path = os.path.join(out, "plant.json")
    save_plant(plant, plant_path)
    datasets = []
    data_paths = []
    if isinstance(plant, PolytopicPlant):
        members = [interpolate_vertices(plant, np.eye(plant.zeta)[j]) for j in range(plant.zeta)]
    else:
        members = [plant]
    seeds = preset["seeds"] if seed is None else tuple(seed + j for j in range(len(members)))
    for j, (member, sd) in enumerate(zip(members, seeds)):
        inputs = uniform_inputs(m, preset["T"], preset["input_amplitude"], sd)
        ds = run_experiment(member, preset["experiment_x0"], inputs,
                            record_w=isinstance(member, LurePlant), seed=sd,
                            provenance=f"repro {args.example} vertex {j + 1}")
        path = os.path.join(out, f"dataset_{j + 1}.json")
        save_dataset(ds, path)
        export_trace(ds, os.path.join(out, f"dataset_{j + 1}.csv"))
        datasets.append(ds)
        data_paths.append(path)
        print(f"[gen] dataset {j + 1}: T={ds.T} seed={sd} regressor_rank={regressor_rank(ds)}")

    summary = {"example": args.example, "preset_version": preset["version"],
               "seeds": list(seeds), "stages": {}}

    # --- synth (or adopt the published reference gain) ---
    if args.use_paper_gain:
        K = preset["reference_gain"]
        print(f"[synth] skipped; verifying the published reference gain K={K.tolist()}")
        ctrl = None
    else:
        try:
            if preset["mode"] == "polytopic":
                ctrl, rep = synthesize_polytopic(datasets, weights, rows, x0, settings,
                                                 sim_budget=preset["sim_steps"])
            else:
                ctrl, rep = synthesize_lure(
                    datasets[0], weights, rows, x0, plant.H, plant.beta, settings,
                    gamma=plant.gamma, sim_budget=preset["sim_steps"],
                )
        except InformativityNotEstablished as exc:
            print(f"[synth] FAILED: {exc}", file=sys.stderr)
            summary["stages"]["synth"] = {"passed": False, "status": exc.solution.status}
            with open(os.path.join(out, "summary.json"), "w") as f:
                json.dump(summary, f, indent=1)
            return EXIT_FAILED
        K = ctrl.K
        ctrl_path = os.path.join(out, "controller.json")
        save_controller(ctrl, ctrl_path, settings, [_digest(p) for p in data_paths])
        with open(os.path.join(out, "report.json"), "w") as f:
            json.dump(report_to_dict(rep), f, indent=1)
        print(f"[synth] status={rep.solver_status} alpha={ctrl.alpha:.6g} "
              f"K={np.array2string(K, precision=6)}")
        summary["stages"]["synth"] = {
            "passed": rep.passed,
            "alpha": ctrl.alpha,
            "K": K.tolist(),
            "sample_radii_max": max(rep.sample_radii) if rep.sample_radii else None,
        }

    # --- verify: closed-loop radii at the data-generating systems ---
    radii = []
    if isinstance(plant, PolytopicPlant):
        for j, (Aj, Bj) in enumerate(plant.vertices):
            radii.append(spectral_radius(Aj + Bj @ K))
            print(f"[verify] vertex {j + 1} closed-loop spectral radius {radii[-1]:.6f}")
    else:
        radii.append(spectral_radius(plant.A + plant.B @ K))
        print(f"[verify] linear-part closed-loop spectral radius {radii[-1]:.6f}")
    summary["stages"]["verify"] = {"radii": radii, "stable": max(radii) < 1.0}

    # --- sim on the evaluation member ---
    steps = args.steps if args.steps else preset["sim_steps"]
    resolve = None
    if args.resolve_online and ctrl is not None:
        resolve = _online_resolver(preset, datasets, weights, rows, settings)
    sim_plant = plant
    sr = simulate(sim_plant, K, x0, steps, weights, rows,
                  P=(ctrl.P if ctrl is not None else None), resolve=resolve)
    traj_path = os.path.join(out, "trajectory.csv")
    export_trajectory(sr, traj_path)
    if args.plot:
        _plot_trajectory(sr, os.path.join(out, "trajectory.svg"))
    min_margin = sr.min_margin
    sim_summary = {
        "steps": steps,
        "converged": sr.converged,
        "convergence_step": sr.convergence_step,
        "J": sr.total_cost,
        "min_constraint_margin": min_margin,
    }
    claims_ok = sr.converged and min_margin >= -1e-8
    if ctrl is not None:
        ok_cost, slack = check_against_bound(sr, ctrl.alpha)
        sim_summary.update({"alpha": ctrl.alpha, "cost_slack": slack, "cost_bound_ok": ok_cost})
        claims_ok = claims_ok and ok_cost
    if isinstance(plant, LurePlant):
        z = plant.H @ sr.states
        w = plant.gamma(z)
        sector_min = float((w * (plant.beta @ z - w)).min())
        sim_summary["sector_min"] = sector_min
        claims_ok = claims_ok and sector_min >= -1e-12
    print(f"[sim] J={sr.total_cost:.6g} converged={sr.converged} at {sr.convergence_step} "
          f"min_margin={min_margin:.3g}")
    summary["stages"]["sim"] = sim_summary
    summary["claims"] = {
        "stabilized": bool(max(radii) < 1.0 and sr.converged),
        "constraints_satisfied": bool(min_margin >= -1e-8),
        "cost_below_alpha": bool(sim_summary.get("cost_bound_ok", True)),
    }
    all_ok = all(summary["claims"].values()) and (
        args.use_paper_gain or summary["stages"]["synth"]["passed"]
    )
    summary["passed"] = bool(all_ok)
    with open(os.path.join(out, "summary.json"), "w") as f:
        json.dump(summary, f, indent=1)
    _write_manifest(out, "repro",
                    {"example": args.example, "seed": args.seed, "steps": args.steps,
                     "use_paper_gain": args.use_paper_gain,
                     "resolve_online": args.resolve_online},
                    [], [plant_path, traj_path] + data_paths)
    print(f"[repro] {'PASSED' if all_ok else 'FAILED'}; summary at {os.path.join(out, 'summary.json')}")
    return EXIT_OK if all_ok else EXIT_FAILED


def _online_resolver(preset, datasets, weights, rows, settings):
    """Best-effort per-step re-synthesis at the current state. No
    recursive-feasibility guarantee: failures fall back to the last gain."""

    def resolve(x):
        try:
            if preset["mode"] == "polytopic":
                ctrl, _ = synthesize_polytopic(datasets, weights, rows, x, settings, sim_budget=1)
            else:
                plant = preset["plant"]
                ctrl, _ = synthesize_lure(datasets[0], weights, rows, x, plant.H, plant.beta,
                                          settings, gamma=plant.gamma, sim_budget=1)
            return ctrl.K
        except Exception:
            return None

    return resolve


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ddrmpc", allow_abbrev=False,
                                 description="data-driven robust MPC synthesis toolkit")
    ap.add_argument("--tol-feas", type=float, default=1e-8, help="solver feasibility tolerance")
    ap.add_argument("--tol-gap", type=float, default=1e-8, help="solver gap tolerance")
    ap.add_argument("--delta", type=float, default=1e-6, help="strictness margin knob")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="run an open-loop experiment and record a dataset")
    g.add_argument("--plant", required=True)
    g.add_argument("--x0", default=None, help="comma-separated initial state (default zeros)")
    g.add_argument("--length", type=int, required=True, help="experiment length")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--amplitude", type=float, default=1.0, help="uniform input amplitude")
    g.add_argument("--zero-input", action="store_true", help="zero excitation (rank-deficient data)")
    g.add_argument("--record-w", action="store_true", help="record the nonlinearity channel")
    g.add_argument("--trace", default=None, help="also write a columnar trace CSV")
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen)

    s = sub.add_parser("synth", help="synthesize a controller from datasets")
    s.add_argument("--mode", choices=["nominal", "polytopic", "lure"], required=True)
    s.add_argument("--data", nargs="+", required=True)
    s.add_argument("--config", required=True, help="JSON with Q, R, boxes, x0 (H, beta for lure)")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_synth)

    v = sub.add_parser("verify", help="re-verify a controller's certificates against data")
    v.add_argument("--controller", required=True)
    v.add_argument("--data", nargs="+", required=True)
    v.add_argument("--config", required=True)
    v.add_argument("--steps", type=int, default=500)
    v.add_argument("--out", required=True)
    v.set_defaults(fn=cmd_verify)

    m = sub.add_parser("sim", help="simulate a controller on a plant")
    m.add_argument("--controller", required=True)
    m.add_argument("--plant", required=True)
    m.add_argument("--config", default=None, help="weights/constraints for cost accounting")
    m.add_argument("--x0", default=None)
    m.add_argument("--steps", type=int, default=1000)
    m.add_argument("--plot", action="store_true")
    m.add_argument("--out", required=True)
    m.set_defaults(fn=cmd_sim)

    r = sub.add_parser("repro", help="reproduce a bundled benchmark study end to end")
    r.add_argument("example", choices=["one", "two"])
    r.add_argument("--seed", type=int, default=None, help="override the preset seeds")
    r.add_argument("--steps", type=int, default=None, help="override simulation length")
    r.add_argument("--use-paper-gain", action="store_true",
                   help="skip synthesis and verify the published reference gain")
    r.add_argument("--resolve-online", action="store_true",
                   help="re-synthesize at every step (best effort, no feasibility guarantee)")
    r.add_argument("--plot", action="store_true")
    r.add_argument("--out", required=True)
    r.set_defaults(fn=cmd_repro)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
