"""Command-line front end for the grounding/composition/training pipeline.

Subcommands: gen-dataset, ground, compose-eval, train, eval, oracle.
Exit codes: 0 success, 2 usage, 3 validation (bad task files, mismatched
models), 4 runtime failures. The RMGCR_OUT_DIR environment variable
overrides directory-valued --out arguments.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import pathlib
import sys

import numpy as np

from . import agent, compose, geogrid, ground
from .geogrid import GridConfig
from .logic import ClauseLimitExceeded, FormulaSyntaxError, UnknownAtomError
from .rm import (
    DanglingStateError,
    NondeterministicGuardError,
    RewardMachine,
    RmSyntaxError,
    TransitionFromTerminalError,
    load_rm,
    reachability_rm,
)

EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4

VALIDATION_ERRORS = (
    RmSyntaxError,
    NondeterministicGuardError,
    DanglingStateError,
    TransitionFromTerminalError,
    FormulaSyntaxError,
    UnknownAtomError,
    ClauseLimitExceeded,
    geogrid.InfeasibleConfigError,
    ground.DegenerateAtomError,
    agent.ConfigMismatchError,
    compose.NoOutgoingEdgeError,
    compose.UnsatisfiableGuardError,
    compose.StateSpaceTooLargeError,
)


class ValidationFailure(ValueError):
    """Wrapper for validation problems detected by the CLI itself."""


def out_dir(flag_value) -> pathlib.Path:
    override = os.environ.get("RMGCR_OUT_DIR")
    path = pathlib.Path(override) if override else pathlib.Path(flag_value)
    path.mkdir(parents=True, exist_ok=True)
    return path


def load_grid_config(path, overrides: dict) -> GridConfig:
    if path is not None:
        with open(path) as fh:
            data = json.load(fh)
        cfg = geogrid.config_from_dict({**geogrid.config_to_dict(GridConfig()), **data})
    else:
        cfg = GridConfig()
    fields = {k: v for k, v in overrides.items() if v is not None}
    if fields:
        data = geogrid.config_to_dict(cfg)
        data.update(fields)
        cfg = geogrid.config_from_dict(data)
    return cfg


def load_models(models_dir):
    models_dir = pathlib.Path(models_dir)
    label_model = ground.load_label_model(models_dir / "label_model.json")
    pvfs = ground.load_pvfs(models_dir / "pvfs.json")
    return label_model, pvfs


def print_label_frequencies(ds) -> None:
    freqs = geogrid.label_frequencies(ds)
    print(f"{'atom':<10} {'frequency':>9}")
    for atom in ds.vocab:
        print(f"{atom:<10} {freqs[atom]:>9.4f}")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_gen_dataset(args) -> int:
    overrides = {
        "width": args.width,
        "height": args.height,
        "episode_len": args.episode_len,
        "layout_mode": args.layout,
        "seed": args.seed,
    }
    cfg = load_grid_config(args.config, overrides)
    ds = geogrid.generate_dataset(cfg, args.n, seed=cfg.seed)
    geogrid.save_dataset(ds, args.out)
    print(f"wrote {len(ds.trajectories)} trajectories to {args.out}")
    print_label_frequencies(ds)
    return 0


def cmd_ground(args) -> int:
    ds = geogrid.load_dataset(args.dataset)
    models = out_dir(args.out)
    label_model = ground.train_label_model(
        ds, backend=args.label_backend, threshold=args.threshold, seed=args.seed
    )
    if args.method == "fqi":
        pvfs = ground.train_pvfs_fqi(ds, args.gamma, iters=args.iters, backend=args.pvf_backend)
    else:
        pvfs = ground.train_pvfs_mc(ds, args.gamma)
    ground.save_label_model(label_model, models / "label_model.json")
    ground.save_pvfs(pvfs, models / "pvfs.json")
    metrics = {
        "holdout_accuracy": label_model.holdout_accuracy,
        "method": args.method,
        "gamma": args.gamma,
        "n_trajectories": len(ds.trajectories),
    }
    with open(models / "metrics.json", "w") as fh:
        json.dump(metrics, fh, sort_keys=True, indent=2)
    print(f"wrote label model and {args.method} value functions to {models}")
    for atom, acc in label_model.holdout_accuracy.items():
        print(f"held-out accuracy {atom:<10} {acc:.4f}")
    return 0


def _grid_cells(cfg: GridConfig):
    return [(r, c) for r in range(cfg.height) for c in range(cfg.width)]


def _obs_at(cfg: GridConfig, cell):
    from dataclasses import replace

    return geogrid.encode_obs(replace(geogrid.reset(cfg), agent=cell))


def cmd_compose_eval(args) -> int:
    rm = load_rm(args.rm)
    _, pvfs = load_models(args.models)
    cfg = load_grid_config(args.env, {})
    cvf = compose.make_composed_value_fn(rm, pvfs, args.gamma_rm, gamma=args.gamma)
    oracle = compose.exact_product_values(cfg, rm, args.gamma)
    max_dev = 0.0
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "col", "rm_state", "composed", "exact", "abs_deviation"])
        for cell in _grid_cells(cfg):
            obs = _obs_at(cfg, cell)
            for u in range(rm.num_states):
                if rm.is_terminal(u):
                    continue
                got = compose.composed_value(cvf, obs, u)
                want = oracle.value_at(cell, u)
                dev = abs(got - want)
                max_dev = max(max_dev, dev)
                writer.writerow([cell[0], cell[1], u, f"{got:.10f}", f"{want:.10f}", f"{dev:.10f}"])
    print(f"wrote composed values for {args.rm} to {args.out}")
    print(f"max absolute deviation from the exact oracle: {max_dev:.6f}")
    return 0


def _bounds_report(cfg: GridConfig, rm: RewardMachine, gamma: float) -> bool:
    """Check the under/over-estimation properties on the RM's own guards."""
    from .logic import And, Not, Or, TrueConst, FalseConst, Var, to_dnf, dnf_to_formula

    def clause_formula(clause):
        lits = tuple(Var(a) if pol else Not(Var(a)) for a, pol in clause)
        return lits[0] if len(lits) == 1 else And(lits)

    def exact(guard):
        table = compose.exact_product_values(cfg, reachability_rm(rm.vocab, guard), gamma)
        return {cell: table.value_at(cell, 1) for cell in _grid_cells(cfg)}

    literal_tables = {}

    def literal_exact(lit):
        if lit not in literal_tables:
            atom, pol = lit
            literal_tables[lit] = exact(Var(atom) if pol else Not(Var(atom)))
        return literal_tables[lit]

    all_ok = True
    for t in rm.transitions:
        if t.src == t.dst:
            continue
        dnf = to_dnf(t.guard)
        if isinstance(dnf, (TrueConst, FalseConst)):
            continue
        guard_exact = exact(dnf_to_formula(dnf))
        if len(dnf.clauses) >= 2:
            clause_tables = [exact(clause_formula(c)) for c in dnf.clauses]
            ok = all(
                max(tab[cell] for tab in clause_tables) <= guard_exact[cell] + 1e-9
                for cell in _grid_cells(cfg)
            )
            all_ok &= ok
            print(f"disjunction underestimation {dnf!r}: {'PASS' if ok else 'FAIL'}")
        for clause in dnf.clauses:
            if len(clause) < 2:
                continue
            clause_exact = exact(clause_formula(clause))
            ok = all(
                min(literal_exact(lit)[cell] for lit in clause) >= clause_exact[cell] - 1e-9
                for cell in _grid_cells(cfg)
            )
            all_ok &= ok
            lits = "&".join(("" if pol else "!") + a for a, pol in clause)
            print(f"conjunction overestimation {lits}: {'PASS' if ok else 'FAIL'}")
    return all_ok


def cmd_oracle(args) -> int:
    rm = load_rm(args.rm)
    cfg = load_grid_config(args.env, {})
    oracle = compose.exact_product_values(cfg, rm, args.gamma, max_states=args.max_states)
    cvf = None
    if args.models:
        _, pvfs = load_models(args.models)
        cvf = compose.make_composed_value_fn(rm, pvfs, args.gamma_rm, gamma=args.gamma)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["row", "col", "rm_state", "exact"]
            if cvf is not None:
                header += ["composed", "abs_deviation"]
            writer.writerow(header)
            for cell in _grid_cells(cfg):
                obs = _obs_at(cfg, cell) if cvf is not None else None
                for u in range(rm.num_states):
                    row = [cell[0], cell[1], u, f"{oracle.value_at(cell, u):.10f}"]
                    if cvf is not None and not rm.is_terminal(u):
                        got = compose.composed_value(cvf, obs, u)
                        row += [f"{got:.10f}", f"{abs(got - oracle.value_at(cell, u)):.10f}"]
                    writer.writerow(row)
        print(f"wrote oracle table to {args.out}")
    ok = _bounds_report(cfg, rm, args.gamma)
    print(f"bounds {'PASS' if ok else 'FAIL'}")
    return 0 if ok else EXIT_RUNTIME


def cmd_train(args) -> int:
    rm = load_rm(args.rm)
    label_model, pvfs = load_models(args.models)
    cfg = load_grid_config(args.env, {})
    out = out_dir(args.out)

    cvf = None
    rm_values = None
    if "composed" in args.shaping:
        cvf = compose.make_composed_value_fn(rm, pvfs, args.gamma_rm, gamma=args.gamma)
    if "high-level" in args.shaping:
        rm_values = compose.rm_value_iteration(rm, args.gamma_rm, args.gamma)

    summary = {
        "task": str(args.rm),
        "grid": geogrid.config_to_dict(cfg),
        "episodes": args.episodes,
        "gamma": args.gamma,
        "gamma_rm": args.gamma_rm,
        "seeds": args.seeds,
        "eval_episodes": args.eval_episodes,
        "results": {},
    }
    for shaping in args.shaping:
        per_seed = []
        for seed in args.seeds:
            agent_cfg = agent.AgentConfig(
                gamma=args.gamma,
                shaping=shaping,
                lam=args.lam,
                shaping_mode=args.shaping_mode,
                episodes=args.episodes,
                max_steps=args.max_steps,
                seed=seed,
            )
            policy, report = agent.train(
                cfg, rm, label_model, agent_cfg, cvf=cvf, rm_values=rm_values
            )
            csv_path = out / f"train_{shaping}_seed{seed}.csv"
            with open(csv_path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["episode", "perceived_return", "actual_return", "steps"])
                for i, ep in enumerate(report.episodes):
                    writer.writerow([i, ep.perceived_return, ep.actual_return, ep.steps])
            save_policy(policy, out / f"policy_{shaping}_seed{seed}.json")
            stats = agent.evaluate(
                policy, cfg, rm, args.eval_episodes, seed=args.eval_seed, max_steps=args.max_steps
            )
            per_seed.append(
                {
                    "seed": seed,
                    "eval_mean": stats["mean"],
                    "eval_stderr": stats["stderr"],
                    "episodes_to_threshold": agent.episodes_to_threshold(report, args.threshold),
                }
            )
        means = [r["eval_mean"] for r in per_seed]
        stderr = float(np.std(means, ddof=1) / np.sqrt(len(means))) if len(means) > 1 else 0.0
        summary["results"][shaping] = {
            "per_seed": per_seed,
            "mean": float(np.mean(means)),
            "stderr": stderr,
        }
        print(f"{shaping:<11} eval mean {np.mean(means):.3f} +/- {stderr:.3f} over {len(means)} seeds")
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
    print(f"wrote reports to {out}")
    return 0


def save_policy(policy: agent.GreedyPolicy, path) -> None:
    data = {f"{key.hex()}/{u}": q.tolist() for (key, u), q in sorted(policy.q.items())}
    with open(path, "w") as fh:
        json.dump(data, fh, sort_keys=True)


def load_policy(path) -> agent.GreedyPolicy:
    with open(path) as fh:
        data = json.load(fh)
    q = {}
    for key, values in data.items():
        obs_hex, _, u = key.rpartition("/")
        q[(bytes.fromhex(obs_hex), int(u))] = np.asarray(values)
    return agent.GreedyPolicy(q)


def cmd_eval(args) -> int:
    rm = load_rm(args.rm)
    cfg = load_grid_config(args.env, {})
    policy = agent.RandomPolicy() if args.random else load_policy(args.policy)
    stats = agent.evaluate(policy, cfg, rm, args.episodes, seed=args.seed, max_steps=args.max_steps)
    print(json.dumps({"mean": stats["mean"], "stderr": stats["stderr"]}, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# Argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rmgcr",
        description="Ground symbols offline, compose value functions, train shaped agents.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", help="generate a random-walk grounding dataset")
    p.add_argument("--out", required=True, help="output dataset file (line-delimited JSON)")
    p.add_argument("--config", help="grid config JSON file")
    p.add_argument("--n", type=int, default=500, help="number of trajectories")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--height", type=int, default=None)
    p.add_argument("--episode-len", type=int, default=None)
    p.add_argument("--layout", choices=["fixed", "randomized"], default=None)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("ground", help="train the label model and primitive value functions")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="model output directory")
    p.add_argument("--method", choices=["fqi", "mc"], default="fqi")
    p.add_argument("--gamma", type=float, default=0.97)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--label-backend", choices=["linear", "tabular"], default="linear")
    p.add_argument("--pvf-backend", choices=["tabular", "linear"], default="tabular")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_ground)

    p = sub.add_parser("compose-eval", help="dump composed values and oracle deviations as CSV")
    p.add_argument("--rm", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--env", help="grid config JSON file")
    p.add_argument("--out", required=True, help="output CSV file")
    p.add_argument("--gamma", type=float, default=0.97)
    p.add_argument("--gamma-rm", type=float, default=0.97**10)
    p.set_defaults(func=cmd_compose_eval)

    p = sub.add_parser("train", help="Q-learning with self-generated, optionally shaped rewards")
    p.add_argument("--rm", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--env", help="grid config JSON file")
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument(
        "--shaping",
        nargs="+",
        choices=["none", "composed", "high-level"],
        default=["composed"],
    )
    p.add_argument("--episodes", type=int, default=1000)
    p.add_argument("--max-steps", type=int, default=100)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--gamma", type=float, default=0.97)
    p.add_argument("--gamma-rm", type=float, default=0.97**10)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--shaping-mode", choices=["undiscounted", "discounted"], default="undiscounted")
    p.add_argument("--eval-episodes", type=int, default=100)
    p.add_argument("--eval-seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=0.95)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved (or random) policy under ground truth")
    p.add_argument("--rm", required=True)
    p.add_argument("--env", help="grid config JSON file")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--policy", help="policy JSON written by train")
    group.add_argument("--random", action="store_true", help="evaluate the uniform random policy")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=100)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", help="exact product values, deviations, and bound checks")
    p.add_argument("--rm", required=True)
    p.add_argument("--env", help="grid config JSON file")
    p.add_argument("--models", help="optional model directory for composed-value deviations")
    p.add_argument("--out", help="optional output CSV file")
    p.add_argument("--gamma", type=float, default=0.97)
    p.add_argument("--gamma-rm", type=float, default=0.97**10)
    p.add_argument("--max-states", type=int, default=2_000_000)
    p.set_defaults(func=cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "gen-dataset" and args.n < 1:
        parser.error("--n must be at least 1")
    try:
        return args.func(args)
    except VALIDATION_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValidationFailure as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
