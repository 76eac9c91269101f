# Phase 2: reinforcement learning from self-generated rewards.
#
# The agent never sees the ground-truth labelling during training. It
# predicts labels with the learned model, drives the reward machine with
# those predictions, and (optionally) adds a potential-based shaping term
# built from the composed value function. Ground truth is only used to
# report the actual return.

from pathlib import Path

import numpy as np

from rmgcr.agent import AgentConfig, evaluate, train
from rmgcr.compose import make_composed_value_fn, rm_value_iteration
from rmgcr.geogrid import GridConfig, full_coverage_dataset, generate_dataset
from rmgcr.ground import train_label_model, train_pvfs_fqi
from rmgcr.rm import load_rm

GAMMA = 0.97
GAMMA_RM = 0.97 ** 10
TASKS = Path(__file__).resolve().parent.parent / "tasks"

cfg = GridConfig()
rm = load_rm(TASKS / "logic.rm")  # visit all six objects in color order

print("grounding...")
label_model = train_label_model(generate_dataset(cfg, 200, seed=1))
pvfs = train_pvfs_fqi(full_coverage_dataset(cfg), GAMMA)

cvf = make_composed_value_fn(rm, pvfs, GAMMA_RM)
rm_values = rm_value_iteration(rm, GAMMA_RM, GAMMA)

EPISODES = 300
print(f"training {EPISODES} episodes per mode, 3 seeds each\n")
print(f"{'shaping':<12} {'eval mean':>9}   sample eval returns")
for shaping in ("composed", "high-level", "none"):
    means = []
    for seed in (0, 1, 2):
        policy, report = train(
            cfg,
            rm,
            label_model,
            AgentConfig(shaping=shaping, episodes=EPISODES, seed=seed),
            cvf=cvf,
            rm_values=rm_values,
        )
        stats = evaluate(policy, cfg, rm, n_episodes=30, seed=7)
        means.append(stats["mean"])
    print(f"{shaping:<12} {np.mean(means):>9.3f}   {[round(m, 2) for m in means]}")

print()
print("The dense composed potential carries the agent through the long")
print("subgoal chain; the RM-state potential alone helps less, and the")
print("unshaped agent rarely stumbles onto the full sequence at all.")
