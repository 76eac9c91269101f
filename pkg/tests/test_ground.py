import warnings
from dataclasses import replace

import numpy as np
import pytest

from rmgcr.geogrid import (
    GridConfig,
    GroundingDataset,
    Trajectory,
    encode_obs,
    full_coverage_dataset,
    generate_dataset,
    obs_key,
    reset,
    step,
    true_label,
)
from rmgcr.ground import (
    DegenerateAtomError,
    LabelModel,
    NonConvergenceWarning,
    load_label_model,
    load_pvfs,
    mc_targets,
    observation_features,
    predict_labels,
    save_label_model,
    save_pvfs,
    train_label_model,
    train_pvfs_fqi,
    train_pvfs_mc,
)
from rmgcr.logic import Not, Var
from rmgcr.rm import reachability_rm
from rmgcr.compose import exact_product_values

GAMMA = 0.97


def agent_at(cfg, cell):
    return replace(reset(cfg), agent=cell)


class TestFeatures:
    def test_product_features_flag_agent_cell_properties(self, desk_cfg):
        obs = encode_obs(agent_at(desk_cfg, (0, 0)))  # red triangle
        f = observation_features(obs)
        # first five entries: is the agent on a red/green/blue/triangle/circle cell
        assert f[:5].tolist() == [1.0, 0.0, 0.0, 1.0, 0.0]

    def test_feature_length(self, desk_cfg):
        obs = encode_obs(reset(desk_cfg))
        assert observation_features(obs).shape == (5 + obs.size,)


class TestLabelModel:
    def test_holdout_accuracy_high(self, desk_label_model):
        for atom, acc in desk_label_model.holdout_accuracy.items():
            assert acc >= 0.99, f"{atom}: {acc}"

    def test_predictions_match_ground_truth(self, desk_cfg, desk_label_model):
        s = agent_at(desk_cfg, (0, 0))
        assert predict_labels(desk_label_model, encode_obs(s)) == frozenset({"red", "triangle"})
        s = agent_at(desk_cfg, (3, 1))
        assert predict_labels(desk_label_model, encode_obs(s)) == frozenset()

    def test_degenerate_atom(self, desk_cfg):
        # agent pinned to an empty cell and never moving: every atom constant false
        cfg = GridConfig(agent_start=(3, 0), episode_len=0)
        ds = generate_dataset(cfg, 5, seed=0)
        with pytest.raises(DegenerateAtomError):
            train_label_model(ds)

    def test_tabular_memorizes(self, desk_cfg):
        ds = full_coverage_dataset(desk_cfg)
        model = train_label_model(ds, backend="tabular", holdout_fraction=0.0)
        for tr in ds.trajectories:
            for obs, lab in zip(tr.observations, tr.labels):
                assert predict_labels(model, obs) == lab

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            LabelModel(("red",), "tabular", threshold=1.5)
        with pytest.raises(ValueError):
            LabelModel(("red",), "tabular", threshold=0.0)

    def test_all_zero_observation_is_total(self, desk_cfg, desk_label_model):
        obs = np.zeros_like(encode_obs(reset(desk_cfg)))
        pred = predict_labels(desk_label_model, obs)
        assert pred <= set(desk_label_model.vocab)

    def test_unknown_backend(self, desk_cfg):
        ds = generate_dataset(desk_cfg, 5, seed=3)
        with pytest.raises(ValueError):
            train_label_model(ds, backend="quadratic")

    def test_save_load(self, desk_label_model, desk_cfg, tmp_path):
        path = tmp_path / "labels.json"
        save_label_model(desk_label_model, path)
        back = load_label_model(path)
        obs = encode_obs(agent_at(desk_cfg, (4, 4)))
        assert predict_labels(back, obs) == predict_labels(desk_label_model, obs)
        assert back.holdout_accuracy == desk_label_model.holdout_accuracy


class TestFqiCorridor:
    def test_distance_discounting(self, corridor_cfg, corridor_pvfs):
        # red triangle sits at the right end; value decays gamma^distance
        for col, k in [(2, 1), (1, 2), (0, 3)]:
            obs = encode_obs(agent_at(corridor_cfg, (0, col)))
            assert corridor_pvfs.value(("red", True), obs) == pytest.approx(GAMMA**k, abs=1e-9)

    def test_on_target_cell_takes_one_step(self, corridor_cfg, corridor_pvfs):
        # staying put (off-grid no-op) re-satisfies the literal next step
        obs = encode_obs(agent_at(corridor_cfg, (0, 3)))
        assert corridor_pvfs.value(("red", True), obs) == pytest.approx(GAMMA, abs=1e-9)

    def test_negation_one_step(self, corridor_cfg, corridor_pvfs):
        # from every cell some move (or stay) lands on a non-red cell next step
        for col in range(4):
            obs = encode_obs(agent_at(corridor_cfg, (0, col)))
            assert corridor_pvfs.value(("red", False), obs) == pytest.approx(GAMMA, abs=1e-9)

    def test_unreachable_literal_is_zero_without_warning(self, corridor_cfg):
        ds = full_coverage_dataset(corridor_cfg)
        with warnings.catch_warnings():
            warnings.simplefilter("error", NonConvergenceWarning)
            pvfs = train_pvfs_fqi(ds, GAMMA)
        for col in range(4):
            obs = encode_obs(agent_at(corridor_cfg, (0, col)))
            assert pvfs.value(("green", True), obs) == 0.0


class TestFqiExactness:
    def test_matches_exact_value_iteration(self, desk_cfg, desk_pvfs):
        cells = [(r, c) for r in range(6) for c in range(6)]
        for atom in desk_pvfs.vocab:
            for positive in (True, False):
                guard = Var(atom) if positive else Not(Var(atom))
                oracle = exact_product_values(desk_cfg, reachability_rm(desk_pvfs.vocab, guard), GAMMA)
                for cell in cells:
                    got = desk_pvfs.value((atom, positive), encode_obs(agent_at(desk_cfg, cell)))
                    assert got == pytest.approx(oracle.value_at(cell, 1), abs=1e-6)

    def test_values_clamped(self, desk_pvfs, desk_cfg):
        for lit in desk_pvfs.literals:
            v = desk_pvfs.value(lit, encode_obs(reset(desk_cfg)))
            assert 0.0 <= v <= 1.0

    def test_unseen_observation_reads_zero(self, desk_pvfs):
        assert desk_pvfs.value(("red", True), np.ones((6, 6, 6), dtype=np.uint8)) == 0.0

    def test_bootstrap_head_agrees_at_convergence(self, desk_cfg, desk_pvfs):
        est = desk_pvfs.estimators[("red", True)]
        for cell in [(0, 1), (2, 2), (5, 5)]:
            obs = encode_obs(agent_at(desk_cfg, cell))
            if obs_key(obs) in est.vnext:
                assert est.value_bootstrap(obs) == pytest.approx(est.value(obs), abs=1e-9)

    def test_gamma_validation(self, desk_cfg):
        ds = full_coverage_dataset(desk_cfg)
        with pytest.raises(ValueError):
            train_pvfs_fqi(ds, 1.0)

    def test_linear_backend_runs(self, corridor_cfg):
        ds = full_coverage_dataset(corridor_cfg)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonConvergenceWarning)
            pvfs = train_pvfs_fqi(ds, GAMMA, backend="linear", iters=60)
        obs = encode_obs(agent_at(corridor_cfg, (0, 2)))
        assert pvfs.value(("red", True), obs) == pytest.approx(GAMMA, abs=0.05)


class TestMonteCarloTargets:
    def test_definition(self):
        labels = [frozenset(), frozenset(), frozenset({"x"}), frozenset()]
        t = mc_targets(labels, ("x", True), GAMMA)
        assert t == pytest.approx([GAMMA**2, GAMMA, 0.0, 0.0])

    def test_never_satisfied(self):
        labels = [frozenset()] * 4
        assert mc_targets(labels, ("x", True), GAMMA) == [0.0] * 4

    def test_satisfaction_counts_from_next_step(self):
        # the literal holding *now* does not award gamma^0
        labels = [frozenset({"x"}), frozenset()]
        assert mc_targets(labels, ("x", True), GAMMA) == [0.0, 0.0]


def rightward_corridor_dataset(cfg):
    """Demonstration trajectories walking right from each start cell."""
    trajectories = []
    for col in range(cfg.width):
        s = agent_at(cfg, (0, col))
        observations, labels, actions = [encode_obs(s)], [true_label(s)], []
        for _ in range(cfg.width):
            s = step(s, 3)
            actions.append(3)
            observations.append(encode_obs(s))
            labels.append(true_label(s))
        trajectories.append(Trajectory(observations, actions, labels))
    return GroundingDataset(("red", "green", "blue", "triangle", "circle"), trajectories)


class TestMonteCarloRegression:
    def test_equals_fqi_on_demonstrations(self, corridor_cfg, corridor_pvfs):
        # trajectories that reach the literal as fast as possible make the
        # Monte-Carlo estimate coincide with the optimal fixed point
        ds = rightward_corridor_dataset(corridor_cfg)
        mc = train_pvfs_mc(ds, GAMMA)
        for col in range(4):
            obs = encode_obs(agent_at(corridor_cfg, (0, col)))
            assert mc.value(("red", True), obs) == pytest.approx(
                corridor_pvfs.value(("red", True), obs), abs=1e-9
            )

    def test_random_walk_mc_underestimates_optimum(self, corridor_cfg, corridor_pvfs):
        ds = generate_dataset(replace(corridor_cfg, episode_len=8), 200, seed=4)
        mc = train_pvfs_mc(ds, GAMMA)
        obs = encode_obs(agent_at(corridor_cfg, (0, 0)))
        assert mc.value(("red", True), obs) <= corridor_pvfs.value(("red", True), obs) + 1e-9


class TestSerialization:
    def test_pvf_roundtrip(self, desk_pvfs, desk_cfg, tmp_path):
        path = tmp_path / "pvfs.json"
        save_pvfs(desk_pvfs, path)
        back = load_pvfs(path)
        assert back.vocab == desk_pvfs.vocab
        assert back.gamma == desk_pvfs.gamma
        obs = encode_obs(agent_at(desk_cfg, (1, 1)))
        for lit in desk_pvfs.literals:
            assert back.value(lit, obs) == pytest.approx(desk_pvfs.value(lit, obs), abs=1e-12)

    def test_mc_pvf_roundtrip(self, corridor_cfg, tmp_path):
        ds = rightward_corridor_dataset(corridor_cfg)
        mc = train_pvfs_mc(ds, GAMMA)
        path = tmp_path / "mc.json"
        save_pvfs(mc, path)
        back = load_pvfs(path)
        obs = encode_obs(agent_at(corridor_cfg, (0, 1)))
        assert back.value(("red", True), obs) == pytest.approx(mc.value(("red", True), obs))
