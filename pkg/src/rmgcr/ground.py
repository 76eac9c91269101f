"""Offline grounding: labelling-function classifiers and primitive value functions.

Primitive value functions (PVFs) estimate, for every literal (an atom or
its negation), the optimal discounted value of reaching a state whose
label satisfies the literal. Satisfaction is evaluated on the *next*
state, so a guaranteed one-step satisfaction is worth gamma and a state
k steps away is worth gamma^k.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geogrid import GroundingDataset, obs_key
from .logic import Literal

N_ACTIONS = 4

FEATURE_MAP_VERSION = 1


class DegenerateAtomError(ValueError):
    def __init__(self, name: str):
        super().__init__(f"atom {name!r} is constant across the dataset")
        self.name = name


class NonConvergenceWarning(UserWarning):
    pass


def observation_features(obs: np.ndarray) -> np.ndarray:
    """Per-cell agent*property products (one per property channel) plus raw channels.

    The product features make each grid proposition exactly linearly
    realizable: the product for channel i sums to 1 iff the agent stands
    on a cell with property i.
    """
    o = obs.astype(np.float64)
    agent = o[:, :, -1]
    products = (o[:, :, :-1] * agent[:, :, None]).sum(axis=(0, 1))
    return np.concatenate([products, o.reshape(-1)])


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -60, 60)))


# ---------------------------------------------------------------------------
# Labelling function


@dataclass
class LabelModel:
    vocab: tuple[str, ...]
    backend: str  # "linear" | "tabular"
    threshold: float = 0.5
    weights: Optional[np.ndarray] = None  # (n_atoms, n_features), linear backend
    bias: Optional[np.ndarray] = None
    table: Optional[dict] = None  # obs key -> score vector, tabular backend
    holdout_accuracy: dict = field(default_factory=dict)
    feature_version: int = FEATURE_MAP_VERSION

    def __post_init__(self):
        if not (0.0 < self.threshold < 1.0):
            raise ValueError("threshold must lie strictly inside (0, 1)")

    def scores(self, obs: np.ndarray) -> np.ndarray:
        if self.backend == "linear":
            f = observation_features(obs)
            return _sigmoid(self.weights @ f + self.bias)
        key = obs_key(obs)
        if self.table is not None and key in self.table:
            return np.asarray(self.table[key], dtype=np.float64)
        return np.zeros(len(self.vocab))


def predict_labels(model: LabelModel, obs: np.ndarray) -> frozenset[str]:
    scores = model.scores(obs)
    return frozenset(a for a, s in zip(model.vocab, scores) if s >= model.threshold)


def _check_degenerate(ds: GroundingDataset) -> None:
    positives = {a: 0 for a in ds.vocab}
    total = 0
    for tr in ds.trajectories:
        for lab in tr.labels:
            total += 1
            for a in lab:
                positives[a] += 1
    for a in ds.vocab:
        if positives[a] == 0 or positives[a] == total:
            raise DegenerateAtomError(a)


def train_label_model(
    ds: GroundingDataset,
    backend: str = "linear",
    lr: float = 1.0,
    epochs: int = 300,
    holdout_fraction: float = 0.1,
    threshold: float = 0.5,
    seed: int = 0,
) -> LabelModel:
    """Fit per-atom binary classifiers on the dataset's labelled observations.

    Linear backend: full-batch gradient descent on binary cross-entropy.
    Tabular backend: memorize observation -> label. Held-out accuracy is
    measured on a trailing trajectory split and stored on the model.
    """
    _check_degenerate(ds)
    n_holdout = int(len(ds.trajectories) * holdout_fraction)
    train_trs = ds.trajectories[: len(ds.trajectories) - n_holdout] if n_holdout else ds.trajectories
    eval_trs = ds.trajectories[len(ds.trajectories) - n_holdout:] if n_holdout else ds.trajectories

    if backend == "tabular":
        table: dict = {}
        for tr in train_trs:
            for obs, lab in zip(tr.observations, tr.labels):
                table[obs_key(obs)] = np.array([1.0 if a in lab else 0.0 for a in ds.vocab])
        model = LabelModel(ds.vocab, "tabular", threshold=threshold, table=table)
    elif backend == "linear":
        xs = []
        ys = []
        for tr in train_trs:
            for obs, lab in zip(tr.observations, tr.labels):
                xs.append(observation_features(obs))
                ys.append([1.0 if a in lab else 0.0 for a in ds.vocab])
        x = np.asarray(xs)
        y = np.asarray(ys)
        n, d = x.shape
        rng = np.random.default_rng(seed)
        w = rng.normal(scale=0.01, size=(len(ds.vocab), d))
        b = np.zeros(len(ds.vocab))
        for _ in range(epochs):
            p = _sigmoid(x @ w.T + b)  # (n, atoms)
            grad = (p - y) / n
            w -= lr * grad.T @ x
            b -= lr * grad.sum(axis=0)
        model = LabelModel(ds.vocab, "linear", threshold=threshold, weights=w, bias=b)
    else:
        raise ValueError(f"unknown backend {backend!r}")

    correct = {a: 0 for a in ds.vocab}
    total = 0
    for tr in eval_trs:
        for obs, lab in zip(tr.observations, tr.labels):
            pred = predict_labels(model, obs)
            total += 1
            for a in ds.vocab:
                correct[a] += (a in pred) == (a in lab)
    model.holdout_accuracy = {a: correct[a] / total for a in ds.vocab}
    return model


# ---------------------------------------------------------------------------
# Primitive value functions


def literal_satisfied(lit: Literal, label: frozenset[str]) -> bool:
    atom, positive = lit
    return (atom in label) == positive


@dataclass
class TabularPvf:
    """Q-table over exact observation keys; value reads as max over actions."""

    gamma: float
    q: dict  # obs key -> np.ndarray(N_ACTIONS)
    vnext: dict = field(default_factory=dict)  # obs key -> bootstrapped next-state value

    def value(self, obs: np.ndarray) -> float:
        entry = self.q.get(obs_key(obs))
        if entry is None:
            return 0.0
        return float(np.clip(entry.max(), 0.0, 1.0))

    def value_bootstrap(self, obs: np.ndarray) -> float:
        """The separately-tracked next-state value head; equals value() at convergence."""
        return float(np.clip(self.vnext.get(obs_key(obs), 0.0), 0.0, 1.0))


@dataclass
class TabularValuePvf:
    """State-value table (no Q factorization); used by Monte-Carlo regression."""

    gamma: float
    v: dict  # obs key -> float

    def value(self, obs: np.ndarray) -> float:
        return float(np.clip(self.v.get(obs_key(obs), 0.0), 0.0, 1.0))


@dataclass
class LinearPvf:
    """Per-action linear Q over the shared observation feature map."""

    gamma: float
    weights: np.ndarray  # (N_ACTIONS, n_features)

    def value(self, obs: np.ndarray) -> float:
        f = observation_features(obs)
        return float(np.clip((self.weights @ f).max(), 0.0, 1.0))


@dataclass
class PvfSet:
    """One value estimator per literal (atom or negated atom)."""

    vocab: tuple[str, ...]
    gamma: float
    method: str  # "fqi" | "mc"
    estimators: dict  # Literal -> estimator

    def __post_init__(self):
        expected = {(a, pol) for a in self.vocab for pol in (True, False)}
        if set(self.estimators) != expected:
            raise ValueError("need exactly one estimator per literal")

    def value(self, lit: Literal, obs: np.ndarray) -> float:
        return self.estimators[lit].value(obs)

    @property
    def literals(self):
        return tuple(self.estimators)


def _indexed_transitions(ds: GroundingDataset):
    """Deduplicate observations; return key index arrays for vectorized sweeps."""
    keys: dict = {}
    labels_by_idx: list = []

    def index_of(obs, label):
        k = obs_key(obs)
        if k not in keys:
            keys[k] = len(keys)
            labels_by_idx.append(label)
        return keys[k]

    src, act, dst = [], [], []
    for obs, lab, a, obs2, lab2 in ds.transitions():
        src.append(index_of(obs, lab))
        act.append(a)
        dst.append(index_of(obs2, lab2))
    return keys, labels_by_idx, np.array(src), np.array(act), np.array(dst)


def train_pvfs_fqi(
    ds: GroundingDataset,
    gamma: float,
    iters: int = 200,
    tol: float = 1e-9,
    backend: str = "tabular",
) -> PvfSet:
    """Fitted Q-iteration per literal on the dataset's transitions.

    The one-step target for a transition whose next label satisfies the
    literal is gamma (reward and termination both fire on the next
    label); otherwise gamma times the bootstrapped next value. Missing
    entries read as 0.
    """
    if not (0.0 < gamma < 1.0):
        raise ValueError("gamma must lie in (0, 1)")
    keys, labels_by_idx, src, act, dst = _indexed_transitions(ds)
    n_states = len(keys)
    key_list = list(keys)

    if backend == "linear":
        all_feats = [None] * n_states
        for obs, lab, a, obs2, lab2 in ds.transitions():
            for o in (obs, obs2):
                idx = keys[obs_key(o)]
                if all_feats[idx] is None:
                    all_feats[idx] = observation_features(o)
        feats = np.asarray(all_feats)

    estimators = {}
    for atom in ds.vocab:
        for positive in (True, False):
            lit = (atom, positive)
            sat_next = np.array([literal_satisfied(lit, labels_by_idx[i]) for i in dst], dtype=bool)
            residual = np.inf
            if backend == "tabular":
                q = np.zeros((n_states, N_ACTIONS))
                for it in range(iters):
                    next_v = q[dst].max(axis=1)
                    target = gamma * np.where(sat_next, 1.0, next_v)
                    q_new = np.zeros_like(q)
                    counts = np.zeros_like(q)
                    np.add.at(q_new, (src, act), target)
                    np.add.at(counts, (src, act), 1.0)
                    q_new = np.divide(q_new, counts, out=np.zeros_like(q_new), where=counts > 0)
                    residual = float(np.abs(q_new - q).max())
                    q = q_new
                    if residual < tol:
                        break
                est = TabularPvf(gamma, {key_list[i]: q[i].copy() for i in range(n_states)})
                est.vnext = {key_list[i]: float(q[i].max()) for i in set(dst.tolist())}
            else:
                w = np.zeros((N_ACTIONS, feats.shape[1]))
                for it in range(iters):
                    next_q = np.clip((feats[dst] @ w.T).max(axis=1), 0.0, 1.0)
                    target = gamma * np.where(sat_next, 1.0, next_q)
                    w_new = np.zeros_like(w)
                    for a in range(N_ACTIONS):
                        mask = act == a
                        if mask.any():
                            w_new[a], *_ = np.linalg.lstsq(feats[src[mask]], target[mask], rcond=None)
                    residual = float(np.abs(w_new - w).max())
                    w = w_new
                    if residual < tol:
                        break
                est = LinearPvf(gamma, w)
            if residual >= tol:
                warnings.warn(
                    f"PVF for literal {lit} did not converge (residual {residual:.3g})",
                    NonConvergenceWarning,
                )
            estimators[lit] = est
    return PvfSet(ds.vocab, gamma, "fqi", estimators)


def mc_targets(labels: list, lit: Literal, gamma: float) -> list[float]:
    """Per-step Monte-Carlo targets: gamma^(k-t) for the first k > t satisfying lit."""
    n = len(labels)
    targets = [0.0] * n
    nxt = 0.0
    for t in range(n - 2, -1, -1):
        nxt = gamma if literal_satisfied(lit, labels[t + 1]) else gamma * nxt
        targets[t] = nxt
    return targets


def train_pvfs_mc(ds: GroundingDataset, gamma: float) -> PvfSet:
    """Monte-Carlo regression of discounted first-satisfaction returns (tabular)."""
    if not (0.0 < gamma < 1.0):
        raise ValueError("gamma must lie in (0, 1)")
    estimators = {}
    for atom in ds.vocab:
        for positive in (True, False):
            lit = (atom, positive)
            sums: dict = {}
            counts: dict = {}
            for tr in ds.trajectories:
                targets = mc_targets(tr.labels, lit, gamma)
                for obs, tgt in zip(tr.observations[:-1], targets[:-1]):
                    k = obs_key(obs)
                    sums[k] = sums.get(k, 0.0) + tgt
                    counts[k] = counts.get(k, 0) + 1
            v = {k: sums[k] / counts[k] for k in sums}
            estimators[lit] = TabularValuePvf(gamma, v)
    return PvfSet(ds.vocab, gamma, "mc", estimators)


# ---------------------------------------------------------------------------
# Serialization


def save_label_model(model: LabelModel, path) -> None:
    data = {
        "vocab": list(model.vocab),
        "backend": model.backend,
        "threshold": model.threshold,
        "feature_version": model.feature_version,
        "holdout_accuracy": model.holdout_accuracy,
    }
    if model.backend == "linear":
        data["weights"] = model.weights.tolist()
        data["bias"] = model.bias.tolist()
    else:
        data["table"] = {k.hex(): v.tolist() for k, v in model.table.items()}
    with open(path, "w") as fh:
        json.dump(data, fh, sort_keys=True)


def load_label_model(path) -> LabelModel:
    with open(path) as fh:
        data = json.load(fh)
    kwargs = dict(
        vocab=tuple(data["vocab"]),
        backend=data["backend"],
        threshold=data["threshold"],
        feature_version=data["feature_version"],
    )
    if data["backend"] == "linear":
        model = LabelModel(
            weights=np.asarray(data["weights"]), bias=np.asarray(data["bias"]), **kwargs
        )
    else:
        model = LabelModel(
            table={bytes.fromhex(k): np.asarray(v) for k, v in data["table"].items()}, **kwargs
        )
    model.holdout_accuracy = data.get("holdout_accuracy", {})
    return model


def _lit_key(lit: Literal) -> str:
    return ("+" if lit[1] else "-") + lit[0]


def _lit_from_key(s: str) -> Literal:
    return (s[1:], s[0] == "+")


def save_pvfs(pvfs: PvfSet, path) -> None:
    ests = {}
    for lit, est in pvfs.estimators.items():
        if isinstance(est, TabularPvf):
            ests[_lit_key(lit)] = {
                "kind": "tabular_q",
                "q": {k.hex(): v.tolist() for k, v in est.q.items()},
            }
        elif isinstance(est, TabularValuePvf):
            ests[_lit_key(lit)] = {
                "kind": "tabular_v",
                "v": {k.hex(): v for k, v in est.v.items()},
            }
        elif isinstance(est, LinearPvf):
            ests[_lit_key(lit)] = {"kind": "linear", "weights": est.weights.tolist()}
        else:
            raise TypeError(f"cannot serialize {type(est)}")
    data = {
        "vocab": list(pvfs.vocab),
        "gamma": pvfs.gamma,
        "method": pvfs.method,
        "feature_version": FEATURE_MAP_VERSION,
        "estimators": ests,
    }
    with open(path, "w") as fh:
        json.dump(data, fh, sort_keys=True)


def load_pvfs(path) -> PvfSet:
    with open(path) as fh:
        data = json.load(fh)
    gamma = data["gamma"]
    estimators = {}
    for key, entry in data["estimators"].items():
        lit = _lit_from_key(key)
        if entry["kind"] == "tabular_q":
            estimators[lit] = TabularPvf(
                gamma, {bytes.fromhex(k): np.asarray(v) for k, v in entry["q"].items()}
            )
        elif entry["kind"] == "tabular_v":
            estimators[lit] = TabularValuePvf(
                gamma, {bytes.fromhex(k): float(v) for k, v in entry["v"].items()}
            )
        else:
            estimators[lit] = LinearPvf(gamma, np.asarray(entry["weights"]))
    return PvfSet(tuple(data["vocab"]), gamma, data["method"], estimators)
