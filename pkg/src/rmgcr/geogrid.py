"""Deterministic, seedable gridworld with coloured/shaped objects.

The agent moves on a rectangular grid holding objects that each have a
colour and a shape. The ground-truth labelling reports the colour and
shape atoms of the object under the agent, if any. A random-walk dataset
generator produces labelled trajectories for offline grounding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

COLORS = ("red", "green", "blue")
SHAPES = ("triangle", "circle")
VOCAB = COLORS + SHAPES
CHANNELS = VOCAB + ("agent",)

ACTIONS = ("up", "down", "left", "right")
_MOVES = {0: (-1, 0), 1: (1, 0), 2: (0, -1), 3: (0, 1)}

DATASET_FORMAT_VERSION = 1

Cell = tuple[int, int]


class InfeasibleConfigError(ValueError):
    pass


# one of each colour x shape, laid out so the subgoal cycle is walkable
DEFAULT_FIXED_CELLS: dict[tuple[str, str], Cell] = {
    ("red", "triangle"): (0, 0),
    ("red", "circle"): (0, 2),
    ("blue", "triangle"): (0, 4),
    ("blue", "circle"): (2, 4),
    ("green", "triangle"): (4, 4),
    ("green", "circle"): (4, 2),
}


@dataclass(frozen=True)
class ObjectSpec:
    color: str
    shape: str
    cell: Optional[Cell] = None  # pinned cell; None means placed by the layout


@dataclass(frozen=True)
class GridConfig:
    width: int = 6
    height: int = 6
    objects: tuple[ObjectSpec, ...] = ()
    layout_mode: str = "fixed"  # "fixed" | "randomized"
    episode_len: int = 60
    seed: int = 0
    agent_start: Optional[Cell] = None  # None: random cell each reset
    exclude_agent_from_objects: bool = False

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be positive")
        if self.layout_mode not in ("fixed", "randomized"):
            raise ValueError(f"unknown layout_mode {self.layout_mode!r}")
        if self.episode_len < 0:
            raise ValueError("episode_len must be non-negative")
        if not self.objects:
            object.__setattr__(
                self,
                "objects",
                tuple(
                    ObjectSpec(c, s, DEFAULT_FIXED_CELLS[(c, s)] if self.layout_mode == "fixed" else None)
                    for c in COLORS
                    for s in SHAPES
                ),
            )
        for obj in self.objects:
            if obj.color not in COLORS or obj.shape not in SHAPES:
                raise ValueError(f"bad object entry: {obj}")
        if len(self.objects) > self.width * self.height:
            raise InfeasibleConfigError("more objects than cells")
        if self.layout_mode == "fixed":
            cells = [o.cell for o in self.objects]
            if any(c is None for c in cells):
                raise ValueError("fixed layout requires a pinned cell on every object")
            if len(set(cells)) != len(cells):
                raise InfeasibleConfigError("pinned objects overlap")
            for r, c in cells:
                if not (0 <= r < self.height and 0 <= c < self.width):
                    raise InfeasibleConfigError(f"pinned cell ({r},{c}) out of bounds")


@dataclass(frozen=True)
class GridState:
    width: int
    height: int
    agent: Cell
    placements: tuple[tuple[str, str, Cell], ...]  # (color, shape, cell)
    step_count: int = 0


def reset(cfg: GridConfig, seed: Optional[int] = None) -> GridState:
    """Initial state; a deterministic function of (cfg, seed)."""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    n_cells = cfg.width * cfg.height
    if cfg.layout_mode == "fixed":
        placements = tuple((o.color, o.shape, o.cell) for o in cfg.objects)
    else:
        pinned = [o for o in cfg.objects if o.cell is not None]
        free = [o for o in cfg.objects if o.cell is None]
        taken = {o.cell for o in pinned}
        available = [i for i in range(n_cells) if (i // cfg.width, i % cfg.width) not in taken]
        if len(free) > len(available):
            raise InfeasibleConfigError("more objects than cells")
        chosen = rng.choice(len(available), size=len(free), replace=False)
        cells = [(available[i] // cfg.width, available[i] % cfg.width) for i in chosen]
        placements = tuple(
            [(o.color, o.shape, o.cell) for o in pinned]
            + [(o.color, o.shape, cell) for o, cell in zip(free, cells)]
        )
    if cfg.agent_start is not None:
        agent = cfg.agent_start
    else:
        occupied = {cell for _, _, cell in placements} if cfg.exclude_agent_from_objects else set()
        options = [i for i in range(n_cells) if (i // cfg.width, i % cfg.width) not in occupied]
        if not options:
            raise InfeasibleConfigError("no free cell for the agent")
        i = int(rng.integers(len(options)))
        agent = (options[i] // cfg.width, options[i] % cfg.width)
    return GridState(cfg.width, cfg.height, agent, placements)


def step(s: GridState, action: int) -> GridState:
    """Move one cell; off-grid moves are no-ops. Objects are static."""
    dr, dc = _MOVES[int(action)]
    r, c = s.agent[0] + dr, s.agent[1] + dc
    if not (0 <= r < s.height and 0 <= c < s.width):
        r, c = s.agent
    return replace(s, agent=(r, c), step_count=s.step_count + 1)


def true_label(s: GridState) -> frozenset[str]:
    """Ground-truth labelling: colour and shape atoms of the object under the agent."""
    for color, shape, cell in s.placements:
        if cell == s.agent:
            return frozenset((color, shape))
    return frozenset()


def encode_obs(s: GridState) -> np.ndarray:
    """height x width x 6 binary tensor, channels (red, green, blue, triangle, circle, agent)."""
    obs = np.zeros((s.height, s.width, len(CHANNELS)), dtype=np.uint8)
    for color, shape, (r, c) in s.placements:
        obs[r, c, CHANNELS.index(color)] = 1
        obs[r, c, CHANNELS.index(shape)] = 1
    obs[s.agent[0], s.agent[1], CHANNELS.index("agent")] = 1
    return obs


def decode_obs(obs: np.ndarray) -> GridState:
    """Inverse of encode_obs (step_count is not encoded and reads 0)."""
    height, width, _ = obs.shape
    agent_cells = np.argwhere(obs[:, :, CHANNELS.index("agent")] == 1)
    if len(agent_cells) != 1:
        raise ValueError("observation must have exactly one agent cell")
    placements = []
    for r in range(height):
        for c in range(width):
            colors = [col for col in COLORS if obs[r, c, CHANNELS.index(col)]]
            shapes = [sh for sh in SHAPES if obs[r, c, CHANNELS.index(sh)]]
            if colors or shapes:
                if len(colors) != 1 or len(shapes) != 1:
                    raise ValueError(f"cell ({r},{c}) is not a single colour+shape object")
                placements.append((colors[0], shapes[0], (r, c)))
    agent = (int(agent_cells[0][0]), int(agent_cells[0][1]))
    return GridState(width, height, agent, tuple(placements))


def obs_key(obs: np.ndarray) -> bytes:
    """Hashable exact key for tabular backends."""
    return obs.tobytes()


@dataclass
class Trajectory:
    observations: list[np.ndarray]
    actions: list[int]
    labels: list[frozenset[str]]

    def __post_init__(self):
        if len(self.actions) != len(self.observations) - 1:
            raise ValueError("need exactly one action between consecutive observations")
        if len(self.labels) != len(self.observations):
            raise ValueError("labels must align with observations")


@dataclass
class GroundingDataset:
    vocab: tuple[str, ...]
    trajectories: list[Trajectory]
    meta: dict = field(default_factory=dict)

    def transitions(self):
        """Yield (obs, label, action, next_obs, next_label) across all trajectories."""
        for tr in self.trajectories:
            for t, a in enumerate(tr.actions):
                yield tr.observations[t], tr.labels[t], a, tr.observations[t + 1], tr.labels[t + 1]


def generate_dataset(
    cfg: GridConfig,
    n_trajectories: int,
    seed: Optional[int] = None,
    policy: str = "random",
) -> GroundingDataset:
    """Random-walk trajectories of length cfg.episode_len with ground-truth labels.

    Reproducible: trajectory i uses the RNG stream (seed, i).
    """
    if n_trajectories < 1:
        raise ValueError("need at least one trajectory")
    if policy != "random":
        raise ValueError(f"unknown policy {policy!r}")
    root = cfg.seed if seed is None else seed
    trajectories = []
    for i in range(n_trajectories):
        rng = np.random.default_rng((root, i))
        state = reset(cfg, seed=int(rng.integers(2**63)))
        observations = [encode_obs(state)]
        labels = [true_label(state)]
        actions = []
        for _ in range(cfg.episode_len):
            a = int(rng.integers(len(ACTIONS)))
            state = step(state, a)
            actions.append(a)
            observations.append(encode_obs(state))
            labels.append(true_label(state))
        trajectories.append(Trajectory(observations, actions, labels))
    meta = {"seed": root, "policy": policy, "config": config_to_dict(cfg)}
    return GroundingDataset(VOCAB, trajectories, meta)


def full_coverage_dataset(cfg: GridConfig) -> GroundingDataset:
    """One-step trajectories covering every (cell, action) pair of a fixed layout.

    Gives tabular offline training an exact view of the deterministic
    dynamics, so fitted values can match exact value iteration.
    """
    if cfg.layout_mode != "fixed":
        raise ValueError("full coverage requires a fixed layout")
    base = reset(cfg)
    trajectories = []
    for r in range(cfg.height):
        for c in range(cfg.width):
            for a in range(len(ACTIONS)):
                s0 = replace(base, agent=(r, c))
                s1 = step(s0, a)
                trajectories.append(
                    Trajectory(
                        [encode_obs(s0), encode_obs(s1)],
                        [a],
                        [true_label(s0), true_label(s1)],
                    )
                )
    meta = {"seed": cfg.seed, "policy": "exhaustive", "config": config_to_dict(cfg)}
    return GroundingDataset(VOCAB, trajectories, meta)


# ---------------------------------------------------------------------------
# Serialization (line-delimited JSON; header record then one per trajectory)


def config_to_dict(cfg: GridConfig) -> dict:
    return {
        "width": cfg.width,
        "height": cfg.height,
        "objects": [[o.color, o.shape, list(o.cell) if o.cell else None] for o in cfg.objects],
        "layout_mode": cfg.layout_mode,
        "episode_len": cfg.episode_len,
        "seed": cfg.seed,
        "agent_start": list(cfg.agent_start) if cfg.agent_start else None,
        "exclude_agent_from_objects": cfg.exclude_agent_from_objects,
    }


def config_from_dict(d: dict) -> GridConfig:
    return GridConfig(
        width=d["width"],
        height=d["height"],
        objects=tuple(
            ObjectSpec(c, s, tuple(cell) if cell else None) for c, s, cell in d["objects"]
        ),
        layout_mode=d["layout_mode"],
        episode_len=d["episode_len"],
        seed=d["seed"],
        agent_start=tuple(d["agent_start"]) if d.get("agent_start") else None,
        exclude_agent_from_objects=d.get("exclude_agent_from_objects", False),
    )


def save_dataset(ds: GroundingDataset, path) -> None:
    with open(path, "w") as fh:
        header = {
            "format_version": DATASET_FORMAT_VERSION,
            "vocab": list(ds.vocab),
            "meta": ds.meta,
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for tr in ds.trajectories:
            record = {
                "obs": [o.tolist() for o in tr.observations],
                "actions": tr.actions,
                "labels": [sorted(l) for l in tr.labels],
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def load_dataset(path) -> GroundingDataset:
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header["format_version"] != DATASET_FORMAT_VERSION:
            raise ValueError(f"unsupported dataset format {header['format_version']}")
        trajectories = []
        for line in fh:
            record = json.loads(line)
            trajectories.append(
                Trajectory(
                    [np.asarray(o, dtype=np.uint8) for o in record["obs"]],
                    list(record["actions"]),
                    [frozenset(l) for l in record["labels"]],
                )
            )
    return GroundingDataset(tuple(header["vocab"]), trajectories, header.get("meta", {}))


def label_frequencies(ds: GroundingDataset) -> dict[str, float]:
    """Fraction of dataset steps at which each atom holds."""
    total = 0
    counts = {a: 0 for a in ds.vocab}
    for tr in ds.trajectories:
        for lab in tr.labels:
            total += 1
            for a in lab:
                counts[a] += 1
    return {a: counts[a] / total for a in ds.vocab}
