"""Two-signal node classification labels and train/val/test splits.

A node's raw score mixes a local signal (mean latent z over its closed
1-hop neighborhood) and a far signal (mean z over its shell at hop
distance ``r_star``); ``beta`` interpolates between them. Nodes whose far
shell is empty are invalid: they stay in the graph and are visible to
attention, but are excluded from labels, splits, loss and accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO, NamedTuple

import numpy as np

from .errors import DegenerateTaskError, FormatError, ParameterError
from .graphgen import DistanceMatrix, Graph, read_graph, shell, write_graph

#: Label value for nodes outside the valid set.
LABEL_UNDEFINED = -1

SPLIT_NAMES = ("train", "val", "test")

#: Minimum number of valid nodes for a trainable task.
MIN_VALID_DEFAULT = 30


@dataclass(frozen=True)
class TaskSpec:
    beta: float
    r_star: int = 3
    split_fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)
    split_seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.beta <= 1.0):
            raise ParameterError(f"beta must be in [0, 1], got {self.beta}")
        if self.r_star < 2:
            raise ParameterError(f"r_star must be >= 2, got {self.r_star}")
        if any(fr <= 0 for fr in self.split_fractions):
            raise ParameterError("split fractions must be positive")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ParameterError("split fractions must sum to 1")
        if self.split_seed < 0:
            raise ParameterError("split_seed must be nonnegative")


@dataclass(frozen=True)
class LabeledTask:
    """Labels on the valid set plus the standardized score vectors.

    ``labels[i]`` is LABEL_UNDEFINED wherever ``valid_mask[i]`` is False;
    score entries are NaN there. ``splits`` partitions the valid indices.
    """

    labels: np.ndarray  # (n,) int8, in {-1, 0, 1}
    valid_mask: np.ndarray  # (n,) bool
    g_loc_hat: np.ndarray  # (n,) float64, NaN on invalid nodes
    g_far_hat: np.ndarray  # (n,) float64, NaN on invalid nodes
    splits: dict  # name -> sorted int64 index array

    @property
    def n_valid(self) -> int:
        return int(self.valid_mask.sum())


def local_score(g: Graph, dm: DistanceMatrix, i: int) -> float:
    """Mean z over the closed 1-hop neighborhood {i} ∪ N(i)."""
    members = np.flatnonzero(g.adjacency[i])
    return float((g.z[i] + g.z[members].sum()) / (1 + len(members)))


def far_score(g: Graph, dm: DistanceMatrix, i: int, r_star: int) -> float:
    """Mean z over the shell at distance r_star; NaN when the shell is empty."""
    members = shell(dm, i, r_star)
    if len(members) == 0:
        return float("nan")
    return float(g.z[members].mean())


def standardize(scores: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Center/scale over masked entries (population std); others become NaN.

    Raises DegenerateTaskError when fewer than 2 entries are masked or the
    masked variance is zero, in which case the task must be resampled.
    """
    valid = scores[mask]
    if valid.size < 2:
        raise DegenerateTaskError(
            f"standardization needs >= 2 valid nodes, got {valid.size}"
        )
    mean = valid.mean()
    std = valid.std()  # population convention
    if std == 0.0 or not np.isfinite(std):
        raise DegenerateTaskError("score vector has zero variance over valid nodes")
    out = np.full(scores.shape, np.nan)
    out[mask] = (scores[mask] - mean) / std
    return out


def _sample_splits(valid_idx: np.ndarray, spec: TaskSpec) -> dict:
    """Disjoint train/val/test over valid nodes, deterministic in split_seed.

    Sizes are floor(fraction * n_valid) for train and val; test gets the
    remainder. Each split is returned sorted.
    """
    rng = np.random.default_rng(spec.split_seed)
    perm = rng.permutation(valid_idx)
    n_valid = len(valid_idx)
    n_train = int(np.floor(spec.split_fractions[0] * n_valid))
    n_val = int(np.floor(spec.split_fractions[1] * n_valid))
    return {
        "train": np.sort(perm[:n_train]),
        "val": np.sort(perm[n_train:n_train + n_val]),
        "test": np.sort(perm[n_train + n_val:]),
    }


def make_labels(
    g: Graph,
    dm: DistanceMatrix,
    spec: TaskSpec,
    min_valid: int = MIN_VALID_DEFAULT,
) -> LabeledTask:
    """Build labels y = 1[beta*g_loc_hat + (1-beta)*g_far_hat > 0].

    Valid nodes are those with a nonempty shell at r_star. ``min_valid``
    exists so tiny hand-built fixtures can bypass the desk-scale floor.
    """
    raw_loc = np.array([local_score(g, dm, i) for i in range(g.n)])
    raw_far = np.array([far_score(g, dm, i, spec.r_star) for i in range(g.n)])
    valid_mask = ~np.isnan(raw_far)

    n_valid = int(valid_mask.sum())
    if n_valid < min_valid:
        raise DegenerateTaskError(
            f"only {n_valid} valid nodes (< {min_valid}); resample the graph"
        )

    g_loc_hat = standardize(raw_loc, valid_mask)
    g_far_hat = standardize(raw_far, valid_mask)

    s = spec.beta * g_loc_hat + (1.0 - spec.beta) * g_far_hat
    labels = np.full(g.n, LABEL_UNDEFINED, dtype=np.int8)
    labels[valid_mask] = (s[valid_mask] > 0.0).astype(np.int8)

    splits = _sample_splits(np.flatnonzero(valid_mask), spec)
    return LabeledTask(
        labels=labels,
        valid_mask=valid_mask,
        g_loc_hat=g_loc_hat,
        g_far_hat=g_far_hat,
        splits=splits,
    )


# ---------------------------------------------------------------------------
# Serialization: task columns appended to the graph text format
# ---------------------------------------------------------------------------

class TaskColumns(NamedTuple):
    """Per-node (valid, label, split) columns as stored on disk."""

    valid: np.ndarray  # (n,) bool
    labels: np.ndarray  # (n,) int8
    split_of: np.ndarray  # (n,) object array of 'train'/'val'/'test'/'-'


def _split_column(task: LabeledTask, n: int) -> np.ndarray:
    col = np.full(n, "-", dtype=object)
    for name in SPLIT_NAMES:
        col[task.splits[name]] = name
    return col


def write_task(f: IO[str], task: LabeledTask, spec: TaskSpec) -> None:
    f.write("task\n")
    f.write(f"beta {repr(float(spec.beta))}\n")
    f.write(f"r_star {spec.r_star}\n")
    fr = " ".join(repr(float(x)) for x in spec.split_fractions)
    f.write(f"split_fractions {fr}\n")
    f.write(f"split_seed {spec.split_seed}\n")
    f.write("pernode\n")
    split_col = _split_column(task, len(task.labels))
    for i in range(len(task.labels)):
        f.write(f"{int(task.valid_mask[i])} {int(task.labels[i])} {split_col[i]}\n")


def read_task(f: IO[str], n: int) -> tuple[TaskSpec, TaskColumns]:
    def next_line() -> str:
        line = f.readline()
        if not line:
            raise FormatError("unexpected end of task section")
        return line.rstrip("\n")

    if next_line() != "task":
        raise FormatError("missing task section")
    fields = {}
    for key in ("beta", "r_star", "split_fractions", "split_seed"):
        name, _, value = next_line().partition(" ")
        if name != key:
            raise FormatError(f"expected task field '{key}', got '{name}'")
        fields[key] = value
    try:
        spec = TaskSpec(
            beta=float(fields["beta"]),
            r_star=int(fields["r_star"]),
            split_fractions=tuple(
                float(x) for x in fields["split_fractions"].split()
            ),
            split_seed=int(fields["split_seed"]),
        )
    except ValueError:
        raise FormatError("malformed task header fields") from None
    if next_line() != "pernode":
        raise FormatError("missing pernode section")
    valid = np.empty(n, dtype=bool)
    labels = np.empty(n, dtype=np.int8)
    split_of = np.empty(n, dtype=object)
    for i in range(n):
        parts = next_line().split()
        if len(parts) != 3:
            raise FormatError(f"bad pernode line at node {i}")
        try:
            valid[i] = bool(int(parts[0]))
            labels[i] = int(parts[1])
        except ValueError:
            raise FormatError(f"bad pernode line at node {i}") from None
        split_of[i] = parts[2]
    return spec, TaskColumns(valid=valid, labels=labels, split_of=split_of)


def save_labeled_graph(path, g: Graph, task: LabeledTask, spec: TaskSpec) -> None:
    with open(path, "w") as f:
        write_graph(f, g)
        write_task(f, task, spec)


def load_labeled_graph(path) -> tuple[Graph, TaskSpec, TaskColumns]:
    with open(path) as f:
        g = read_graph(f)
        spec, cols = read_task(f, g.n)
    return g, spec, cols
