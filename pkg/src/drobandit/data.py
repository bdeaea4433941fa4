"""Dataset ingestion, binning, cost construction and synthetic generation.

Raw CSV logs become a :class:`BanditDataset`: integer-indexed records over
explicit context / observation supports. The context support is the full
cross product of the binned levels seen (plus any declared levels), not just
the observed combinations, because the robust solvers take suprema over the
whole known support; an "observed only" mode exists for the sub-support
approximation used when the cross product is unmanageable.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import (
    DatasetDiagnostics,
    DiscreteDistribution,
    SupportSet,
)
from .errors import (
    EmptyDataset,
    InvalidShift,
    SchemaMismatch,
    UnparsableOutcome,
    UnparsableRow,
    ValidationError,
)
from .ope import CostModel, Policy

_TRUE_TOKENS = {"y", "yes", "true", "t", "1"}
_FALSE_TOKENS = {"n", "no", "false", "f", "0", ""}


@dataclass(frozen=True)
class BanditDataset:
    """Logged (context, action, observation, cost) tuples with explicit supports."""

    context_idx: np.ndarray
    action_idx: np.ndarray
    xi_idx: np.ndarray
    costs: np.ndarray
    contexts: SupportSet
    actions: tuple
    xi_support: SupportSet
    y_max: float
    behavior_policy: Policy | None = None
    diagnostics: DatasetDiagnostics = field(default=None)

    def __post_init__(self):
        for name in ("context_idx", "action_idx", "xi_idx"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        costs = np.asarray(self.costs, dtype=np.float64)
        costs.setflags(write=False)
        object.__setattr__(self, "costs", costs)
        n = len(self.costs)
        if not (len(self.context_idx) == len(self.action_idx) == len(self.xi_idx) == n):
            raise ValidationError("record columns have inconsistent lengths")
        if n == 0:
            raise EmptyDataset("dataset has no records")
        if (
            self.context_idx.max() >= len(self.contexts)
            or self.action_idx.max() >= len(self.actions)
            or self.xi_idx.max() >= len(self.xi_support)
        ):
            raise ValidationError("record indices outside the declared supports")
        if np.any(costs < -1e-12) or np.any(costs > self.y_max + 1e-12):
            raise ValidationError(f"costs must lie in [0, {self.y_max}]")
        if self.diagnostics is None:
            object.__setattr__(
                self,
                "diagnostics",
                compute_diagnostics(self.context_idx, self.action_idx,
                                    len(self.contexts), len(self.actions)),
            )

    @property
    def n(self) -> int:
        return len(self.costs)

    def empirical_context_distribution(self) -> DiscreteDistribution:
        w = np.bincount(self.context_idx, minlength=len(self.contexts)) / self.n
        return DiscreteDistribution(self.contexts, w)


def compute_diagnostics(context_idx, action_idx, n_contexts, n_actions) -> DatasetDiagnostics:
    counts = np.zeros((n_contexts, n_actions), dtype=np.int64)
    np.add.at(counts, (context_idx, action_idx), 1)
    n = int(len(context_idx))
    pair_counts = {
        (int(x), int(a)): int(counts[x, a])
        for x in range(n_contexts)
        for a in range(n_actions)
        if counts[x, a] > 0
    }
    # zero as soon as any pair of the declared grid was never logged
    min_freq = 0.0 if counts.min() == 0 else float(counts.min()) / n
    return DatasetDiagnostics(min_pair_frequency=min_freq, pair_counts=pair_counts, n=n)


# -- binning -------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnBinning:
    """Per-column binning rule: identity, fixed-width, or categorical levels."""

    kind: str = "identity"
    width: float | None = None
    levels: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("identity", "fixed_width", "categorical"):
            raise SchemaMismatch(f"unknown binning kind {self.kind!r}")
        if self.kind == "fixed_width" and not (self.width and self.width > 0):
            raise SchemaMismatch("fixed_width binning needs a positive width")
        if self.kind == "categorical" and not self.levels:
            raise SchemaMismatch("categorical binning needs declared levels")

    def apply(self, raw: str) -> float:
        if self.kind == "categorical":
            if raw not in self.levels:
                raise ValueError(f"value {raw!r} not among declared levels")
            return float(self.levels.index(raw))
        value = float(raw)
        if self.kind == "fixed_width":
            return math.floor(value / self.width) * self.width
        return value

    def declared_values(self) -> list:
        if self.kind == "categorical":
            return [float(i) for i in range(len(self.levels))]
        return []


@dataclass(frozen=True)
class BinningSpec:
    rules: dict

    def rule(self, column: str) -> ColumnBinning:
        return self.rules.get(column, ColumnBinning())

    @staticmethod
    def from_json(obj: dict | None) -> "BinningSpec":
        rules = {}
        for col, spec in (obj or {}).items():
            rules[col] = ColumnBinning(
                kind=spec.get("kind", "identity"),
                width=spec.get("width"),
                levels=tuple(spec["levels"]) if "levels" in spec else None,
            )
        return BinningSpec(rules)


def indicator_cost(outcomes: dict, weights: dict) -> float:
    """Weighted sum of boolean event indicators; y_max is the weight total."""
    total = 0.0
    for column, weight in weights.items():
        raw = outcomes.get(column)
        if raw is None:
            raise UnparsableOutcome(f"missing outcome column {column!r}")
        if isinstance(raw, bool):
            flag = raw
        else:
            token = str(raw).strip().lower()
            if token in _TRUE_TOKENS:
                flag = True
            elif token in _FALSE_TOKENS:
                flag = False
            else:
                raise UnparsableOutcome(f"cannot parse {raw!r} as a boolean event")
        if flag:
            total += weight
    return total


# -- CSV ingestion ---------------------------------------------------------------

def load_dataset(path, schema: dict, binning: BinningSpec | None = None,
                 support: str = "full") -> BanditDataset:
    """Read a raw CSV log into a :class:`BanditDataset`.

    `schema` names the context columns, the action column, and either outcome
    columns with `cost_weights` (costs become weighted event-indicator sums)
    or a single numeric `cost_column`. Binning rules may live under the
    schema's "binning" key or be passed explicitly. `support="full"` builds
    the context support as the cross product of per-column levels;
    `support="observed"` keeps only the combinations actually seen.
    """
    if binning is None:
        binning = BinningSpec.from_json(schema.get("binning"))
    try:
        context_columns = list(schema["context_columns"])
        action_column = schema["action_column"]
    except KeyError as exc:
        raise SchemaMismatch(f"schema is missing {exc}") from exc
    outcome_columns = list(schema.get("outcome_columns", []))
    cost_weights = dict(schema.get("cost_weights", {}))
    cost_column = schema.get("cost_column")
    if cost_column is None and not (outcome_columns and cost_weights):
        raise SchemaMismatch("schema needs either cost_column or outcome_columns + cost_weights")
    if support not in ("full", "observed"):
        raise ValidationError(f"support mode must be 'full' or 'observed', got {support!r}")

    declared_actions = [str(a) for a in schema.get("actions", [])]

    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise EmptyDataset(f"{path} has no header row")
        needed = set(context_columns) | {action_column} | set(outcome_columns)
        if cost_column:
            needed.add(cost_column)
        missing = needed - set(reader.fieldnames)
        if missing:
            raise SchemaMismatch(f"columns missing from {path}: {sorted(missing)}")

        binned_rows, action_labels, raw_costs = [], [], []
        for line_no, row in enumerate(reader, start=2):
            try:
                point = tuple(
                    binning.rule(col).apply(row[col]) for col in context_columns
                )
            except ValueError as exc:
                raise UnparsableRow(line_no, str(exc)) from exc
            label = str(row[action_column]).strip()
            if declared_actions and label not in declared_actions:
                raise UnparsableRow(line_no, f"action label {label!r} not in schema")
            if cost_column is not None:
                try:
                    cost = float(row[cost_column])
                except ValueError as exc:
                    raise UnparsableRow(line_no, f"bad cost value {row[cost_column]!r}") from exc
            else:
                try:
                    cost = indicator_cost({c: row[c] for c in outcome_columns}, cost_weights)
                except UnparsableOutcome as exc:
                    raise UnparsableRow(line_no, str(exc)) from exc
            binned_rows.append(point)
            action_labels.append(label)
            raw_costs.append(cost)

    if not binned_rows:
        raise EmptyDataset(f"{path} contains a header but no records")

    actions = tuple(declared_actions) if declared_actions else tuple(
        sorted(set(action_labels))
    )
    action_index = {a: i for i, a in enumerate(actions)}

    # per-column levels: observed plus declared (categorical) levels
    if support == "full":
        levels = []
        for j, col in enumerate(context_columns):
            seen = {pt[j] for pt in binned_rows} | set(binning.rule(col).declared_values())
            levels.append(sorted(seen))
        all_points = [tuple(p) for p in itertools.product(*levels)]
    else:
        all_points = sorted(set(binned_rows))
    context_support = SupportSet(np.asarray(all_points, dtype=np.float64))
    point_index = {pt: i for i, pt in enumerate(all_points)}

    if cost_column is not None:
        y_max = float(schema.get("y_max", max(raw_costs)))
    else:
        y_max = float(schema.get("y_max", sum(cost_weights.values())))

    xi_values = sorted(set(raw_costs))
    xi_support = SupportSet.from_scalars(xi_values)
    xi_index = {v: i for i, v in enumerate(xi_values)}

    return BanditDataset(
        context_idx=np.array([point_index[pt] for pt in binned_rows]),
        action_idx=np.array([action_index[a] for a in action_labels]),
        xi_idx=np.array([xi_index[c] for c in raw_costs]),
        costs=np.array(raw_costs),
        contexts=context_support,
        actions=actions,
        xi_support=xi_support,
        y_max=y_max,
    )


def save_dataset(dataset: BanditDataset, path) -> None:
    """Write the canonical CSV plus a JSON sidecar describing the supports."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["context_index", "action_index", "xi_index", "cost"])
        for x, a, k, c in zip(dataset.context_idx, dataset.action_idx,
                              dataset.xi_idx, dataset.costs):
            writer.writerow([int(x), int(a), int(k), repr(float(c))])
    sidecar = {
        "contexts": dataset.contexts.points.tolist(),
        "actions": list(dataset.actions),
        "xi_support": dataset.xi_support.points.tolist(),
        "y_max": dataset.y_max,
    }
    with open(sidecar_path(path), "w") as handle:
        json.dump(sidecar, handle, indent=2, sort_keys=True)
        handle.write("\n")


def sidecar_path(path) -> str:
    return f"{path}.meta.json"


def load_canonical(path) -> BanditDataset:
    """Read back a dataset written by :func:`save_dataset`."""
    try:
        with open(sidecar_path(path)) as handle:
            sidecar = json.load(handle)
    except FileNotFoundError as exc:
        raise SchemaMismatch(f"missing sidecar {sidecar_path(path)}") from exc
    rows = []
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        for line_no, row in enumerate(reader, start=2):
            try:
                rows.append(
                    (int(row["context_index"]), int(row["action_index"]),
                     int(row["xi_index"]), float(row["cost"]))
                )
            except (KeyError, ValueError) as exc:
                raise UnparsableRow(line_no, str(exc)) from exc
    if not rows:
        raise EmptyDataset(f"{path} contains no records")
    return BanditDataset(
        context_idx=np.array([r[0] for r in rows]),
        action_idx=np.array([r[1] for r in rows]),
        xi_idx=np.array([r[2] for r in rows]),
        costs=np.array([r[3] for r in rows]),
        contexts=SupportSet(np.asarray(sidecar["contexts"], dtype=np.float64)),
        actions=tuple(sidecar["actions"]),
        xi_support=SupportSet(np.asarray(sidecar["xi_support"], dtype=np.float64)),
        y_max=float(sidecar["y_max"]),
    )


# -- synthetic generation ---------------------------------------------------------

@dataclass(frozen=True)
class ContextExtension:
    """A context point added by a shift, with its mass and a template context
    whose cost behaviour the new point copies."""

    point: tuple
    prob: float
    copy_like: int


@dataclass(frozen=True)
class ShiftSpec:
    """Distribution shift: context reweighting, support extension, or a
    per-observation reweighting of every pair's cost distribution."""

    context_scale: dict | None = None
    context_extension: tuple = ()
    xi_scale: dict | None = None

    @property
    def is_zero(self) -> bool:
        return not self.context_scale and not self.context_extension and not self.xi_scale


@dataclass(frozen=True)
class SyntheticConfig:
    """Ground truth of a synthetic environment plus the shift to inject."""

    context_dist: DiscreteDistribution
    xi_dists: tuple  # [context][action] -> DiscreteDistribution over xi
    behavior_policy: Policy
    cost_model: CostModel
    n: int
    seed: int
    shift: ShiftSpec | None = None
    shift_target: str = "train"

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("n must be positive")
        if self.shift_target not in ("train", "test"):
            raise ValidationError("shift_target must be 'train' or 'test'")


@dataclass(frozen=True)
class GroundTruth:
    context_dist: DiscreteDistribution
    xi_dists: tuple
    behavior_policy: Policy
    cost_model: CostModel


def _reweight(dist: DiscreteDistribution, scale: dict) -> DiscreteDistribution:
    w = dist.weights.copy()
    for idx, factor in scale.items():
        idx = int(idx)
        if factor < 0:
            raise InvalidShift(f"negative reweighting factor {factor} at index {idx}")
        if not 0 <= idx < len(w):
            raise InvalidShift(f"reweighting index {idx} outside the support")
        w[idx] *= factor
    total = w.sum()
    if total <= 0:
        raise InvalidShift("reweighting removed all probability mass")
    return DiscreteDistribution(dist.support, w / total)


def apply_shift(config: SyntheticConfig):
    """Shifted (context_dist, xi_dists, behavior, cost_model) per the config's shift."""
    shift = config.shift or ShiftSpec()
    context_dist = config.context_dist
    xi_dists = config.xi_dists
    behavior = config.behavior_policy
    cost_model = config.cost_model

    if shift.context_scale:
        context_dist = _reweight(context_dist, shift.context_scale)
    if shift.xi_scale:
        xi_dists = tuple(
            tuple(_reweight(d, shift.xi_scale) for d in per_context)
            for per_context in xi_dists
        )
    if shift.context_extension:
        extra_mass = sum(e.prob for e in shift.context_extension)
        if extra_mass <= 0 or extra_mass >= 1:
            raise InvalidShift("extension mass must lie strictly between 0 and 1")
        pts = [tuple(p) for p in context_dist.support.points]
        new_pts = pts + [tuple(np.atleast_1d(np.asarray(e.point, float)))
                         for e in shift.context_extension]
        support = SupportSet(np.asarray(new_pts, dtype=np.float64))
        w = np.concatenate([
            context_dist.weights * (1.0 - extra_mass),
            [e.prob for e in shift.context_extension],
        ])
        context_dist = DiscreteDistribution(support, w)
        copies = [e.copy_like for e in shift.context_extension]
        for c in copies:
            if not 0 <= c < len(pts):
                raise InvalidShift(f"copy_like index {c} outside the original support")
        xi_dists = tuple(list(xi_dists) + [xi_dists[c] for c in copies])
        behavior = Policy(np.vstack([behavior.probs]
                                    + [behavior.probs[c : c + 1] for c in copies]))
        cost_model = CostModel(
            cost_model.xi_support,
            np.concatenate([cost_model.y] + [cost_model.y[c : c + 1] for c in copies]),
            cost_model.y_max,
        )
    return context_dist, xi_dists, behavior, cost_model


def sample_dataset(context_dist: DiscreteDistribution, xi_dists, behavior: Policy,
                   cost_model: CostModel, n: int, rng: np.random.Generator) -> BanditDataset:
    """Draw n logged records: context, then action, then observation."""
    n_x = len(context_dist.support)
    n_a = behavior.n_actions
    x_idx = rng.choice(n_x, size=n, p=context_dist.weights)
    u = rng.random(n)
    cum = np.cumsum(behavior.probs, axis=1)
    a_idx = (u[:, None] > cum[x_idx]).sum(axis=1)
    xi_idx = np.empty(n, dtype=np.int64)
    for x in range(n_x):
        for a in range(n_a):
            mask = (x_idx == x) & (a_idx == a)
            count = int(mask.sum())
            if count:
                xi_idx[mask] = rng.choice(
                    len(xi_dists[x][a].support), size=count, p=xi_dists[x][a].weights
                )
    costs = cost_model.y[x_idx, a_idx, xi_idx]
    return BanditDataset(
        context_idx=x_idx.astype(np.int64),
        action_idx=a_idx.astype(np.int64),
        xi_idx=xi_idx,
        costs=costs,
        contexts=context_dist.support,
        actions=tuple(f"a{i}" for i in range(n_a)),
        xi_support=cost_model.xi_support,
        y_max=cost_model.y_max,
        behavior_policy=behavior,
    )


def canonical_rate_config(n_contexts: int = 6, n_xi: int = 5, n_actions: int = 2,
                          seed: int = 0, n: int = 1) -> SyntheticConfig:
    """A reproducible random environment for convergence experiments.

    Contexts sit on an even grid in [0, 1]; the context distribution and the
    per-pair observation distributions are Dirichlet draws, and costs are the
    observed scalars themselves (identity cost on a [0, 1] grid).
    """
    rng = np.random.default_rng(seed)
    context_support = SupportSet.from_scalars(np.linspace(0.0, 1.0, n_contexts))
    xi_support = SupportSet.from_scalars(np.linspace(0.0, 1.0, n_xi))
    context_dist = DiscreteDistribution(
        context_support, rng.dirichlet(np.full(n_contexts, 5.0))
    )
    xi_dists = tuple(
        tuple(
            DiscreteDistribution(xi_support, rng.dirichlet(np.full(n_xi, 2.0)))
            for _ in range(n_actions)
        )
        for _ in range(n_contexts)
    )
    behavior = Policy(np.full((n_contexts, n_actions), 1.0 / n_actions))
    cost_model = CostModel.identity(xi_support, n_contexts, n_actions, y_max=1.0)
    return SyntheticConfig(
        context_dist=context_dist,
        xi_dists=xi_dists,
        behavior_policy=behavior,
        cost_model=cost_model,
        n=n,
        seed=seed,
    )


def synthetic_config_from_json(obj: dict) -> SyntheticConfig:
    """Build a :class:`SyntheticConfig` from its JSON description."""
    try:
        context_support = SupportSet(np.asarray(obj["context_points"], dtype=np.float64))
        context_dist = DiscreteDistribution(
            context_support, np.asarray(obj["context_weights"], dtype=np.float64)
        )
        xi_support = SupportSet(np.asarray(obj["xi_points"], dtype=np.float64))
        xi_weights = obj["xi_weights"]
        behavior = Policy(np.asarray(obj["behavior"], dtype=np.float64))
        n = int(obj["n"])
        seed = int(obj["seed"])
    except KeyError as exc:
        raise SchemaMismatch(f"synthetic spec is missing {exc}") from exc
    xi_dists = tuple(
        tuple(
            DiscreteDistribution(xi_support, np.asarray(w, dtype=np.float64))
            for w in per_context
        )
        for per_context in xi_weights
    )
    if "y" in obj:
        y_max = float(obj.get("y_max", np.max(obj["y"])))
        cost_model = CostModel(xi_support, np.asarray(obj["y"], dtype=np.float64), y_max)
    else:
        cost_model = CostModel.identity(
            xi_support, len(context_support), behavior.n_actions,
            y_max=obj.get("y_max"),
        )
    shift = None
    if obj.get("shift"):
        raw = obj["shift"]
        shift = ShiftSpec(
            context_scale={int(k): float(v) for k, v in raw.get("context_scale", {}).items()}
            or None,
            context_extension=tuple(
                ContextExtension(tuple(e["point"]), float(e["prob"]), int(e["copy_like"]))
                for e in raw.get("context_extension", [])
            ),
            xi_scale={int(k): float(v) for k, v in raw.get("xi_scale", {}).items()} or None,
        )
    return SyntheticConfig(
        context_dist=context_dist,
        xi_dists=xi_dists,
        behavior_policy=behavior,
        cost_model=cost_model,
        n=n,
        seed=seed,
        shift=shift,
        shift_target=obj.get("shift_target", "train"),
    )


def synth_generate(config: SyntheticConfig):
    """Generate a (train, test, truth) triple, deterministic in the seed.

    The shift is injected into the side named by `shift_target`; the other
    side is drawn from the true distributions. `truth` carries those true
    distributions so exact policy values remain computable.
    """
    shifted = apply_shift(config)
    true_side = (config.context_dist, config.xi_dists, config.behavior_policy,
                 config.cost_model)
    rng = np.random.default_rng(config.seed)
    # draw order is fixed: train first, then test
    if config.shift_target == "train":
        train = sample_dataset(*shifted, config.n, rng)
        test = sample_dataset(*true_side, config.n, rng)
    else:
        train = sample_dataset(*true_side, config.n, rng)
        test = sample_dataset(*shifted, config.n, rng)
    truth = GroundTruth(config.context_dist, config.xi_dists,
                        config.behavior_policy, config.cost_model)
    return train, test, truth
