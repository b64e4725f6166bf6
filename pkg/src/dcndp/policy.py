"""Entropy decision trees over node attributes and phased vaccination policies."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import jsonschema
import numpy as np

from .errors import ConfigError, DomainError, SchemaError
from .graph import Graph

_EPS = 1e-12


# --- features ------------------------------------------------------------

FEATURES = (
    "age",
    "rha",
    "is_healthcare_worker",
    "is_urgent_care_patient",
    "is_long_term_care",
    "employed",
    "student",
    "household_size",
)


def node_records(g: Graph) -> list[dict[str, Any]]:
    """One attribute record per node, including a few derived fields."""
    if g.attributes is None:
        raise SchemaError("graph has no node attributes")
    sizes: dict[int, int] = {}
    for rec in g.attributes:
        sizes[rec.household_id] = sizes.get(rec.household_id, 0) + 1
    out = []
    for rec in g.attributes:
        out.append({
            "node_id": g.label(len(out)),
            "age": rec.age,
            "rha": rec.rha,
            "is_healthcare_worker": rec.is_healthcare_worker,
            "is_urgent_care_patient": rec.is_urgent_care_patient,
            "is_long_term_care": rec.is_long_term_care,
            "employed": rec.workplace_id is not None,
            "student": rec.school_id is not None,
            "household_size": sizes[rec.household_id],
        })
    return out


def feature_table(records: Sequence[Mapping[str, Any]], names: Sequence[str] = FEATURES) -> dict[str, list]:
    return {f: [r[f] for r in records] for f in names}


# --- conditions and policies ----------------------------------------------

OPS = ("==", "!=", ">", ">=", "<", "<=", "in")


@dataclass(frozen=True)
class Condition:
    attr: str
    op: str
    value: Any

    def __post_init__(self):
        if self.op not in OPS:
            raise ConfigError(f"unknown operator {self.op!r}")
        if self.op == "in" and isinstance(self.value, list):
            object.__setattr__(self, "value", tuple(self.value))

    def holds(self, record: Mapping[str, Any]) -> bool:
        if self.attr not in record:
            raise SchemaError(f"record has no attribute {self.attr!r}")
        x, op, val = record[self.attr], self.op, self.value
        if op == "==":
            return x == val
        if op == "!=":
            return x != val
        if op == "in":
            return x in val
        if op == ">":
            return x > val
        if op == ">=":
            return x >= val
        if op == "<":
            return x < val
        return x <= val

    def to_json(self) -> dict:
        val = list(self.value) if isinstance(self.value, tuple) else self.value
        return {"attr": self.attr, "op": self.op, "value": val}

    def __str__(self):
        return f"{self.attr} {self.op} {self.value!r}"


@dataclass(frozen=True)
class Phase:
    label: str
    all_of: tuple[Condition, ...] = ()
    any_of: tuple[Condition, ...] = ()  # empty means no disjunctive requirement
    group: str | None = None

    @property
    def unconditional(self) -> bool:
        return not self.all_of and not self.any_of

    def matches(self, record: Mapping[str, Any]) -> bool:
        if not all(c.holds(record) for c in self.all_of):
            return False
        return not self.any_of or any(c.holds(record) for c in self.any_of)

    def attributes(self) -> set[str]:
        return {c.attr for c in self.all_of + self.any_of}

    def to_json(self) -> dict:
        out: dict[str, Any] = {"label": self.label, "all_of": [c.to_json() for c in self.all_of]}
        if self.any_of:
            out["any_of"] = [c.to_json() for c in self.any_of]
        if self.group is not None:
            out["group"] = self.group
        return out


CATCH_ALL = "catch-all"


@dataclass(frozen=True)
class Policy:
    """Ordered phases; a node belongs to the first phase whose predicate it satisfies."""

    name: str
    phases: tuple[Phase, ...]

    def __post_init__(self):
        if not self.phases or not self.phases[-1].unconditional:
            object.__setattr__(self, "phases", tuple(self.phases) + (Phase(CATCH_ALL),))

    def phase_of(self, record: Mapping[str, Any]) -> int:
        for i, ph in enumerate(self.phases):
            if ph.matches(record):
                return i
        raise AssertionError("catch-all phase did not match")  # unreachable

    def assign(self, records: Sequence[Mapping[str, Any]]) -> list[int]:
        return [self.phase_of(r) for r in records]

    def attributes(self) -> set[str]:
        return set().union(*(p.attributes() for p in self.phases))

    def groups(self) -> list[tuple[str, int]]:
        """Outer phases as (group label, number of inner stages), in order."""
        out: list[tuple[str, int]] = []
        for i, ph in enumerate(self.phases):
            key = ph.group if ph.group is not None else str(i + 1)
            if out and out[-1][0] == key:
                out[-1] = (key, out[-1][1] + 1)
            else:
                out.append((key, 1))
        return out

    def to_json(self) -> dict:
        return {"name": self.name, "phases": [p.to_json() for p in self.phases]}

    def describe(self) -> str:
        lines = [f"policy {self.name}"]
        for i, ph in enumerate(self.phases, 1):
            parts = [" and ".join(map(str, ph.all_of))] if ph.all_of else []
            if ph.any_of:
                parts.append("(" + " or ".join(map(str, ph.any_of)) + ")")
            lines.append(f"  {i}. {ph.label}: {' and '.join(parts) or '(always)'}")
        return "\n".join(lines)


_CONDITION_SCHEMA = {
    "type": "object",
    "required": ["attr", "op", "value"],
    "properties": {
        "attr": {"type": "string", "minLength": 1},
        "op": {"enum": list(OPS)},
        "value": {},
    },
    "additionalProperties": False,
}

POLICY_SCHEMA = {
    "type": "object",
    "required": ["name", "phases"],
    "properties": {
        "name": {"type": "string"},
        "editable": {"type": "boolean"},
        "description": {"type": "string"},
        "phases": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["label", "all_of"],
                "properties": {
                    "label": {"type": "string"},
                    "group": {"type": "string"},
                    "all_of": {"type": "array", "items": _CONDITION_SCHEMA},
                    "any_of": {"type": "array", "items": _CONDITION_SCHEMA},
                },
                "additionalProperties": False,
            },
        },
    },
}


def policy_from_json(doc: Mapping) -> Policy:
    try:
        jsonschema.validate(doc, POLICY_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid policy: {exc.message}") from exc

    def conds(items):
        return tuple(Condition(c["attr"], c["op"], c["value"]) for c in items)

    phases = tuple(
        Phase(p["label"], conds(p["all_of"]), conds(p.get("any_of", [])), p.get("group"))
        for p in doc["phases"]
    )
    return Policy(doc["name"], phases)


def load_policy(path) -> Policy:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not JSON ({exc})") from exc
    return policy_from_json(doc)


def baseline_policy(config=None) -> Policy:
    """Load a baseline rollout from a JSON mapping or file; ``None`` loads the shipped default."""
    if config is None:
        text = resources.files("dcndp").joinpath("data/baseline_policy.json").read_text()
        return policy_from_json(json.loads(text))
    if isinstance(config, Mapping):
        return policy_from_json(config)
    return load_policy(config)


REALISTIC_LABEL = "priority groups"
REALISTIC_CONDITIONS = (
    Condition("is_healthcare_worker", "==", True),
    Condition("is_urgent_care_patient", "==", True),
    Condition("age", ">", 80),
)


def realistic_override(p: Policy, attributes: Sequence[str] | None = None) -> Policy:
    """Prepend one phase for healthcare workers, urgent-care patients and anyone over 80.

    ``attributes`` is the schema of the records the policy will see; when given
    it must carry the three fields. Applying the override twice is a no-op.
    """
    needed = {c.attr for c in REALISTIC_CONDITIONS}
    if attributes is not None and not needed <= set(attributes):
        raise SchemaError(f"attribute schema lacks {sorted(needed - set(attributes))}")
    first = Phase(REALISTIC_LABEL, (), REALISTIC_CONDITIONS)
    if p.phases and p.phases[0] == first:
        return p
    name = p.name if p.name.endswith("-realistic") else f"{p.name}-realistic"
    return Policy(name, (first,) + p.phases)


# --- decision trees -------------------------------------------------------


@dataclass
class TreeNode:
    counts: tuple[int, int]  # (label 0, label 1)
    depth: int
    feature: str | None = None
    kind: str | None = None  # "num", "bool" or "cat"
    threshold: Any = None  # numeric cut or category
    gain: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    @property
    def samples(self) -> int:
        return self.counts[0] + self.counts[1]

    @property
    def prob(self) -> float:
        return self.counts[1] / self.samples if self.samples else 0.0

    def conditions(self) -> tuple[Condition, Condition]:
        """(left condition, right condition); the left branch is where the condition holds."""
        f, t = self.feature, self.threshold
        if self.kind == "num":
            return Condition(f, "<=", t), Condition(f, ">", t)
        if self.kind == "bool":
            return Condition(f, "==", True), Condition(f, "==", False)
        return Condition(f, "==", t), Condition(f, "!=", t)

    def route(self, record: Mapping[str, Any]) -> "TreeNode":
        node = self
        while not node.is_leaf:
            node = node.left if node.conditions()[0].holds(record) else node.right
        return node

    def to_json(self) -> dict:
        out: dict[str, Any] = {"counts": list(self.counts), "prob": self.prob}
        if self.is_leaf:
            out["leaf"] = True
            return out
        out.update(feature=self.feature, kind=self.kind, threshold=_plain(self.threshold),
                   gain=self.gain, left=self.left.to_json(), right=self.right.to_json())
        return out


def _plain(v):
    return v.item() if isinstance(v, np.generic) else v


@dataclass
class DecisionTree:
    root: TreeNode
    features: tuple[str, ...]
    max_depth: int
    criterion: str = "entropy"
    lookahead_splits: int = 0  # splits taken on two-level gain only

    def leaves(self) -> list[TreeNode]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend((node.right, node.left))
        return out

    def splits(self) -> list[TreeNode]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if not node.is_leaf:
                out.append(node)
                stack.extend((node.right, node.left))
        return out

    @property
    def depth(self) -> int:
        return max(leaf.depth for leaf in self.leaves())

    def predict_proba(self, record: Mapping[str, Any]) -> float:
        return self.root.route(record).prob

    def predict(self, record: Mapping[str, Any]) -> int:
        return int(self.predict_proba(record) >= 0.5)

    def accuracy(self, features: Mapping[str, Sequence], labels: Sequence[int]) -> float:
        rows = _rows(features)
        hits = sum(self.predict(r) == int(y) for r, y in zip(rows, labels))
        return hits / len(rows)

    def to_json(self) -> dict:
        return {"criterion": self.criterion, "max_depth": self.max_depth,
                "features": list(self.features), "root": self.root.to_json()}


def _rows(features: Mapping[str, Sequence]) -> list[dict]:
    names = list(features)
    n = len(features[names[0]]) if names else 0
    return [{f: features[f][i] for f in names} for i in range(n)]


def _entropy(n1, n) -> np.ndarray | float:
    """Binary entropy in bits of counts n1 out of n (vectorised, 0 log 0 = 0)."""
    n1 = np.asarray(n1, dtype=float)
    n = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(n > 0, n1 / np.where(n > 0, n, 1), 0.0)
        h = -(np.where(p > 0, p * np.log2(np.where(p > 0, p, 1)), 0.0)
              + np.where(p < 1, (1 - p) * np.log2(np.where(p < 1, 1 - p, 1)), 0.0))
    return h


def _kind(values: Sequence) -> str:
    if all(isinstance(v, (bool, np.bool_)) for v in values):
        return "bool"
    if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in values):
        return "num"
    return "cat"


def _candidates(cols, kinds, y, idx):
    """Every admissible split of the rows ``idx`` with its information gain."""
    n = len(idx)
    yy = y[idx]
    n1 = int(yy.sum())
    parent = float(_entropy(n1, n))
    out = []
    for fo, (name, col) in enumerate(cols.items()):
        kind = kinds[name]
        vals = col[idx]
        if kind == "num":
            order = np.argsort(vals, kind="stable")
            sv = vals[order].astype(float)
            cum1 = np.cumsum(yy[order])
            cuts = np.flatnonzero(sv[1:] != sv[:-1])  # left = order[:c+1]
            if not len(cuts):
                continue
            nl = cuts + 1
            l1 = cum1[cuts]
            gains = parent - (nl * _entropy(l1, nl) + (n - nl) * _entropy(n1 - l1, n - nl)) / n
            for c, gval in zip(cuts, gains):
                thr = (sv[c] + sv[c + 1]) / 2
                out.append((float(gval), fo, float(thr), name, kind, thr, vals <= thr))
        else:
            cats = [True] if kind == "bool" else sorted(set(vals.tolist()), key=str)
            if kind == "cat" and len(cats) < 2:
                continue
            for cat in cats:
                mask = vals == cat
                nl = int(mask.sum())
                if nl in (0, n):
                    continue
                l1 = int(yy[mask].sum())
                gval = parent - (nl * _entropy(l1, nl) + (n - nl) * _entropy(n1 - l1, n - nl)) / n
                key = str(cat)
                out.append((float(gval), fo, key, name, kind, cat, mask))
    return parent, out


def _pick(cands):
    """Highest gain; ties go to the earlier feature, then the smaller threshold."""
    best = None
    for c in cands:
        if best is None or c[0] > best[0] + _EPS or (
            abs(c[0] - best[0]) <= _EPS and (c[1], c[2]) < (best[1], best[2])
        ):
            best = c
    return best


def train_tree(features: Mapping[str, Sequence], labels: Sequence[int], max_depth: int = 5) -> DecisionTree:
    """Greedy top-down induction with the entropy criterion.

    A node stops at purity, the depth cap, or when no split gains information.
    The one exception: when every single split has zero gain but some split
    followed by the best split of each child does gain (XOR-like structure),
    that split is taken so the children can separate the classes.
    """
    if not features:
        raise DomainError("no features")
    names = list(features)
    n = len(features[names[0]])
    if n == 0:
        raise DomainError("empty training set")
    if any(len(features[f]) != n for f in names) or len(labels) != n:
        raise DomainError("features and labels must have one entry per row")
    if max_depth < 0:
        raise DomainError("max_depth must be nonnegative")
    kinds = {f: _kind(features[f]) for f in names}
    cols = {f: np.asarray(features[f], dtype=object if kinds[f] == "cat" else None) for f in names}
    y = np.asarray([int(v) for v in labels], dtype=np.int64)
    if not np.isin(y, (0, 1)).all():
        raise DomainError("labels must be 0 or 1")
    tree = DecisionTree(TreeNode((0, 0), 0), tuple(names), max_depth)

    def lookahead(idx, parent, cands):
        best, best_total = None, _EPS
        for c in cands:
            mask = c[6]
            total = 0.0
            for part in (idx[mask], idx[~mask]):
                if len(part) == 0:
                    continue
                p_ent, sub = _candidates(cols, kinds, y, part)
                b = _pick(sub)
                child_after = p_ent - (b[0] if b is not None and b[0] > _EPS else 0.0)
                total += len(part) * child_after
            gain2 = parent - total / len(idx)
            if gain2 > best_total + _EPS:
                best, best_total = c, gain2
        return best

    def grow(idx, depth) -> TreeNode:
        n1 = int(y[idx].sum())
        node = TreeNode((len(idx) - n1, n1), depth)
        if n1 in (0, len(idx)) or depth >= max_depth:
            return node
        parent, cands = _candidates(cols, kinds, y, idx)
        best = _pick(cands)
        if best is None:
            return node
        if best[0] <= _EPS:
            best = lookahead(idx, parent, cands) if depth + 2 <= max_depth else None
            if best is None:
                return node
            tree.lookahead_splits += 1
        gain, _, _, name, kind, thr, mask = best
        node.feature, node.kind, node.threshold, node.gain = name, kind, _plain(thr), gain
        node.left = grow(idx[mask], depth + 1)
        node.right = grow(idx[~mask], depth + 1)
        return node

    tree.root = grow(np.arange(n), 0)
    return tree


def cross_val_accuracy(features: Mapping[str, Sequence], labels: Sequence[int], folds: int = 5,
                       max_depth: int = 5, seed=0) -> float:
    """k-fold accuracy, a diagnostic only; the trees used for policies see all rows."""
    names = list(features)
    n = len(labels)
    if n < folds:
        raise DomainError("fewer rows than folds")
    perm = np.random.default_rng(seed).permutation(n)
    rows = _rows(features)
    hits = 0
    for k in range(folds):
        test = set(perm[k::folds].tolist())
        train = [i for i in range(n) if i not in test]
        t = train_tree({f: [features[f][i] for i in train] for f in names}, [labels[i] for i in train], max_depth)
        hits += sum(t.predict(rows[i]) == int(labels[i]) for i in test)
    return hits / n


# --- tree to policy ---------------------------------------------------------


def _simplify(conds: Sequence[Condition]) -> tuple[Condition, ...]:
    """Drop numeric bounds implied by tighter ones on the same attribute."""
    upper: dict[str, Condition] = {}
    lower: dict[str, Condition] = {}
    rest = []
    for c in conds:
        if c.op == "<=":
            if c.attr not in upper or c.value < upper[c.attr].value:
                upper[c.attr] = c
        elif c.op == ">":
            if c.attr not in lower or c.value > lower[c.attr].value:
                lower[c.attr] = c
        elif c not in rest:
            rest.append(c)
    kept = {id(c) for c in (*upper.values(), *lower.values())}
    out = []
    for c in conds:
        if id(c) in kept and c not in out:
            out.append(c)
    return tuple(out + rest)


def tree_leaf_paths(tree: DecisionTree) -> list[tuple[TreeNode, tuple[Condition, ...]]]:
    """Leaves left to right with their root-to-leaf condition lists."""
    out = []

    def walk(node, path):
        if node.is_leaf:
            out.append((node, tuple(path)))
            return
        lc, rc = node.conditions()
        walk(node.left, path + [lc])
        walk(node.right, path + [rc])

    walk(tree.root, [])
    return out


def tree_to_policy(tree: DecisionTree, min_leaf_prob: float = 0.5, name: str = "dcndp") -> Policy:
    """Leaves at or above ``min_leaf_prob`` become phases, most likely first; the rest fall to the catch-all."""
    paths = tree_leaf_paths(tree)
    order = sorted(range(len(paths)), key=lambda i: (-paths[i][0].prob, -paths[i][0].samples, i))
    phases = []
    for i in order:
        leaf, conds = paths[i]
        if leaf.prob < min_leaf_prob or leaf.samples == 0:
            continue
        conds = _simplify(conds)
        label = f"leaf {i} (p={leaf.prob:.2f}, n={leaf.samples})" if conds else "(always)"
        phases.append(Phase(label, conds))
    phases.append(Phase(CATCH_ALL))
    return Policy(name, tuple(phases))


def policy_phase_order(tree: DecisionTree) -> list[int]:
    """Leaf indices in the order ``tree_to_policy`` would rank them (before thresholding)."""
    paths = tree_leaf_paths(tree)
    return sorted(range(len(paths)), key=lambda i: (-paths[i][0].prob, -paths[i][0].samples, i))


def entropy(n1: int, n: int) -> float:
    return float(_entropy(n1, n)) if n else 0.0


__all__ = [
    "Condition", "Phase", "Policy", "DecisionTree", "TreeNode", "train_tree", "tree_to_policy",
    "realistic_override", "baseline_policy", "policy_from_json", "load_policy", "node_records",
    "feature_table", "cross_val_accuracy", "POLICY_SCHEMA", "FEATURES", "entropy",
]
