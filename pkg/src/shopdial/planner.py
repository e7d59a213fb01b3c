"""Decision-tree dialogue planning.

Each search iteration fits a multi-way categorical tree over the current
candidate set, walks it along the target product's branch and turns the
visited aspects into plan steps.
"""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence, Union

from .catalog import Catalog, fold
from .preference import Preference
from .search import Entry, Interest, RevealedPreference, converged, filter_products

logger = logging.getLogger(__name__)

CRITERIA = ("gain-ratio", "gain", "gini")
BRANCH_POLICIES = ("target", "majority")
_EPS = 1e-12


class _Missing:
    def __repr__(self) -> str:
        return "MISSING"

    def __lt__(self, other):
        return False

    def __gt__(self, other):
        return other is not self


MISSING = _Missing()


class NoUsefulSplit(Exception):
    pass


class PlanningError(RuntimeError):
    """Internal invariant violation (e.g. the target left the candidate set)."""


@dataclass
class TreeDataset:
    feature_space: list[str]
    ids: list[str]
    rows: list[dict]
    labels: list[str]


def make_label(row: dict, feature_space: Sequence[str]) -> str:
    return "&".join(f"{a}:{row[a]}" for a in feature_space if row[a] is not MISSING)


def make_dataset(product_set: Sequence[str], catalog: Catalog, rev_pref: RevealedPreference) -> TreeDataset:
    if not product_set:
        raise ValueError("product_set is empty")
    revealed = rev_pref.aspects()
    feature_space: list[str] = []
    seen: set[str] = set()
    for pid in product_set:
        for a in catalog[pid].aspects:
            if fold(a) not in seen and fold(a) not in revealed:
                seen.add(fold(a))
                feature_space.append(a)
    rows = []
    for pid in product_set:
        p = catalog[pid]
        rows.append({a: (v if (v := p.get(a)) is not None else MISSING) for a in feature_space})
    labels = [make_label(r, feature_space) for r in rows]
    return TreeDataset(feature_space, list(product_set), rows, labels)


def _entropy(counts) -> float:
    n = sum(counts)
    if n == 0:
        return 0.0
    return math.log2(n) - sum(c * math.log2(c) for c in counts if c) / n


def _gini(counts) -> float:
    n = sum(counts)
    return 1.0 - sum((c / n) ** 2 for c in counts) if n else 0.0


def split_scores(rows: Sequence[dict], labels: Sequence[str], aspect: str) -> dict[str, float]:
    """Gain, gain ratio and Gini decrease of a multi-way split on ``aspect``."""
    n = len(labels)
    branches: dict = {}
    for row, label in zip(rows, labels):
        branches.setdefault(row.get(aspect, MISSING), Counter())[label] += 1
    parent = Counter(labels)
    sizes = [sum(c.values()) for c in branches.values()]
    h_cond = sum(s / n * _entropy(c.values()) for s, c in zip(sizes, branches.values()))
    gain = _entropy(parent.values()) - h_cond
    split_info = _entropy(sizes)
    ratio = gain / split_info if split_info > _EPS else 0.0
    gini = _gini(parent.values()) - sum(s / n * _gini(c.values()) for s, c in zip(sizes, branches.values()))
    return {"gain": gain, "gain-ratio": ratio, "gini": gini, "conditional_entropy": h_cond}


def best_split(rows: Sequence[dict], labels: Sequence[str], candidate_aspects: Sequence[str],
               criterion: str = "gain-ratio") -> str:
    """Aspect maximizing ``criterion``; ties go to higher information gain, then the
    lexicographically smaller aspect name."""
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}")
    if len(set(labels)) < 2:
        raise ValueError("need at least two distinct labels to split")
    if not candidate_aspects:
        raise ValueError("no candidate aspects")
    best = None
    best_key = None
    for aspect in sorted(candidate_aspects):
        s = split_scores(rows, labels, aspect)
        key = (s[criterion], s["gain"])
        if best_key is None or _beats(key, best_key):
            best, best_key = aspect, key
    if best_key[0] <= _EPS:
        raise NoUsefulSplit("no candidate aspect separates the labels")
    return best


def _beats(key, incumbent) -> bool:
    for a, b in zip(key, incumbent):
        if a > b + _EPS:
            return True
        if a < b - _EPS:
            return False
    return False


@dataclass
class Leaf:
    label: str
    members: tuple[str, ...]
    pure: bool


@dataclass
class Node:
    aspect: str
    branches: dict
    counts: dict
    members: tuple[str, ...]


TreeNode = Union[Node, Leaf]


@dataclass
class DecisionTree:
    root: TreeNode
    dataset: TreeDataset
    _rows_by_id: dict = field(init=False, repr=False)

    def __post_init__(self):
        self._rows_by_id = dict(zip(self.dataset.ids, self.dataset.rows))

    def row(self, pid: str) -> dict | None:
        return self._rows_by_id.get(pid)

    def depth(self, node: TreeNode | None = None) -> int:
        node = self.root if node is None else node
        if isinstance(node, Leaf):
            return 0
        return 1 + max(self.depth(c) for c in node.branches.values())

    def leaves(self, node: TreeNode | None = None) -> list[Leaf]:
        node = self.root if node is None else node
        if isinstance(node, Leaf):
            return [node]
        return [leaf for c in node.branches.values() for leaf in self.leaves(c)]


@dataclass
class TreeConfig:
    criterion: str = "gain-ratio"
    max_depth: int | None = None
    min_leaf: int = 1


def fit_tree(dataset: TreeDataset, config: TreeConfig | None = None) -> DecisionTree:
    config = config or TreeConfig()
    if not dataset.ids:
        raise ValueError("dataset is empty")
    idx = list(range(len(dataset.ids)))
    root = _grow(dataset, idx, list(dataset.feature_space), 0, config)
    return DecisionTree(root, dataset)


def _leaf(dataset: TreeDataset, idx: list[int]) -> Leaf:
    labels = Counter(dataset.labels[i] for i in idx)
    label = min(labels, key=lambda lab: (-labels[lab], lab))
    return Leaf(label, tuple(dataset.ids[i] for i in idx), len(labels) == 1)


def _grow(dataset: TreeDataset, idx: list[int], candidates: list[str], depth: int, config: TreeConfig) -> TreeNode:
    labels = [dataset.labels[i] for i in idx]
    if len(set(labels)) < 2 or not candidates:
        return _leaf(dataset, idx)
    if config.max_depth is not None and depth >= config.max_depth:
        return _leaf(dataset, idx)
    rows = [dataset.rows[i] for i in idx]
    if config.min_leaf > 1:
        candidates = [a for a in candidates
                      if min(Counter(r[a] for r in rows).values()) >= config.min_leaf]
        if not candidates:
            return _leaf(dataset, idx)
    try:
        aspect = best_split(rows, labels, candidates, config.criterion)
    except NoUsefulSplit:
        return _leaf(dataset, idx)
    parts: dict = {}
    for i in idx:
        parts.setdefault(dataset.rows[i][aspect], []).append(i)
    rest = [a for a in candidates if a != aspect]
    branches = {}
    for value in sorted(parts, key=lambda v: (v is MISSING, "" if v is MISSING else v)):
        branches[value] = _grow(dataset, parts[value], rest, depth + 1, config)
    counts = {v: len(parts[v]) for v in branches}
    return Node(aspect, branches, counts, tuple(dataset.ids[i] for i in idx))


def step_for(aspect: str, preference: Preference) -> Entry:
    e = preference.entry(aspect)
    if e is None or e.interest is Interest.OPTIONAL:
        return Entry(aspect, "", Interest.OPTIONAL)
    return Entry(aspect, e.value, e.interest)


def traverse(tree: DecisionTree, preference: Preference, policy: str = "target") -> list[Entry]:
    """Walk root to leaf, emitting one plan step per internal node.

    ``policy="target"`` always descends into the branch holding the target
    product's value. ``"majority"`` follows the wanted value at Wanted nodes
    and otherwise the largest admissible branch; it may stop early.
    """
    if policy not in BRANCH_POLICIES:
        raise ValueError(f"unknown branch policy {policy!r}")
    target_row = tree.row(preference.target_id)
    if policy == "target" and target_row is None:
        raise PlanningError(f"target {preference.target_id!r} is not in the fitted candidate set")
    plan = []
    node = tree.root
    while isinstance(node, Node):
        step = step_for(node.aspect, preference)
        plan.append(step)
        if policy == "target":
            key = target_row[node.aspect]
            if key not in node.branches:
                raise PlanningError(f"no branch {key!r} under {node.aspect!r} for the target")
        else:
            key = _majority_branch(node, step)
            if key is None:
                break
        node = node.branches[key]
    return plan


def _majority_branch(node: Node, step: Entry):
    if step.interest is Interest.WANTED:
        return next((v for v in node.branches if v is not MISSING and fold(v) == fold(step.value)), None)
    allowed = [v for v in node.branches
               if not (step.interest is Interest.UNWANTED and v is not MISSING and fold(v) == fold(step.value))]
    if not allowed:
        return None
    return max(allowed, key=lambda v: node.counts[v])


@dataclass
class PlannerConfig:
    criterion: str = "gain-ratio"
    max_depth: int | None = None
    min_leaf: int = 1
    max_steps_per_turn: int | None = None
    refit_per_step: bool = False
    branch_policy: str = "target"

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if self.branch_policy not in BRANCH_POLICIES:
            raise ValueError(f"unknown branch policy {self.branch_policy!r}")
        if self.max_steps_per_turn is not None and self.max_steps_per_turn < 1:
            raise ValueError("max_steps_per_turn must be positive")

    def tree_config(self) -> TreeConfig:
        return TreeConfig(self.criterion, self.max_depth, self.min_leaf)


@dataclass
class Iteration:
    candidates: tuple[str, ...]
    plan: list[Entry]

    def to_record(self) -> dict:
        return {"n_candidates": len(self.candidates), "aspects": [s.aspect for s in self.plan]}


@dataclass
class PlanResult:
    plan_history: list[Entry]
    final_candidates: tuple[str, ...]
    trace: list[Iteration]
    stop_reason: str

    @property
    def converged(self) -> bool:
        return self.stop_reason == "converged"


class EpisodePlanner:
    """Stepwise planning loop; one :meth:`step` per search iteration.

    ``step`` returns the next :class:`Iteration` or None once the candidate set
    has converged or there is nothing left to ask.
    """

    def __init__(self, catalog: Catalog, preference: Preference, config: PlannerConfig | None = None):
        self.catalog = catalog
        self.preference = preference
        self.config = config or PlannerConfig()
        self.rev_pref = RevealedPreference(preference.category)
        self.plan_history: list[Entry] = []
        self.trace: list[Iteration] = []
        self.stop_reason: str | None = None
        self.candidates: tuple[str, ...] = self._search(self.rev_pref)

    def _search(self, rev_pref: RevealedPreference) -> tuple[str, ...]:
        found = tuple(filter_products(self.catalog, rev_pref))
        if not found:
            raise PlanningError("search returned no products")
        if self.preference.target_id not in found and self.config.branch_policy == "target":
            raise PlanningError(f"target {self.preference.target_id!r} dropped out of the candidate set")
        return found

    def _plan_once(self, rev_pref: RevealedPreference, candidates) -> list[Entry]:
        dataset = make_dataset(candidates, self.catalog, rev_pref)
        tree = fit_tree(dataset, self.config.tree_config())
        return traverse(tree, self.preference, self.config.branch_policy)

    def step(self) -> Iteration | None:
        if self.stop_reason is not None:
            return None
        if converged(self.candidates, self.preference, self.catalog):
            self.stop_reason = "converged"
            return None
        cap = self.config.max_steps_per_turn
        if self.config.refit_per_step:
            plan: list[Entry] = []
            local, pool = self.rev_pref, self.candidates
            while cap is None or len(plan) < cap:
                if plan and converged(pool, self.preference, self.catalog):
                    break
                steps = self._plan_once(local, pool)
                if not steps:
                    break
                plan.append(steps[0])
                local = local.extend(steps[:1])
                pool = self._search(local)
        else:
            plan = self._plan_once(self.rev_pref, self.candidates)
            if cap is not None:
                plan = plan[:cap]
        if not plan:
            self.stop_reason = "aspects exhausted"
            return None
        it = Iteration(self.candidates, plan)
        self.trace.append(it)
        self.plan_history.extend(plan)
        self.rev_pref = self.rev_pref.extend(plan)
        new = self._search(self.rev_pref)
        if len(new) > len(self.candidates):
            raise PlanningError("candidate set grew")
        self.candidates = new
        return it

    def run(self) -> PlanResult:
        while self.step() is not None:
            pass
        return self.result()

    def result(self) -> PlanResult:
        return PlanResult(list(self.plan_history), self.candidates, list(self.trace), self.stop_reason or "running")


def plan_dialogue(catalog: Catalog, preference: Preference, config: PlannerConfig | None = None) -> PlanResult:
    return EpisodePlanner(catalog, preference, config).run()
