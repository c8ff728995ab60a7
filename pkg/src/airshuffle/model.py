"""Domain model: system parameters, file placement, reduce assignment, demand sets.

Node and file indices are 1-based in every public interface. Loads are exact
`fractions.Fraction` values so equality checks need no tolerance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from math import comb
from typing import NamedTuple


class Iv(NamedTuple):
    """Identifier of one intermediate value: output of Map on file ``n`` feeding reduce function ``q``."""

    q: int
    n: int


@dataclass(frozen=True)
class SystemParams:
    """Problem-size parameters: K nodes, N files, Q reduce functions, replication target r."""

    K: int
    N: int
    Q: int
    r: Fraction

    def __post_init__(self) -> None:
        if self.K < 1:
            raise ValueError(f"K must be positive, got {self.K}")
        if self.N < self.K:
            raise ValueError(f"N must be at least K ({self.K}), got {self.N}")
        if self.Q < 1 or self.Q % self.K != 0:
            raise ValueError(f"Q must be a positive multiple of K={self.K}, got {self.Q}")
        object.__setattr__(self, "r", Fraction(self.r))
        if not 1 <= self.r <= self.K:
            raise ValueError(f"r must lie in [1, {self.K}], got {self.r}")

    @property
    def functions_per_node(self) -> int:
        return self.Q // self.K


@dataclass(frozen=True)
class Placement:
    """Which files each node maps, after padding with empty files.

    ``mapped_files[k-1]`` is the file-index set of node k over [1..n_total];
    files with index > n_real are zero-content padding.
    """

    mapped_files: tuple[frozenset[int], ...]
    n_total: int
    n_real: int
    padding: int

    def __post_init__(self) -> None:
        if self.n_total != self.n_real + self.padding:
            raise ValueError("n_total must equal n_real + padding")
        covered = frozenset().union(*self.mapped_files) if self.mapped_files else frozenset()
        if covered != frozenset(range(1, self.n_total + 1)):
            missing = sorted(set(range(1, self.n_total + 1)) - covered)
            raise ValueError(f"every file must be mapped somewhere; unmapped: {missing[:8]}")

    @property
    def K(self) -> int:
        return len(self.mapped_files)

    def is_padding(self, n: int) -> bool:
        return n > self.n_real


@dataclass(frozen=True)
class ReduceAssignment:
    """Disjoint equal-size reduce-function index sets, one per node."""

    reduce_sets: tuple[tuple[int, ...], ...]

    @property
    def K(self) -> int:
        return len(self.reduce_sets)

    @property
    def Q(self) -> int:
        return sum(len(w) for w in self.reduce_sets)

    def owner(self, q: int) -> int:
        for k, w in enumerate(self.reduce_sets, start=1):
            if q in w:
                return k
        raise ValueError(f"reduce function {q} is not assigned")


@dataclass(frozen=True)
class DemandSet:
    """Per-node intermediate values that must travel over the air."""

    per_node: tuple[tuple[Iv, ...], ...]

    @property
    def total(self) -> int:
        return sum(len(g) for g in self.per_node)

    def as_entries(self) -> list[tuple[int, Iv]]:
        """Flattened (receiver, value) list, sorted by (receiver, q, n)."""
        return [(k, iv) for k, g in enumerate(self.per_node, start=1) for iv in g]


def placement_granularity(K: int, r: int) -> int:
    """Minimal file count divisible into symmetric placement groups for (K, r)."""
    if 2 * r >= K:
        return comb(K, r)
    return comb(K - r - 1, r - 1) * comb(K, r)


def symmetric_placement(params: SystemParams) -> Placement:
    """Pad to the placement granularity and replicate every file on exactly r nodes.

    Files are partitioned into groups of C(K, r); within a group, file j lands on
    the j-th r-subset of [1..K] in lexicographic order.
    """
    K, N = params.K, params.N
    if params.r.denominator != 1:
        raise ValueError(f"placement construction needs integer r, got {params.r}")
    r = int(params.r)
    n0 = placement_granularity(K, r)
    alpha = (N - 1) // n0  # largest alpha with alpha * n0 < N
    n_total = (alpha + 1) * n0
    subsets = list(combinations(range(1, K + 1), r))
    mapped: list[set[int]] = [set() for _ in range(K)]
    for n in range(1, n_total + 1):
        for k in subsets[(n - 1) % len(subsets)]:
            mapped[k - 1].add(n)
    return Placement(
        mapped_files=tuple(frozenset(m) for m in mapped),
        n_total=n_total,
        n_real=N,
        padding=n_total - N,
    )


def support_set(p: Placement, n: int) -> tuple[int, ...]:
    """Nodes holding file n, ascending."""
    if not 1 <= n <= p.n_total:
        raise ValueError(f"file index {n} outside [1, {p.n_total}]")
    return tuple(k for k in range(1, p.K + 1) if n in p.mapped_files[k - 1])


def compute_computation_load(p: Placement) -> Fraction:
    """Total map work normalized by the padded file count, exact."""
    return Fraction(sum(len(m) for m in p.mapped_files), p.n_total)


def assign_reduce_functions(params: SystemParams) -> ReduceAssignment:
    """Contiguous blocks of Q/K reduce-function indices per node."""
    per = params.functions_per_node
    return ReduceAssignment(
        tuple(tuple(range((k - 1) * per + 1, k * per + 1)) for k in range(1, params.K + 1))
    )


def demand_set(p: Placement, a: ReduceAssignment) -> DemandSet:
    """Values each node needs but did not map itself, padding files included."""
    if p.K != a.K:
        raise ValueError(f"placement has K={p.K} but assignment has K={a.K}")
    per_node = []
    for k in range(1, p.K + 1):
        have = p.mapped_files[k - 1]
        per_node.append(
            tuple(
                Iv(q, n)
                for q in a.reduce_sets[k - 1]
                for n in range(1, p.n_total + 1)
                if n not in have
            )
        )
    return DemandSet(tuple(per_node))


def total_demand(p: Placement, Q: int) -> int:
    """Count of intermediate values that must be shuffled, padding included."""
    if Q % p.K != 0:
        raise ValueError(f"Q={Q} is not a multiple of K={p.K}")
    per = Q // p.K
    return sum(per * (p.n_total - len(m)) for m in p.mapped_files)


def placement_to_doc(p: Placement, a: ReduceAssignment, r: Fraction | int) -> dict:
    """Interchange document for the CLI and test fixtures. Arrays sorted ascending."""
    return {
        "K": p.K,
        "Q": a.Q,
        "r": int(r) if Fraction(r).denominator == 1 else str(Fraction(r)),
        "n_real": p.n_real,
        "n_total": p.n_total,
        "mapped_files": [sorted(m) for m in p.mapped_files],
        "reduce_sets": [sorted(w) for w in a.reduce_sets],
    }


def placement_from_doc(doc: dict) -> tuple[Placement, ReduceAssignment]:
    try:
        mapped = tuple(frozenset(m) for m in doc["mapped_files"])
        p = Placement(
            mapped_files=mapped,
            n_total=int(doc["n_total"]),
            n_real=int(doc["n_real"]),
            padding=int(doc["n_total"]) - int(doc["n_real"]),
        )
        a = ReduceAssignment(tuple(tuple(sorted(w)) for w in doc["reduce_sets"]))
    except KeyError as exc:
        raise ValueError(f"placement document missing field {exc}") from exc
    if a.K != p.K:
        raise ValueError("mapped_files and reduce_sets disagree on node count")
    return p, a


def placement_to_json(p: Placement, a: ReduceAssignment, r: Fraction | int) -> str:
    return json.dumps(placement_to_doc(p, a, r), indent=2, sort_keys=True)


def placement_from_json(text: str) -> tuple[Placement, ReduceAssignment]:
    return placement_from_doc(json.loads(text))
