"""Shuffle-phase block schedules: construction, validation, and a brute-force oracle.

A block delivers one coded packet per active receiver. Admissibility of a block
reduces to a counting condition per delivered value: the receivers that can
neither cancel the packet from cache nor be the intended target must number at
most |support| - 1, so a zero-forcing vector exists for generic channels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from typing import Iterable, NamedTuple

from .model import (
    DemandSet,
    Iv,
    Placement,
    ReduceAssignment,
    compute_computation_load,
    demand_set,
    placement_granularity,
    support_set,
)


class ScheduleError(ValueError):
    """Raised when schedule construction preconditions fail."""


class DemandTooLargeError(ScheduleError):
    """The brute-force oracle refuses instances above its search guard."""


class CapExceededError(ScheduleError):
    """No schedule within the block-count cap."""


class Delivery(NamedTuple):
    q: int
    n: int
    to: int

    @property
    def iv(self) -> Iv:
        return Iv(self.q, self.n)


@dataclass(frozen=True)
class Block:
    """One transmission slot: deliveries sorted by receiver, one per receiver."""

    deliveries: tuple[Delivery, ...]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "deliveries", tuple(sorted(self.deliveries, key=lambda d: d.to))
        )
        recv = [d.to for d in self.deliveries]
        if len(set(recv)) != len(recv):
            raise ScheduleError(f"receivers must be distinct within a block, got {recv}")

    @property
    def receivers(self) -> tuple[int, ...]:
        return tuple(d.to for d in self.deliveries)


@dataclass(frozen=True)
class Schedule:
    blocks: tuple[Block, ...]

    @property
    def T(self) -> int:
        return len(self.blocks)

    def deliveries(self) -> list[Delivery]:
        return [d for b in self.blocks for d in b.deliveries]


@dataclass(frozen=True)
class BlockCheck:
    index: int
    size: int
    receiver_bound: int
    zf_slack: dict[Delivery, int]
    vacuous: bool


@dataclass(frozen=True)
class FeasibilityReport:
    ok: bool
    per_block: tuple[BlockCheck, ...]
    violations: tuple[str, ...]

    def to_doc(self) -> dict:
        return {
            "ok": self.ok,
            "violations": list(self.violations),
            "per_block": [
                {
                    "block": c.index,
                    "size": c.size,
                    "bound": c.receiver_bound,
                    "vacuous": c.vacuous,
                    "zf_slack": {f"q={d.q},n={d.n},to={d.to}": s for d, s in c.zf_slack.items()},
                }
                for c in self.per_block
            ],
        }

    def render_text(self) -> str:
        lines = [f"{'block':>5} {'size':>4} {'bound':>5} {'min_slack':>9} {'vacuous':>7}"]
        for c in self.per_block:
            slack = min(c.zf_slack.values()) if c.zf_slack else 0
            lines.append(
                f"{c.index:>5} {c.size:>4} {c.receiver_bound:>5} {slack:>9} "
                f"{'yes' if c.vacuous else 'no':>7}"
            )
        lines.append("OK" if self.ok else "VIOLATIONS:")
        lines.extend(f"  - {v}" for v in self.violations)
        return "\n".join(lines)


def _require_symmetric(p: Placement) -> int:
    load = compute_computation_load(p)
    if load.denominator != 1:
        raise ScheduleError(f"placement is not symmetric: load {load} is fractional")
    r = int(load)
    for n in range(1, p.n_total + 1):
        if len(support_set(p, n)) != r:
            raise ScheduleError(
                f"placement is not symmetric: file {n} replicated "
                f"{len(support_set(p, n))} times, expected {r}"
            )
    n0 = placement_granularity(p.K, r) if r < p.K else 1
    if p.n_total % n0 != 0:
        raise ScheduleError(f"padded file count {p.n_total} is not a multiple of {n0}")
    return r


def schedule(p: Placement, a: ReduceAssignment) -> Schedule:
    """Full shuffle schedule for a symmetric placement; empty when r = K."""
    r = _require_symmetric(p)
    if r >= p.K:
        return Schedule(())
    if 2 * r >= p.K:
        return schedule_high_r(p, a)
    return schedule_low_r(p, a)


def schedule_high_r(p: Placement, a: ReduceAssignment) -> Schedule:
    """All K nodes receive in every block; one value per demand list per block."""
    r = _require_symmetric(p)
    if not (2 * r >= p.K and r < p.K):
        raise ScheduleError(f"high-replication schedule needs K/2 <= r < K, got r={r}, K={p.K}")
    demand = demand_set(p, a)
    pending = [sorted(g) for g in demand.per_node]
    lengths = {len(g) for g in pending}
    if len(lengths) != 1:
        raise ScheduleError(f"unequal per-node demand sizes {sorted(lengths)}")
    T = lengths.pop()
    blocks = []
    for t in range(T):
        blocks.append(
            Block(tuple(Delivery(*pending[k][t], to=k + 1) for k in range(p.K)))
        )
    return Schedule(tuple(blocks))


def schedule_low_r(p: Placement, a: ReduceAssignment) -> Schedule:
    """2r receivers per block, iterating receiver sets; supports lie inside the receiver set.

    For each 2r-subset R of nodes (lexicographic) the schedule emits
    copies x C(2r-1, r) blocks; in a block, receiver k in R takes one value whose
    support is an r-subset of R minus k. Which value of each pool goes to which
    occurrence is chosen by a packing step that concentrates padding-only blocks.
    """
    K = p.K
    r = _require_symmetric(p)
    if not 1 <= r < K / 2:
        raise ScheduleError(f"low-replication schedule needs 1 <= r < K/2, got r={r}, K={K}")
    per_node_q = a.Q // K
    copies = (p.n_total // placement_granularity(K, r)) * per_node_q
    positions = comb(2 * r - 1, r)

    # value pools: pool[(k, S)] = demanded values of node k with support exactly S
    by_support: dict[tuple[int, ...], list[int]] = {}
    for n in range(1, p.n_total + 1):
        by_support.setdefault(support_set(p, n), []).append(n)
    pools: dict[tuple[int, tuple[int, ...]], list[Iv]] = {}
    for k in range(1, K + 1):
        for s in combinations([x for x in range(1, K + 1) if x != k], r):
            pools[(k, s)] = sorted(
                Iv(q, n) for q in a.reduce_sets[k - 1] for n in by_support.get(s, ())
            )

    # group = one copy for one receiver set; occurrence = (group, k, S) slot
    groups: list[tuple[int, ...]] = [
        R for R in combinations(range(1, K + 1), 2 * r) for _ in range(copies)
    ]
    occ_index: dict[tuple[int, tuple[int, ...]], list[int]] = {key: [] for key in pools}
    for g, R in enumerate(groups):
        for k in R:
            for s in combinations(tuple(x for x in R if x != k), r):
                occ_index[(k, s)].append(g)

    vacuous_per_group = _plan_vacuous(p, groups, pools, occ_index, positions)
    designated = _designate_padding(p, groups, pools, occ_index, vacuous_per_group)

    # hand values to occurrences: designated slots take padding, others lowest unsent
    assignment: dict[tuple[int, tuple[int, ...], int], Iv] = {}
    for key, group_list in occ_index.items():
        reals = [iv for iv in pools[key] if not p.is_padding(iv.n)]
        pads = [iv for iv in pools[key] if p.is_padding(iv.n)]
        if len(group_list) != len(reals) + len(pads):
            raise AssertionError(f"pool {key}: {len(group_list)} slots for {len(pools[key])} values")
        for g in group_list:
            if (key[0], key[1], g) in designated:
                assignment[(key[0], key[1], g)] = pads.pop(0)
            else:
                assignment[(key[0], key[1], g)] = reals.pop(0) if reals else pads.pop(0)

    blocks = []
    for g, R in enumerate(groups):
        # per receiver, order its subsets so padding-designated ones fill the tail
        order: dict[int, list[tuple[int, ...]]] = {}
        for k in R:
            subsets = list(combinations(tuple(x for x in R if x != k), r))
            tail = [s for s in subsets if (k, s, g) in designated]
            head = [s for s in subsets if (k, s, g) not in designated]
            order[k] = head + tail
        for i in range(positions):
            blocks.append(
                Block(
                    tuple(
                        Delivery(*assignment[(k, order[k][i], g)], to=k) for k in R
                    )
                )
            )
    return Schedule(tuple(blocks))


def _plan_vacuous(
    p: Placement,
    groups: list[tuple[int, ...]],
    pools: dict[tuple[int, tuple[int, ...]], list[Iv]],
    occ_index: dict[tuple[int, tuple[int, ...]], list[int]],
    positions: int,
) -> list[int]:
    """How many all-padding blocks to target per receiver-set copy.

    Exhausts candidate targets in descending total (lexicographic tie-break) and
    keeps the first per-node-feasible one. Skipped for padding-free or large
    instances, where the answer is all zeros.
    """
    zero = [0] * len(groups)
    pad_total = sum(
        1 for pool in pools.values() for iv in pool if p.is_padding(iv.n)
    )
    if pad_total == 0 or len(groups) > 8 or positions > 6:
        return zero
    receivers_per_block = len(groups[0])
    best_sum = min(pad_total // receivers_per_block, len(groups) * positions)
    for total in range(best_sum, 0, -1):
        for cand in _compositions(total, len(groups), positions):
            if _vacuous_feasible(p, groups, pools, occ_index, cand):
                return list(cand)
    return zero


def _compositions(total: int, parts: int, max_part: int) -> Iterable[tuple[int, ...]]:
    if parts == 1:
        if total <= max_part:
            yield (total,)
        return
    for head in range(min(total, max_part), -1, -1):
        for rest in _compositions(total - head, parts - 1, max_part):
            yield (head,) + rest


def _vacuous_feasible(
    p: Placement,
    groups: list[tuple[int, ...]],
    pools: dict[tuple[int, tuple[int, ...]], list[Iv]],
    occ_index: dict[tuple[int, tuple[int, ...]], list[int]],
    target: tuple[int, ...],
) -> bool:
    for k in sorted({k for k, _ in pools}):
        demand = sum(target[g] for g, R in enumerate(groups) if k in R)
        if demand == 0:
            continue
        flow = _max_flow_padding(p, k, groups, pools, occ_index, target)
        if flow < demand:
            return False
    return True


def _designate_padding(
    p: Placement,
    groups: list[tuple[int, ...]],
    pools: dict[tuple[int, tuple[int, ...]], list[Iv]],
    occ_index: dict[tuple[int, tuple[int, ...]], list[int]],
    target: list[int],
) -> set[tuple[int, tuple[int, ...], int]]:
    """Pick, per node, which (subset, copy) slots carry padding values."""
    designated: set[tuple[int, tuple[int, ...], int]] = set()
    if not any(target):
        return designated
    for k in sorted({k for k, _ in pools}):
        flows = _max_flow_padding(
            p, k, groups, pools, occ_index, tuple(target), return_edges=True
        )
        for s, g in flows:
            designated.add((k, s, g))
    return designated


def _max_flow_padding(
    p: Placement,
    k: int,
    groups: list[tuple[int, ...]],
    pools: dict[tuple[int, tuple[int, ...]], list[Iv]],
    occ_index: dict[tuple[int, tuple[int, ...]], list[int]],
    target: tuple[int, ...],
    return_edges: bool = False,
):
    """Max flow from node k's padding supplies to per-group vacuous demands.

    Tiny instances only; plain BFS augmentation. Nodes: source 0, one per
    subset-pool, one per group, sink last.
    """
    subsets = sorted(s for kk, s in pools if kk == k)
    sub_id = {s: 1 + i for i, s in enumerate(subsets)}
    grp_id = {g: 1 + len(subsets) + i for i, g in enumerate(range(len(groups)))}
    sink = 1 + len(subsets) + len(groups)
    cap: dict[tuple[int, int], int] = {}
    for s in subsets:
        pad = sum(1 for iv in pools[(k, s)] if p.is_padding(iv.n))
        cap[(0, sub_id[s])] = pad
        for g in occ_index[(k, s)]:
            cap[(sub_id[s], grp_id[g])] = 1
    for g in range(len(groups)):
        if k in groups[g] and target[g] > 0:
            cap[(grp_id[g], sink)] = target[g]
    flow: dict[tuple[int, int], int] = {e: 0 for e in cap}
    adj: dict[int, list[int]] = {}
    for u, v in cap:
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    total = 0
    while True:
        parent = {0: 0}
        queue = [0]
        while queue and sink not in parent:
            u = queue.pop(0)
            for v in adj.get(u, ()):
                residual = cap.get((u, v), 0) - flow.get((u, v), 0) + flow.get((v, u), 0)
                if v not in parent and residual > 0:
                    parent[v] = u
                    queue.append(v)
        if sink not in parent:
            break
        # unit augmentation is enough at this scale
        v = sink
        while v != 0:
            u = parent[v]
            if cap.get((u, v), 0) - flow.get((u, v), 0) > 0:
                flow[(u, v)] += 1
            else:
                flow[(v, u)] -= 1
            v = u
        total += 1
    if not return_edges:
        return total
    edges = []
    for s in subsets:
        for g in occ_index[(k, s)]:
            if flow.get((sub_id[s], grp_id[g]), 0) > 0:
                edges.append((s, g))
    return edges


def block_feasibility(p: Placement, block: Block) -> list[str]:
    """Counting-condition findings for one block; empty means admissible."""
    findings = []
    receivers = set(block.receivers)
    for d in block.deliveries:
        s_n = support_set(p, d.n)
        if d.to in s_n:
            findings.append(f"value q={d.q},n={d.n} delivered to node {d.to} that maps file {d.n}")
            continue
        j_n = receivers - {d.to} - set(s_n)
        slack = len(s_n) - 1 - len(j_n)
        if slack < 0:
            findings.append(
                f"value q={d.q},n={d.n} to node {d.to}: {len(j_n)} receivers need "
                f"zero-forcing but support has only {len(s_n)} antennas"
            )
    return findings


def validate_schedule(s: Schedule, p: Placement, a: ReduceAssignment) -> FeasibilityReport:
    """Check counting admissibility per block plus disjoint coverage of the demand."""
    violations: list[str] = []
    per_block: list[BlockCheck] = []
    demand = demand_set(p, a)
    wanted = {(k, iv) for k, iv in demand.as_entries()}
    seen: dict[tuple[int, Iv], int] = {}
    for idx, block in enumerate(s.blocks, start=1):
        slack_map: dict[Delivery, int] = {}
        receivers = set(block.receivers)
        thetas = []
        for d in block.deliveries:
            s_n = support_set(p, d.n)
            thetas.append(len(s_n))
            j_n = receivers - {d.to} - set(s_n)
            slack_map[d] = len(s_n) - 1 - len(j_n)
            if d.q not in a.reduce_sets[d.to - 1]:
                violations.append(
                    f"block {idx}: value q={d.q} sent to node {d.to} that does not reduce it"
                )
            key = (d.to, d.iv)
            if key not in wanted:
                violations.append(f"block {idx}: q={d.q},n={d.n} is not demanded by node {d.to}")
            seen[key] = seen.get(key, 0) + 1
        for finding in block_feasibility(p, block):
            violations.append(f"block {idx}: {finding}")
        bound = min(p.K, 2 * min(thetas)) if thetas else 0
        vacuous = bool(block.deliveries) and all(p.is_padding(d.n) for d in block.deliveries)
        per_block.append(BlockCheck(idx, len(block.deliveries), bound, slack_map, vacuous))
    for key, count in seen.items():
        if count > 1:
            violations.append(f"value q={key[1].q},n={key[1].n} for node {key[0]} delivered {count} times")
    missing = wanted - set(seen)
    for k, iv in sorted(missing):
        violations.append(f"value q={iv.q},n={iv.n} for node {k} never delivered")
    return FeasibilityReport(ok=not violations, per_block=tuple(per_block), violations=tuple(violations))


ORACLE_DEMAND_GUARD = 12
ORACLE_DEFAULT_CAP = 8


def brute_force_min_blocks(
    p: Placement, a: ReduceAssignment, cap: int = ORACLE_DEFAULT_CAP
) -> tuple[int, Schedule]:
    """Exact minimum block count over all partitions passing the counting conditions.

    Exhaustive search with memoization on the set of still-undelivered values.
    Guarded to tiny instances; independent of the constructive schedulers.
    """
    entries = sorted((k, iv) for k, iv in demand_set(p, a).as_entries())
    m = len(entries)
    if m == 0:
        return 0, Schedule(())
    if m > ORACLE_DEMAND_GUARD:
        raise DemandTooLargeError(f"demand of {m} values exceeds oracle guard {ORACLE_DEMAND_GUARD}")
    supports = {n: support_set(p, n) for n in range(1, p.n_total + 1)}

    def admissible(mask: int) -> bool:
        recv = [entries[i][0] for i in range(m) if mask >> i & 1]
        if len(set(recv)) != len(recv):
            return False
        rset = set(recv)
        for i in range(m):
            if not mask >> i & 1:
                continue
            k, iv = entries[i]
            s_n = supports[iv.n]
            if len(rset - {k} - set(s_n)) > len(s_n) - 1:
                return False
        return True

    blocks_by_anchor: dict[int, list[int]] = {i: [] for i in range(m)}
    for mask in range(1, 1 << m):
        if admissible(mask):
            blocks_by_anchor[(mask & -mask).bit_length() - 1].append(mask)

    memo: dict[int, tuple[int, int]] = {0: (0, 0)}

    def solve(remaining: int) -> int:
        if remaining in memo:
            return memo[remaining][0]
        anchor = (remaining & -remaining).bit_length() - 1
        best, best_mask = m + 1, 0
        for mask in blocks_by_anchor[anchor]:
            if mask & remaining != mask:
                continue
            sub = solve(remaining & ~mask)
            if sub + 1 < best:
                best, best_mask = sub + 1, mask
        memo[remaining] = (best, best_mask)
        return best

    full = (1 << m) - 1
    t_opt = solve(full)
    if t_opt > cap:
        raise CapExceededError(f"no schedule within cap of {cap} blocks")
    blocks = []
    remaining = full
    while remaining:
        _, mask = memo[remaining]
        blocks.append(
            Block(tuple(Delivery(*entries[i][1], to=entries[i][0]) for i in range(m) if mask >> i & 1))
        )
        remaining &= ~mask
    return t_opt, Schedule(tuple(blocks))


def schedule_to_doc(s: Schedule) -> dict:
    return {
        "T": s.T,
        "blocks": [
            {
                "receivers": list(b.receivers),
                "deliveries": [{"q": d.q, "n": d.n, "to": d.to} for d in b.deliveries],
            }
            for b in s.blocks
        ],
    }


def schedule_from_doc(doc: dict) -> Schedule:
    blocks = tuple(
        Block(tuple(Delivery(d["q"], d["n"], d["to"]) for d in b["deliveries"]))
        for b in doc["blocks"]
    )
    if doc.get("T") not in (None, len(blocks)):
        raise ValueError(f"document says T={doc['T']} but has {len(blocks)} blocks")
    return Schedule(blocks)


def schedule_to_json(s: Schedule) -> str:
    return json.dumps(schedule_to_doc(s), indent=2)


def schedule_from_json(text: str) -> Schedule:
    return schedule_from_doc(json.loads(text))
