"""Closed-form communication loads, converse bounds, and comparison tables.

All loads are exact rationals; decimal rendering happens only at the CSV/text
boundary (6 significant digits).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .model import Placement, ReduceAssignment, support_set, symmetric_placement, SystemParams
from .model import assign_reduce_functions
from .scheduler import Schedule, schedule


def _check_r(K: int, r) -> int:
    r = Fraction(r)
    if r.denominator != 1 or not 1 <= r <= K:
        raise ValueError(f"r must be an integer in [1, {K}], got {r}")
    return int(r)


def optimal_load(K: int, r) -> Fraction:
    """Best one-shot linear communication load: (1 - r/K) / min(K, 2r)."""
    r = _check_r(K, r)
    return Fraction(K - r, K) / min(K, 2 * r)


def uncoded_tdma_load(K: int, r) -> Fraction:
    """One node sends one plain value per block: 1 - r/K."""
    r = _check_r(K, r)
    return Fraction(K - r, K)


def coded_tdma_load(K: int, r) -> Fraction:
    """One node sends one coded value per block: (1/r)(1 - r/K)."""
    r = _check_r(K, r)
    return Fraction(K - r, K * r)


def time_shared_load(K: int, r) -> Fraction:
    """Linear interpolation of the optimal load between adjacent integer points."""
    r = Fraction(r)
    if not 1 <= r <= K:
        raise ValueError(f"r must lie in [1, {K}], got {r}")
    lo, hi = math.floor(r), math.ceil(r)
    if lo == hi:
        return optimal_load(K, lo)
    w = r - lo
    return (1 - w) * optimal_load(K, lo) + w * optimal_load(K, hi)


@dataclass(frozen=True)
class ReplicationProfile:
    """Per-file replication counts, sorted ascending."""

    theta: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", tuple(sorted(self.theta)))
        if any(t < 1 for t in self.theta):
            raise ValueError("every file must be replicated at least once")

    @property
    def N(self) -> int:
        return len(self.theta)

    @property
    def r_avg(self) -> Fraction:
        return Fraction(sum(self.theta), self.N)

    @classmethod
    def from_placement(cls, p: Placement) -> "ReplicationProfile":
        return cls(tuple(len(support_set(p, n)) for n in range(1, p.n_total + 1)))


@dataclass(frozen=True)
class ConverseBound:
    sigma_sum: Fraction
    block_bound: int        # ceil(sigma_sum)
    averaged_bound: int     # weaker: ceil(total demand / min(2 r_avg, K))


def converse_lower_bound(profile: ReplicationProfile, K: int, Q: int) -> ConverseBound:
    """Lower bound on block count for any placement with this replication profile."""
    if Q % K != 0:
        raise ValueError(f"Q={Q} must be a multiple of K={K}")
    if any(t > K for t in profile.theta):
        raise ValueError(f"replication counts must be at most K={K}")
    sigma_sum = Fraction(0)
    c_total = Fraction(0)
    for t in profile.theta:
        c_n = Fraction((K - t) * Q, K)
        c_total += c_n
        sigma_sum += c_n / min(2 * t, K)
    averaged = math.ceil(c_total / min(2 * profile.r_avg, K)) if c_total else 0
    return ConverseBound(
        sigma_sum=sigma_sum,
        block_bound=math.ceil(sigma_sum),
        averaged_bound=averaged,
    )


@dataclass(frozen=True)
class LoadReport:
    """One tradeoff-table row; measured fields are None without simulation."""

    K: int
    Q: int
    N: int
    r: Fraction
    L_uncoded: Fraction | None
    L_coded: Fraction | None
    L_optimal: Fraction
    T_measured: int | None = None
    L_measured: Fraction | None = None
    converse_T: int | None = None
    flags: tuple[str, ...] = ()


#: Widely circulated K=10 optimal-curve values used as a consistency check.
#: The r=3 and r=4 entries disagree with the closed form (7/60 and 3/40); the
#: table always emits the closed form and flags any such discrepancy.
REFERENCE_CURVE_K10: dict[int, Fraction] = {
    1: Fraction(45, 100),
    2: Fraction(20, 100),
    3: Fraction(7, 100),
    4: Fraction(6, 100),
    5: Fraction(5, 100),
    6: Fraction(4, 100),
    7: Fraction(3, 100),
    8: Fraction(2, 100),
    9: Fraction(1, 100),
    10: Fraction(0),
}


def tradeoff_table(
    K: int,
    Q: int,
    N: int,
    r_values,
    simulate: bool = False,
    reference_curve: dict[int, Fraction] | None = None,
) -> list[LoadReport]:
    """Theory (and optionally measured) loads per r, sorted by r."""
    reports = []
    for r in sorted(Fraction(r) for r in r_values):
        if r.denominator != 1:
            reports.append(
                LoadReport(
                    K=K, Q=Q, N=N, r=r,
                    L_uncoded=None, L_coded=None, L_optimal=time_shared_load(K, r),
                )
            )
            continue
        ri = int(r)
        flags: list[str] = []
        l_opt = optimal_load(K, ri)
        if reference_curve and ri in reference_curve and reference_curve[ri] != l_opt:
            flags.append(
                f"reference curve plots {float(reference_curve[ri]):.6g} at r={ri}, "
                f"but the closed form gives {l_opt} = {float(l_opt):.6g}"
            )
        t_meas = l_meas = conv = None
        if simulate and ri < K:
            params = SystemParams(K=K, N=N, Q=Q, r=Fraction(ri))
            p = symmetric_placement(params)
            s = schedule(p, assign_reduce_functions(params))
            t_meas = s.T
            l_meas = Fraction(t_meas, N * Q)
            conv = converse_lower_bound(ReplicationProfile.from_placement(p), K, Q).block_bound
        elif simulate and ri == K:
            t_meas, l_meas, conv = 0, Fraction(0), 0
        reports.append(
            LoadReport(
                K=K, Q=Q, N=N, r=r,
                L_uncoded=uncoded_tdma_load(K, ri),
                L_coded=coded_tdma_load(K, ri),
                L_optimal=l_opt,
                T_measured=t_meas,
                L_measured=l_meas,
                converse_T=conv,
                flags=tuple(flags),
            )
        )
    return reports


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, Fraction):
        return f"{float(value):.6g}"
    return str(value)


CSV_HEADER = "K,Q,N,r,L_uncoded,L_coded,L_optimal,T_measured,L_measured,converse_T"


def render_csv(reports: list[LoadReport]) -> str:
    lines = [CSV_HEADER]
    for rep in sorted(reports, key=lambda x: x.r):
        lines.append(
            ",".join(
                [
                    str(rep.K), str(rep.Q), str(rep.N), _fmt(rep.r),
                    _fmt(rep.L_uncoded), _fmt(rep.L_coded), _fmt(rep.L_optimal),
                    _fmt(rep.T_measured), _fmt(rep.L_measured), _fmt(rep.converse_T),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def render_text(reports: list[LoadReport]) -> str:
    lines = [f"{'r':>6} {'uncoded':>10} {'coded':>10} {'optimal':>10} {'T':>6} {'measured':>10}"]
    flagged = []
    for rep in sorted(reports, key=lambda x: x.r):
        lines.append(
            f"{_fmt(rep.r):>6} {_fmt(rep.L_uncoded):>10} {_fmt(rep.L_coded):>10} "
            f"{_fmt(rep.L_optimal):>10} {_fmt(rep.T_measured):>6} {_fmt(rep.L_measured):>10}"
        )
        flagged.extend(rep.flags)
    for f in flagged:
        lines.append(f"FLAG: {f}")
    return "\n".join(lines) + "\n"
