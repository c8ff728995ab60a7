"""Channel generation, zero-forcing beamformers, and block-level transmission.

Packets are unit-power complex symbol vectors standing in for channel-coded
payloads; the simulation verifies the interference-free decode contract rather
than bit-level coding. Every random draw is seeded, so identical inputs give
identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from .model import Iv, Placement, support_set
from .scheduler import Block

DEFAULT_ZF_TOL = 1e-9
DEFAULT_RESIDUAL_TOL = 1e-6
DEFAULT_GAIN_FLOOR = 1e-6
DEFAULT_RANK_TOL = 1e-8
DEFAULT_H_MIN = 0.1
DEFAULT_H_MAX = 10.0


class ChannelGenerationError(RuntimeError):
    """Conditioning checks kept failing; bounds are likely pathological."""


class ZeroForcingInfeasibleError(ValueError):
    """More receivers to null than the virtual transmitter can handle."""


@dataclass(frozen=True)
class ChannelMatrix:
    """K x K complex coefficients; row = receiver, column = transmitter."""

    coefficients: np.ndarray
    h_min: float
    h_max: float
    seed: int

    @property
    def K(self) -> int:
        return self.coefficients.shape[0]

    def gain(self, k: int, i: int) -> complex:
        return complex(self.coefficients[k - 1, i - 1])

    def to_doc(self) -> dict:
        return {
            "K": self.K,
            "seed": self.seed,
            "h_min": self.h_min,
            "h_max": self.h_max,
            "coefficients": [
                [[float(c.real), float(c.imag)] for c in row] for row in self.coefficients
            ],
        }


@dataclass(frozen=True)
class Packet:
    """Unit-average-power complex symbols carrying one intermediate value."""

    iv: Iv
    symbols: np.ndarray


@dataclass(frozen=True)
class StreamPlan:
    iv: Iv
    receiver: int
    support: tuple[int, ...]
    nulled: tuple[int, ...]
    vector: np.ndarray
    intended_gain: complex


@dataclass(frozen=True)
class BeamformingPlan:
    block: Block
    streams: tuple[StreamPlan, ...]

    def stream(self, iv: Iv) -> StreamPlan:
        for s in self.streams:
            if s.iv == iv:
                return s
        raise KeyError(iv)


@dataclass(frozen=True)
class StreamReception:
    iv: Iv
    receiver: int
    decoded: np.ndarray
    ok: bool
    residual_interference_power: float
    effective_gain: complex


@dataclass(frozen=True)
class BlockReception:
    streams: tuple[StreamReception, ...]

    @property
    def all_ok(self) -> bool:
        return all(s.ok for s in self.streams)


def generate_channel(
    K: int,
    seed: int,
    h_min: float = DEFAULT_H_MIN,
    h_max: float = DEFAULT_H_MAX,
    rank_tol: float = DEFAULT_RANK_TOL,
    max_rounds: int = 64,
) -> ChannelMatrix:
    """Seeded complex Gaussian coefficients, magnitudes clamped into [h_min, h_max].

    Redraws until all 2x2 submatrices (and sampled larger ones) are numerically
    full rank: smallest singular value > rank_tol * largest.
    """
    if not 0 < h_min < h_max:
        raise ValueError(f"need 0 < h_min < h_max, got ({h_min}, {h_max})")
    if K < 1:
        raise ValueError(f"K must be positive, got {K}")
    rng = np.random.default_rng(seed)
    for _ in range(max_rounds):
        h = (rng.standard_normal((K, K)) + 1j * rng.standard_normal((K, K))) / np.sqrt(2)
        mag = np.abs(h)
        h = h * (np.clip(mag, h_min, h_max) / np.maximum(mag, 1e-300))
        if _well_conditioned(h, rank_tol, rng):
            return ChannelMatrix(coefficients=h, h_min=h_min, h_max=h_max, seed=seed)
    raise ChannelGenerationError(
        f"no admissible channel after {max_rounds} draws for K={K}, bounds ({h_min}, {h_max})"
    )


def _well_conditioned(h: np.ndarray, rank_tol: float, rng: np.random.Generator) -> bool:
    K = h.shape[0]
    if K == 1:
        return abs(h[0, 0]) > 0
    idx = range(K)
    for rows in combinations(idx, 2):
        for cols in combinations(idx, 2):
            s = np.linalg.svd(h[np.ix_(rows, cols)], compute_uv=False)
            if s[-1] <= rank_tol * s[0]:
                return False
    # sample a handful of larger square submatrices per size
    for size in range(3, K + 1):
        n_sub = comb(K, size) ** 2
        for _ in range(min(n_sub, 8)):
            rows = rng.choice(K, size=size, replace=False)
            cols = rng.choice(K, size=size, replace=False)
            s = np.linalg.svd(h[np.ix_(sorted(rows), sorted(cols))], compute_uv=False)
            if s[-1] <= rank_tol * s[0]:
                return False
    return True


def channel_vector(H: ChannelMatrix, k: int, S: tuple[int, ...]) -> np.ndarray:
    """Coefficients from the nodes in S (ascending) to receiver k."""
    if not S:
        raise ValueError("virtual transmitter set must be nonempty")
    if not 1 <= k <= H.K or any(not 1 <= i <= H.K for i in S):
        raise ValueError(f"index out of range for K={H.K}: k={k}, S={S}")
    return np.array([H.coefficients[k - 1, i - 1] for i in sorted(S)])


def zero_forcing_vector(
    H: ChannelMatrix,
    S: tuple[int, ...],
    J: tuple[int, ...],
    zf_tol: float = DEFAULT_ZF_TOL,
) -> np.ndarray:
    """Unit-norm vector over S's antennas orthogonal to every channel row toward J.

    Deterministic: smallest-singular-direction of the stacked channel, phase
    fixed so the largest component is real positive.
    """
    S = tuple(sorted(S))
    if len(J) >= len(S):
        raise ZeroForcingInfeasibleError(
            f"cannot null {len(J)} receivers with a {len(S)}-antenna virtual transmitter"
        )
    if not J:
        v = np.zeros(len(S), dtype=complex)
        v[0] = 1.0
        return v
    stacked = np.vstack([channel_vector(H, j, S) for j in sorted(J)])
    _, sv, vh = np.linalg.svd(stacked)
    v = vh[-1].conj()
    pivot = int(np.argmax(np.abs(v)))
    v = v * (np.abs(v[pivot]) / v[pivot])
    v /= np.linalg.norm(v)
    leak = float(np.max(np.abs(stacked @ v)))
    scale = float(np.max(np.abs(stacked)))
    if leak > zf_tol * max(scale, 1.0):
        raise ZeroForcingInfeasibleError(f"null-space residual {leak:.3e} above tolerance")
    return v


def build_block_beamformers(
    H: ChannelMatrix,
    block: Block,
    p: Placement,
    zf_tol: float = DEFAULT_ZF_TOL,
    gain_floor: float = DEFAULT_GAIN_FLOOR,
) -> BeamformingPlan:
    """One zero-forcing vector per delivered value; fails on counting violations."""
    receivers = set(block.receivers)
    streams = []
    for d in block.deliveries:
        s_n = support_set(p, d.n)
        if d.to in s_n:
            raise ZeroForcingInfeasibleError(
                f"node {d.to} maps file {d.n}; it cannot be a cooperative "
                "transmitter and the intended receiver of the same stream"
            )
        j_n = tuple(sorted(receivers - {d.to} - set(s_n)))
        v = zero_forcing_vector(H, s_n, j_n, zf_tol=zf_tol)
        gain = complex(channel_vector(H, d.to, s_n) @ v)
        if abs(gain) < gain_floor:
            raise ZeroForcingInfeasibleError(
                f"intended gain {abs(gain):.3e} below floor for q={d.q},n={d.n}; "
                "redraw the channel"
            )
        streams.append(
            StreamPlan(
                iv=d.iv, receiver=d.to, support=s_n, nulled=j_n, vector=v, intended_gain=gain
            )
        )
    return BeamformingPlan(block=block, streams=tuple(streams))


def make_packet(iv: Iv, tau: int, seed: int) -> Packet:
    """Pseudorandom complex symbols normalized to exactly unit average power."""
    rng = np.random.default_rng([seed, iv.q, iv.n])
    x = (rng.standard_normal(tau) + 1j * rng.standard_normal(tau)) / np.sqrt(2)
    x *= np.sqrt(tau) / np.linalg.norm(x)
    return Packet(iv=iv, symbols=x)


def make_block_packets(block: Block, tau: int, seed: int) -> dict[Iv, Packet]:
    return {d.iv: make_packet(d.iv, tau, seed) for d in block.deliveries}


def stream_power_scales(plan: BeamformingPlan, power: float) -> dict[Iv, float]:
    """Per-stream amplitude scale from an equal power split at each transmitter.

    A node splits its budget evenly over the streams it participates in; a
    stream's scale is set by its most-loaded transmitter, which keeps every
    node's average transmit power at or below the budget.
    """
    if power <= 0:
        raise ValueError(f"power must be positive, got {power}")
    load: dict[int, int] = {}
    for s in plan.streams:
        for i in s.support:
            load[i] = load.get(i, 0) + 1
    return {
        s.iv: float(np.sqrt(power / max(load[i] for i in s.support))) for s in plan.streams
    }


def transmit_block(
    H: ChannelMatrix,
    plan: BeamformingPlan,
    packets: dict[Iv, Packet],
    power: float,
    noise: bool = True,
    seed: int = 0,
) -> dict[int, np.ndarray]:
    """Superpose all streams through the channel; returns raw signal per receiver."""
    missing = [s.iv for s in plan.streams if s.iv not in packets]
    if missing:
        raise ValueError(f"missing packets for {missing}")
    scales = stream_power_scales(plan, power)
    tau = len(next(iter(packets.values())).symbols) if packets else 0
    x = {i: np.zeros(tau, dtype=complex) for i in range(1, H.K + 1)}
    for s in plan.streams:
        amp = scales[s.iv]
        for idx, i in enumerate(s.support):
            x[i] += s.vector[idx] * amp * packets[s.iv].symbols
    rng = np.random.default_rng(seed)
    ys = {}
    for k in plan.block.receivers:
        y = np.zeros(tau, dtype=complex)
        for i in range(1, H.K + 1):
            y += H.gain(k, i) * x[i]
        if noise:
            y += (rng.standard_normal(tau) + 1j * rng.standard_normal(tau)) / np.sqrt(2)
        ys[k] = y
    return ys


def decode_block(
    H: ChannelMatrix,
    plan: BeamformingPlan,
    side_info: dict[int, dict[Iv, Packet]],
    signals: dict[int, np.ndarray],
    power: float,
    residual_tol: float = DEFAULT_RESIDUAL_TOL,
) -> BlockReception:
    """Cancel cached streams, divide out the intended gain, audit the leakage.

    ``side_info[k]`` must hold a packet for every delivered value whose file
    node k mapped. Decode status is computed from plan quantities only (residual
    zero-forcing leakage relative to the desired signal power), never from the
    ground-truth payload.
    """
    scales = stream_power_scales(plan, power)
    receptions = []
    for target in plan.streams:
        k = target.receiver
        if k not in signals:
            raise ValueError(f"no raw signal for receiver {k}")
        y = signals[k].copy()
        residual = 0.0
        for other in plan.streams:
            if other.iv == target.iv:
                continue
            cross = complex(channel_vector(H, k, other.support) @ other.vector)
            if k in other.support:
                cached = side_info.get(k, {}).get(other.iv)
                if cached is None:
                    raise ValueError(
                        f"receiver {k} lacks side info for q={other.iv.q},n={other.iv.n}"
                    )
                y -= cross * scales[other.iv] * cached.symbols
            else:
                residual = max(residual, abs(cross) ** 2 * scales[other.iv] ** 2)
        gain = target.intended_gain * scales[target.iv]
        decoded = y / gain
        signal_power = abs(gain) ** 2
        receptions.append(
            StreamReception(
                iv=target.iv,
                receiver=k,
                decoded=decoded,
                ok=residual <= residual_tol * signal_power,
                residual_interference_power=residual,
                effective_gain=gain,
            )
        )
    return BlockReception(streams=tuple(receptions))


def residual_interference(H: ChannelMatrix, plan: BeamformingPlan) -> dict[int, float]:
    """Per receiver: worst leaked beamforming power among non-cached, non-intended streams."""
    out = {}
    for k in plan.block.receivers:
        worst = 0.0
        for s in plan.streams:
            if s.receiver == k or k in s.support:
                continue
            worst = max(worst, abs(complex(channel_vector(H, k, s.support) @ s.vector)) ** 2)
        out[k] = worst
    return out


def measure_stream_snr(
    H: ChannelMatrix,
    plan: BeamformingPlan,
    packets: dict[Iv, Packet],
    side_info: dict[int, dict[Iv, Packet]],
    power: float,
    draws: int,
    seed: int,
) -> dict[Iv, float]:
    """Monte Carlo post-processing SNR per stream over independent noise draws."""
    err = {s.iv: 0.0 for s in plan.streams}
    sig = {s.iv: 0.0 for s in plan.streams}
    for d in range(draws):
        ys = transmit_block(H, plan, packets, power, noise=True, seed=(seed, d))
        rx = decode_block(H, plan, side_info, ys, power)
        for sr in rx.streams:
            truth = packets[sr.iv].symbols
            err[sr.iv] += float(np.sum(np.abs(sr.decoded - truth) ** 2))
            sig[sr.iv] += float(np.sum(np.abs(truth) ** 2))
    return {iv: sig[iv] / err[iv] for iv in err}
