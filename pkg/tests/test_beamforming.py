"""Channel generation, zero-forcing construction, and the transmit/decode loop."""

from fractions import Fraction

import numpy as np
import pytest

from airshuffle.beamforming import (
    DEFAULT_GAIN_FLOOR,
    ZeroForcingInfeasibleError,
    build_block_beamformers,
    channel_vector,
    decode_block,
    generate_channel,
    make_block_packets,
    make_packet,
    measure_stream_snr,
    residual_interference,
    stream_power_scales,
    transmit_block,
    zero_forcing_vector,
)
from airshuffle.model import (
    Iv,
    SystemParams,
    assign_reduce_functions,
    symmetric_placement,
)
from airshuffle.scheduler import Block, Delivery, schedule


def _pipeline(K=4, N=6, Q=4, r=2, seed=3):
    params = SystemParams(K=K, N=N, Q=Q, r=Fraction(r))
    p = symmetric_placement(params)
    a = assign_reduce_functions(params)
    s = schedule(p, a)
    H = generate_channel(K, seed)
    return p, a, s, H


def test_channel_is_seeded_and_clamped():
    H1 = generate_channel(5, seed=11)
    H2 = generate_channel(5, seed=11)
    assert np.array_equal(H1.coefficients, H2.coefficients)
    mags = np.abs(H1.coefficients)
    assert mags.min() >= 0.1 and mags.max() <= 10.0
    H3 = generate_channel(5, seed=12)
    assert not np.array_equal(H1.coefficients, H3.coefficients)


def test_zero_forcing_nulls_and_normalizes():
    H = generate_channel(5, seed=2)
    v = zero_forcing_vector(H, S=(1, 2, 3), J=(4, 5))
    assert np.isclose(np.linalg.norm(v), 1.0)
    for j in (4, 5):
        assert abs(channel_vector(H, j, (1, 2, 3)) @ v) < 1e-9
    # deterministic phase convention: largest entry is real positive
    pivot = v[np.argmax(np.abs(v))]
    assert pivot.real > 0 and abs(pivot.imag) < 1e-12


def test_zero_forcing_rejects_overloaded_support():
    H = generate_channel(4, seed=2)
    with pytest.raises(ZeroForcingInfeasibleError):
        zero_forcing_vector(H, S=(1, 2), J=(3, 4))


def test_plan_rejects_receiver_inside_support():
    p, a, s, H = _pipeline()
    bad = Block(deliveries=(Delivery(1, 1, to=1),))  # node 1 maps file 1
    with pytest.raises(ZeroForcingInfeasibleError):
        build_block_beamformers(H, bad, p)


def test_packet_power_and_determinism():
    pkt = make_packet(Iv(2, 5), tau=256, seed=9)
    assert np.isclose(np.mean(np.abs(pkt.symbols) ** 2), 1.0)
    assert np.array_equal(pkt.symbols, make_packet(Iv(2, 5), tau=256, seed=9).symbols)


def test_power_split_respects_budget():
    p, a, s, H = _pipeline()
    plan = build_block_beamformers(H, s.blocks[0], p)
    power = 100.0
    scales = stream_power_scales(plan, power)
    per_node = {k: 0.0 for k in range(1, 5)}
    for st in plan.streams:
        for idx, node in enumerate(st.support):
            per_node[node] += (scales[st.iv] * abs(st.vector[idx])) ** 2
    assert all(v <= power + 1e-9 for v in per_node.values())


def test_noiseless_decode_recovers_symbols():
    p, a, s, H = _pipeline()
    for i, block in enumerate(s.blocks):
        plan = build_block_beamformers(H, block, p)
        packets = make_block_packets(block, tau=64, seed=5)
        side = {
            k: {iv: pk for iv, pk in packets.items() if iv.n in p.mapped_files[k - 1]}
            for k in block.receivers
        }
        ys = transmit_block(H, plan, packets, power=100.0, noise=False, seed=(5, i))
        rx = decode_block(H, plan, side, ys, power=100.0)
        assert rx.all_ok
        for sr in rx.streams:
            rel = np.linalg.norm(sr.decoded - packets[sr.iv].symbols)
            rel /= np.linalg.norm(packets[sr.iv].symbols)
            assert rel < 1e-9


def test_residual_interference_is_tiny():
    p, a, s, H = _pipeline(seed=17)
    for block in s.blocks:
        plan = build_block_beamformers(H, block, p)
        for leak in residual_interference(H, plan).values():
            assert leak < 1e-18


def test_snr_grows_with_power():
    p, a, s, H = _pipeline()
    block = s.blocks[0]
    plan = build_block_beamformers(H, block, p)
    packets = make_block_packets(block, tau=32, seed=5)
    side = {
        k: {iv: pk for iv, pk in packets.items() if iv.n in p.mapped_files[k - 1]}
        for k in block.receivers
    }
    low = measure_stream_snr(H, plan, packets, side, power=100.0, draws=200, seed=1)
    high = measure_stream_snr(H, plan, packets, side, power=10_000.0, draws=200, seed=1)
    for iv in low:
        gain_db = 10 * np.log10(high[iv] / low[iv])
        assert 19 < gain_db < 21


def test_gain_floor_guard():
    p, a, s, H = _pipeline()
    with pytest.raises(ZeroForcingInfeasibleError):
        build_block_beamformers(H, s.blocks[0], p, gain_floor=1e6)
