"""Command-line front end: tradeoff tables, end-to-end simulation, verification.

Config precedence: command-line flags > JSON config file > preset > defaults.
Exit codes: 0 success, 1 validation error, 2 decode/verification failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict, fields
from fractions import Fraction
from pathlib import Path

from . import beamforming as bf
from . import metrics
from .model import (
    SystemParams,
    assign_reduce_functions,
    demand_set,
    placement_from_json,
    placement_to_doc,
    symmetric_placement,
)
from .scheduler import (
    CapExceededError,
    DemandTooLargeError,
    ScheduleError,
    brute_force_min_blocks,
    schedule,
    schedule_to_doc,
    validate_schedule,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VERIFY = 2
EXIT_IO = 3

PRESETS: dict[str, dict] = {
    "fig1": {"K": 3, "Q": 3, "N": 3, "r": 2},
    "example-4-6": {"K": 4, "Q": 4, "N": 6, "r": 2},
    "example-5-10": {"K": 5, "Q": 5, "N": 10, "r": 2},
    "table2": {"K": 5, "Q": 5, "N": 20, "r": 2},
    "fig2": {"K": 10, "Q": 360, "N": 2520, "r": 2},
}


@dataclass
class RunConfig:
    K: int = 0
    N: int = 0
    Q: int = 0
    r: str = "1"
    seed: int = 1
    power_db: float = 40.0
    noise: bool = True
    tau: int = 64
    workers: int = 1
    out: str = "out"
    preset: str | None = None
    placement: str | None = None
    zf_tol: float = bf.DEFAULT_ZF_TOL
    residual_tol: float = bf.DEFAULT_RESIDUAL_TOL
    gain_floor: float = bf.DEFAULT_GAIN_FLOOR
    rank_tol: float = bf.DEFAULT_RANK_TOL
    h_min: float = bf.DEFAULT_H_MIN
    h_max: float = bf.DEFAULT_H_MAX

    @property
    def r_value(self) -> Fraction:
        return Fraction(self.r)

    @property
    def power(self) -> float:
        return 10.0 ** (self.power_db / 10.0)


class ConfigError(ValueError):
    pass


def load_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "preset", None):
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset '{args.preset}'; choose from {sorted(PRESETS)}")
        for key, value in PRESETS[args.preset].items():
            setattr(cfg, key, str(value) if key == "r" else value)
        cfg.preset = args.preset
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            doc = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        known = {f.name for f in fields(RunConfig)}
        for key, value in doc.items():
            if key not in known:
                raise ConfigError(f"unknown config field '{key}'")
            setattr(cfg, key, str(value) if key == "r" else value)
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            setattr(cfg, f.name, flag)
    return cfg


def validate_config(cfg: RunConfig, need_system: bool = True) -> None:
    if need_system and cfg.placement is None:
        if cfg.K < 1:
            raise ConfigError(f"K must be a positive integer, got {cfg.K}")
        if cfg.N < cfg.K:
            raise ConfigError(f"N must be at least K={cfg.K}, got {cfg.N}")
        if cfg.Q < 1 or cfg.Q % cfg.K != 0:
            raise ConfigError(f"Q must be a positive multiple of K={cfg.K}, got {cfg.Q}")
        try:
            r = cfg.r_value
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"r is not a number: {cfg.r!r}") from exc
        if not 1 <= r <= cfg.K:
            raise ConfigError(f"r must lie in [1, K={cfg.K}], got {r}")
    if cfg.tau < 1:
        raise ConfigError(f"tau must be a positive integer, got {cfg.tau}")
    if cfg.power_db != cfg.power_db:  # NaN guard
        raise ConfigError("power_db is not a number")
    if cfg.workers < 1:
        raise ConfigError(f"workers must be at least 1, got {cfg.workers}")
    if not 0 < cfg.h_min < cfg.h_max:
        raise ConfigError(f"need 0 < h_min < h_max, got ({cfg.h_min}, {cfg.h_max})")
    if cfg.seed < 0:
        raise ConfigError(f"seed must be nonnegative, got {cfg.seed}")


def _load_system(cfg: RunConfig):
    """Placement and reduce assignment, from file or symmetric construction."""
    if cfg.placement:
        try:
            text = Path(cfg.placement).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read placement file: {exc}") from exc
        p, a = placement_from_json(text)
        return p, a
    params = SystemParams(K=cfg.K, N=cfg.N, Q=cfg.Q, r=cfg.r_value)
    return symmetric_placement(params), assign_reduce_functions(params)


def _outdir(cfg: RunConfig) -> Path:
    path = Path(cfg.out)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc}") from exc
    return path


def cmd_tradeoff(cfg: RunConfig) -> int:
    validate_config(cfg)
    r_values = list(range(1, cfg.K + 1))
    if cfg.r_value.denominator != 1:
        r_values.append(cfg.r_value)
    reference = metrics.REFERENCE_CURVE_K10 if cfg.K == 10 else None
    reports = metrics.tradeoff_table(
        cfg.K, cfg.Q, cfg.N, r_values, simulate=cfg.r_value.denominator == 1,
        reference_curve=reference,
    )
    out = _outdir(cfg)
    (out / "tradeoff.csv").write_text(metrics.render_csv(reports))
    sys.stdout.write(metrics.render_text(reports))
    print(f"wrote {out / 'tradeoff.csv'}")
    return EXIT_OK


def _simulate_block(cfg, H, p, block, index):
    plan = bf.build_block_beamformers(
        H, block, p, zf_tol=cfg.zf_tol, gain_floor=cfg.gain_floor
    )
    packets = bf.make_block_packets(block, cfg.tau, cfg.seed)
    side = {
        k: {iv: pkt for iv, pkt in packets.items() if iv.n in p.mapped_files[k - 1]}
        for k in block.receivers
    }
    ys = bf.transmit_block(
        H, plan, packets, cfg.power, noise=cfg.noise, seed=(cfg.seed, index)
    )
    rx = bf.decode_block(H, plan, side, ys, cfg.power, residual_tol=cfg.residual_tol)
    leaks = bf.residual_interference(H, plan)
    rows = []
    for sr in rx.streams:
        rows.append(
            {
                "block": index + 1,
                "receiver": sr.receiver,
                "intended_gain": abs(sr.effective_gain),
                "max_residual": leaks[sr.receiver],
                "snr_db": 10.0 * math.log10(abs(sr.effective_gain) ** 2),
            }
        )
    return rx, rows


def cmd_simulate(cfg: RunConfig) -> int:
    validate_config(cfg)
    if cfg.r_value.denominator != 1:
        raise ConfigError(f"simulation needs integer r, got {cfg.r_value}")
    p, a = _load_system(cfg)
    s = schedule(p, a)
    report = validate_schedule(s, p, a)
    if not report.ok:
        print("schedule failed validation:", file=sys.stderr)
        for v in report.violations[:10]:
            print(f"  {v}", file=sys.stderr)
        return EXIT_VERIFY
    H = bf.generate_channel(
        p.K, cfg.seed, h_min=cfg.h_min, h_max=cfg.h_max, rank_tol=cfg.rank_tol
    )
    tasks = list(enumerate(s.blocks))
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(lambda t: _simulate_block(cfg, H, p, t[1], t[0]), tasks))
    else:
        results = [_simulate_block(cfg, H, p, b, i) for i, b in tasks]

    out = _outdir(cfg)
    failures = []
    csv_rows = ["block,receiver,intended_gain,max_residual,snr_db"]
    for (rx, rows), (i, block) in zip(results, tasks):
        for sr in rx.streams:
            if not sr.ok:
                failures.append((i + 1, sr.receiver, sr.residual_interference_power))
        for row in rows:
            csv_rows.append(
                f"{row['block']},{row['receiver']},{row['intended_gain']:.6g},"
                f"{row['max_residual']:.6g},{row['snr_db']:.6g}"
            )
    (out / "residuals.csv").write_text("\n".join(csv_rows) + "\n")
    (out / "schedule.json").write_text(json.dumps(schedule_to_doc(s), indent=2))

    r = int(cfg.r_value) if not cfg.placement else int(metrics.Fraction(sum(len(m) for m in p.mapped_files), p.n_total))
    n_real_q = p.n_real * a.Q
    effective_blocks = sum(
        1 for b in s.blocks if any(not p.is_padding(d.n) for d in b.deliveries)
    )
    real_deliveries = sum(
        1 for b in s.blocks for d in b.deliveries if not p.is_padding(d.n)
    )
    profile = metrics.ReplicationProfile.from_placement(p)
    load_doc = {
        "K": p.K,
        "Q": a.Q,
        "N": p.n_real,
        "n_total": p.n_total,
        "r": r,
        "T": s.T,
        "L_measured": str(Fraction(s.T, n_real_q)),
        "L_optimal": str(metrics.optimal_load(p.K, r)) if 1 <= r <= p.K else None,
        "effective_blocks": effective_blocks,
        "real_deliveries": real_deliveries,
        "converse_T": metrics.converse_lower_bound(profile, p.K, a.Q).block_bound,
        "all_deliveries_ok": not failures,
    }
    (out / "load_report.json").write_text(json.dumps(load_doc, indent=2))
    print(
        f"T={s.T} blocks ({effective_blocks} carrying real data), "
        f"L={Fraction(s.T, n_real_q)}, outputs in {out}/"
    )
    if failures:
        for blk, k, res in failures[:10]:
            print(f"decode failed: block {blk}, receiver {k}, residual {res:.3e}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_verify(cfg: RunConfig, use_oracle: bool = False) -> int:
    validate_config(cfg)
    p, a = _load_system(cfg)
    profile = metrics.ReplicationProfile.from_placement(p)
    bound = metrics.converse_lower_bound(profile, p.K, a.Q)
    print(f"converse bound: {bound.block_bound} blocks (sigma_sum = {bound.sigma_sum})")
    t_measured = None
    try:
        s = schedule(p, a)
        t_measured = s.T
        print(f"measured: {t_measured} blocks")
    except ScheduleError as exc:
        print(f"constructive scheduler not applicable: {exc}")
    t_oracle = None
    if use_oracle:
        try:
            t_oracle, _ = brute_force_min_blocks(p, a)
            print(f"oracle: {t_oracle} blocks")
        except (DemandTooLargeError, CapExceededError) as exc:
            print(f"oracle error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    candidates = [t for t in (t_measured, t_oracle) if t is not None]
    if not candidates:
        print("nothing to compare against the bound")
        return EXIT_CONFIG
    achieved = min(candidates)
    if achieved < bound.block_bound:
        print(f"FAIL: achieved {achieved} below the converse bound {bound.block_bound}")
        return EXIT_VERIFY
    if t_measured is not None and t_measured == bound.block_bound:
        print("PASS: measured block count meets the converse bound")
        return EXIT_OK
    if t_measured is None:
        print(f"INFO: best known {achieved} vs bound {bound.block_bound} (no constructive schedule)")
        return EXIT_OK
    print(f"FAIL: measured {t_measured} exceeds the converse bound {bound.block_bound}")
    return EXIT_VERIFY


def cmd_oracle(cfg: RunConfig) -> int:
    validate_config(cfg)
    p, a = _load_system(cfg)
    try:
        t_opt, witness = brute_force_min_blocks(p, a)
    except (DemandTooLargeError, CapExceededError) as exc:
        print(f"oracle error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    bound = metrics.converse_lower_bound(
        metrics.ReplicationProfile.from_placement(p), p.K, a.Q
    )
    print(f"T_opt={t_opt} (converse bound {bound.block_bound})")
    out = _outdir(cfg)
    (out / "oracle_schedule.json").write_text(json.dumps(schedule_to_doc(witness), indent=2))
    (out / "placement.json").write_text(
        json.dumps(placement_to_doc(p, a, metrics.Fraction(sum(len(m) for m in p.mapped_files), p.n_total)), indent=2)
    )
    print(f"witness written to {out}/oracle_schedule.json")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="airshuffle",
        description="Schedule and simulate the shuffle phase of MapReduce over a wireless interference channel.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("tradeoff", "write the load-vs-replication comparison table"),
        ("simulate", "run the full place/schedule/beamform/decode pipeline"),
        ("verify", "compare measured block count against the converse bound"),
        ("oracle", "brute-force the minimum block count on a tiny instance"),
    ]:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", help="JSON config file")
        cmd.add_argument("--preset", help=f"named scenario: {', '.join(sorted(PRESETS))}")
        cmd.add_argument("--K", type=int, dest="K")
        cmd.add_argument("--N", type=int, dest="N")
        cmd.add_argument("--Q", type=int, dest="Q")
        cmd.add_argument("--r", dest="r", help="replication target (integer, or fraction like 3/2)")
        cmd.add_argument("--seed", type=int)
        cmd.add_argument("--out", help="output directory")
        cmd.add_argument("--workers", type=int)
        cmd.add_argument("--power-db", type=float, dest="power_db")
        cmd.add_argument("--tau", type=int)
        noise = cmd.add_mutually_exclusive_group()
        noise.add_argument("--noise", dest="noise", action="store_true", default=None)
        noise.add_argument("--no-noise", dest="noise", action="store_false", default=None)
        cmd.add_argument("--placement", help="placement JSON file (overrides K/N/Q/r)")
        if name == "verify":
            cmd.add_argument("--oracle", action="store_true", help="also run the brute-force oracle")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if args.command == "tradeoff":
            return cmd_tradeoff(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "verify":
            return cmd_verify(cfg, use_oracle=getattr(args, "oracle", False))
        if args.command == "oracle":
            return cmd_oracle(cfg)
        raise ConfigError(f"unknown command {args.command}")
    except (ConfigError, ScheduleError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
