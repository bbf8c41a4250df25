"""Command-line interface: `lite run`, `lite demo-info-lattice`,
`lite compare-oracle`."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path


def _limit_threads() -> None:
    """Pin BLAS thread counts before numpy loads (LITE_THREADS, default 1).

    Results are thread-count independent; the pin is for predictable
    single-node scheduling.
    """
    n = os.environ.get("LITE_THREADS", "")
    if not n:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, n)


def main(argv: list[str] | None = None) -> int:
    _limit_threads()
    parser = argparse.ArgumentParser(prog="lite", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a transport simulation from a config file")
    p_run.add_argument("config", type=Path)
    p_run.add_argument("--outdir", type=Path, default=None, help="artifact directory (default: <config stem>.out)")

    p_demo = sub.add_parser("demo-info-lattice", help="write information-lattice snapshots for a demo state")
    p_demo.add_argument("kind", choices=["singlets", "random-singlets", "circuit"])
    p_demo.add_argument("--sites", type=int, default=10)
    p_demo.add_argument("--cycles", type=int, default=2, help="brickwork cycles (circuit demo)")
    p_demo.add_argument("--seed", type=int, default=1)
    p_demo.add_argument("--out", type=Path, default=None, help="output JSON file (default: stdout)")

    p_cmp = sub.add_parser("compare-oracle", help="compare the engine against exact evolution on a finite chain")
    p_cmp.add_argument("config", type=Path)
    p_cmp.add_argument("--tolerance", type=float, default=1e-6)

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "demo-info-lattice":
            return _cmd_demo(args)
        return _cmd_compare(args)
    except ConfigFailure as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical breakdown: {exc}", file=sys.stderr)
        return 3


class ConfigFailure(Exception):
    pass


class NumericalFailure(Exception):
    pass


def _cmd_run(args) -> int:
    from .config import ConfigError, RunConfig
    from .dynamics import NegativityError, StiffnessError
    from .engine import run

    try:
        cfg = RunConfig.from_file(args.config)
    except (ConfigError, OSError) as exc:
        raise ConfigFailure(str(exc)) from exc
    outdir = args.outdir or args.config.with_suffix(".out")
    try:
        result = run(cfg, outdir)
    except (NegativityError, StiffnessError) as exc:
        raise NumericalFailure(str(exc)) from exc
    last = result.records[-1]
    print(
        f"done: t={last.time:.6g} steps={result.steps} "
        f"D={last.diffusion_coefficient:.6g} charge={last.total_charge:.6g} "
        f"events={len(result.events)} -> {outdir}"
    )
    return 0


def _cmd_demo(args) -> int:
    import numpy as np

    from .oracle import (
        all_up_state,
        info_lattice_from_full,
        random_circuit_cycle,
        random_singlet_state,
        singlet_chain_state,
    )

    sites = args.sites
    if sites > 12:
        raise ConfigFailure("demo states are capped at 12 sites")
    rng = np.random.default_rng(args.seed)
    if args.kind == "singlets":
        payload = [{"cycle": 0, "lattice": info_lattice_from_full(singlet_chain_state(sites)).records()}]
    elif args.kind == "random-singlets":
        state, pairs = random_singlet_state(sites, rng)
        payload = [
            {
                "cycle": 0,
                "pairs": [list(p) for p in pairs],
                "lattice": info_lattice_from_full(state).records(),
            }
        ]
    else:
        state = all_up_state(sites)
        payload = [{"cycle": 0, "lattice": info_lattice_from_full(state).records()}]
        for cycle in range(1, args.cycles + 1):
            state = random_circuit_cycle(state, rng)
            payload.append({"cycle": cycle, "lattice": info_lattice_from_full(state).records()})
    text = json.dumps(payload, indent=1)
    if args.out:
        args.out.write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def _cmd_compare(args) -> int:
    from .config import ConfigError, RunConfig
    from .dynamics import NegativityError, StiffnessError
    from .engine import compare_with_oracle

    try:
        cfg = RunConfig.from_file(args.config)
        if not cfg.chain_length:
            raise ConfigError("compare-oracle needs chain_length > 0 in [model]")
        if cfg.chain_length > 10:
            raise ConfigError("compare-oracle is capped at 10 sites")
    except (ConfigError, OSError) as exc:
        raise ConfigFailure(str(exc)) from exc
    try:
        cmp_result = compare_with_oracle(cfg)
    except (NegativityError, StiffnessError) as exc:
        raise NumericalFailure(str(exc)) from exc
    for t, dev in zip(cmp_result.times, cmp_result.per_time):
        print(f"t={t:.4g} max single-site deviation={dev:.3e}")
    print(f"overall max deviation: {cmp_result.max_deviation:.3e}")
    if cmp_result.max_deviation > args.tolerance:
        print(f"FAIL: deviation above {args.tolerance:g}", file=sys.stderr)
        return 1
    print("PASS")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
