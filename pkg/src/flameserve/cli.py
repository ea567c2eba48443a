"""Command-line entry points: ``flame-serve`` boots the HTTP service and
``flame-bench`` runs a workload against an in-process service (default) or a
remote one (--remote)."""

from __future__ import annotations

import argparse
import logging
import sys

from .bench import (
    AblationConfig,
    KeyDistribution,
    RunReport,
    Scenario,
    WorkloadSpec,
    emit_report,
    run_scenario,
    run_scenario_remote,
)
from .config import ServiceConfig, load_service_config


def _load_config(path: str | None) -> ServiceConfig:
    return load_service_config(path) if path else ServiceConfig()


def bench_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="flame-bench", description="Workload driver and ablation runner."
    )
    parser.add_argument("--scenario", choices=["base", "long", "mixed"], default="mixed")
    parser.add_argument("--cache", choices=["on", "off"], default="on")
    parser.add_argument("--mem-opt", choices=["on", "off"], default="on")
    parser.add_argument("--routing", choices=["explicit", "implicit"], default="explicit")
    parser.add_argument("--duration-s", type=float, default=10.0)
    parser.add_argument("--concurrency", type=int, default=8)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--config", type=str, default=None, help="service config JSON")
    parser.add_argument("--out", type=str, default="report.csv", help="CSV output path")
    parser.add_argument(
        "--requests", type=int, default=None, help="stop after N requests instead of a deadline"
    )
    parser.add_argument("--key-dist", choices=["zipf", "uniform"], default="zipf")
    parser.add_argument("--zipf-s", type=float, default=1.0, help="Zipf exponent")
    parser.add_argument("--num-items", type=int, default=100_000, help="item universe size")
    parser.add_argument(
        "--remote", type=str, default=None, help="drive a running server at this base URL"
    )
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    spec = WorkloadSpec(
        scenario=Scenario(args.scenario),
        duration_s=args.duration_s,
        concurrency=args.concurrency,
        key_distribution=KeyDistribution(kind=args.key_dist, exponent=args.zipf_s),
        seed=args.seed,
        num_requests=args.requests,
        num_items=args.num_items,
    )
    ablation = AblationConfig(
        cache=args.cache == "on", mem_opt=args.mem_opt == "on", routing=args.routing
    )
    report: RunReport
    if args.remote:
        report = run_scenario_remote(spec, ablation, args.remote)
    else:
        report = run_scenario(spec, ablation, _load_config(args.config))
    emit_report(report, args.out)
    return 0


def serve_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="flame-serve", description="Run the scoring service.")
    parser.add_argument("--config", type=str, default=None, help="service config JSON")
    parser.add_argument("--listen", type=str, default=None, help="override host:port")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    config = _load_config(args.config)
    if args.listen:
        from dataclasses import replace

        config = replace(config, listen_addr=args.listen)

    from .api import serve

    serve(config)
    return 0


if __name__ == "__main__":
    sys.exit(bench_main())
