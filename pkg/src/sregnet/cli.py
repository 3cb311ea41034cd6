import argparse
import logging
import os
import sys
from dataclasses import replace
from typing import List, Optional

from sregnet.config import CliConfig, load_config
from sregnet.constants import SCHEMA_VERSION, ExitCode, VarianceMode
from sregnet.dgp import simulate_network
from sregnet.distributions import parse_known_density
from sregnet.estimator import TrimPolicy
from sregnet.exceptions import (
    BootstrapException,
    ConfigException,
    DegenerateRegressionException,
    DensityFloorException,
    DistributionException,
    InsufficientAgentsException,
    InvalidNetworkException,
    KernelSpecException,
    McCellFailedException,
    NetworkFormatException,
    OracleUnavailableException,
    RankConditionException,
    TrimmingException,
    VarianceNotPsdException,
)
from sregnet.montecarlo import draws_frame, emit_table, run_design
from sregnet.network import average_degree
from sregnet.repositories import NetworkNotFoundException, report_row
from sregnet.services import EstimationService
from sregnet.tail import TailConfig

logger = logging.getLogger(__name__)

_SE_MODES = {
    "oracle": VarianceMode.ORACLE_P,
    "plugin": VarianceMode.PLUGIN_P,
    "bootstrap": VarianceMode.BOOTSTRAP,
}

_CONFIG_ERRORS = (
    ConfigException,
    NetworkFormatException,
    NetworkNotFoundException,
    InvalidNetworkException,
    InsufficientAgentsException,
    OracleUnavailableException,
    DistributionException,
    KernelSpecException,
    BootstrapException,
    DegenerateRegressionException,
    McCellFailedException,
    OSError,
    ValueError,
)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sregnet",
        description="Simulate dyadic networks and estimate homophily coefficients.",
    )
    parser.add_argument(
        "--version", action="version", version=f"config schema {SCHEMA_VERSION}"
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="draw one network")
    simulate.add_argument("config", nargs="?", help="JSON config file")
    simulate.add_argument("--seed", type=int)
    simulate.add_argument("--n", type=int)
    simulate.add_argument("--out", required=True, help="network file to write")

    estimate = sub.add_parser("estimate", help="estimate theta on a network file")
    estimate.add_argument("network")
    estimate.add_argument("--config", help="JSON config file")
    estimate.add_argument("--estimator", choices=["special", "tail"])
    estimate.add_argument(
        "--density", help="known:<normal(mu,var)|uniform(a,b)>, kernel or kernel_conditional"
    )
    estimate.add_argument("--h", type=float, help="first-stage bandwidth")
    estimate.add_argument("--trim", help="none, band, band:<c> or support:<tau>")
    estimate.add_argument("--se", choices=sorted(_SE_MODES))
    estimate.add_argument("--draws", type=int, help="bootstrap draws")
    estimate.add_argument(
        "--index-term", action="store_true",
        help="add the index spread of D* to the analytic variance",
    )
    estimate.add_argument("--jobs", type=int)
    estimate.add_argument("--gamma-quantile", type=float)
    estimate.add_argument("--grid", type=int, help="grid points per dimension")
    estimate.add_argument("--out", help="report file to write")
    estimate.add_argument("--density-out", help="CSV of first-stage densities")
    estimate.add_argument("--draws-out", help="CSV of bootstrap draws")

    montecarlo = sub.add_parser("montecarlo", help="run a Monte Carlo design")
    montecarlo.add_argument("config")
    montecarlo.add_argument("--reps", type=int)
    montecarlo.add_argument("--jobs", type=int, default=1)
    montecarlo.add_argument("--out-dir", help="directory for tables")
    return parser


def _trim_policy(text: str) -> TrimPolicy:
    kind, _, value = text.partition(":")
    if kind == "none":
        return TrimPolicy.none()
    elif kind == "band":
        return TrimPolicy.band(float(value)) if value else TrimPolicy.band()
    elif kind == "support" and value:
        return TrimPolicy.support_distance(float(value))
    raise ConfigException(f"bad trimming option '{text}'")


def _apply_estimate_flags(cfg: CliConfig, args) -> CliConfig:
    est = cfg.estimator
    if args.estimator:
        est = replace(est, kind=args.estimator)
    if args.density:
        if args.density.startswith("known:"):
            law = parse_known_density(args.density[len("known:"):])
            est = replace(est, density="known", known_density=law)
        elif args.density in ("known", "kernel", "kernel_conditional"):
            est = replace(est, density=args.density)
        else:
            raise ConfigException(f"bad density option '{args.density}'")
    if args.gamma_quantile is not None or args.grid is not None:
        tail = est.tail
        est = replace(
            est,
            tail=TailConfig(
                theta_box=tail.theta_box,
                gamma_n=None if args.gamma_quantile is not None else tail.gamma_n,
                gamma_quantile=(
                    args.gamma_quantile if args.gamma_quantile is not None
                    else tail.gamma_quantile
                ),
                gamma_multiplier=tail.gamma_multiplier,
                optimizer=tail.optimizer,
                grid_points=args.grid if args.grid is not None else tail.grid_points,
            ),
        )
    cfg = replace(cfg, estimator=est)
    if args.h is not None:
        cfg = replace(cfg, kde=replace(cfg.kde, h=args.h))
        cfg.kde.kernel()
    if args.trim:
        cfg = replace(cfg, trim=_trim_policy(args.trim))
    inference = cfg.inference
    if args.se:
        inference = replace(inference, mode=_SE_MODES[args.se])
    if args.index_term:
        inference = replace(inference, index_term=True)
    if args.draws is not None:
        inference = replace(inference, draws=args.draws)
    if args.jobs is not None:
        inference = replace(inference, jobs=args.jobs)
    return replace(cfg, inference=inference)


def cmd_simulate(args, service: EstimationService) -> ExitCode:
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.n is not None:
        changes["n"] = args.n
    dgp = cfg.dgp.replace(**changes) if changes else cfg.dgp
    net = simulate_network(dgp)
    service.save_network(args.out, net)
    print(f"n={net.n} degree={average_degree(net):.4f}")
    return ExitCode.OK


def cmd_estimate(args, service: EstimationService) -> ExitCode:
    cfg = _apply_estimate_flags(load_config(args.config), args)
    net = service.load_network(args.network)
    g = cfg.dgp.combiner
    if cfg.estimator.kind == "tail":
        if cfg.inference.mode is not None:
            raise ConfigException(
                "standard errors are only available for the special estimator"
            )
        report = service.estimate_tail(net, g, cfg.estimator.tail)
    else:
        if cfg.inference.mode == VarianceMode.ORACLE_P and not net.has_latent:
            raise OracleUnavailableException()
        policy = cfg.density_policy()
        report = service.estimate(
            net,
            g,
            policy,
            cfg.trim,
            cfg.estimator.method,
            settings=cfg.inference,
            theta0=cfg.dgp.theta0,
            u_dist=cfg.dgp.u_dist,
        )
        if args.density_out:
            service.result_repository.add_density(args.density_out, net.n, report.density)
        if args.draws_out and report.variance is not None:
            if report.variance.draws is not None:
                service.result_repository.add_bootstrap_draws(
                    args.draws_out, report.variance
                )
    if args.out:
        service.save_report(args.out, report)
    sys.stdout.write(report_row(report))
    return ExitCode.OK


def cmd_montecarlo(args, service: EstimationService) -> ExitCode:
    cfg = load_config(args.config)
    design = cfg.mc
    if args.reps is not None:
        design = replace(design, reps=args.reps)
    result = run_design(design, jobs=args.jobs, service=service)
    out_dir = args.out_dir or cfg.output.dir
    repo = service.result_repository
    for fmt in cfg.output.formats:
        suffix = "csv" if fmt == "csv" else "md"
        repo.add_text(os.path.join(out_dir, f"{design.name}.{suffix}"),
                      emit_table(result, fmt))
    if cfg.output.draws:
        repo.add_frame(os.path.join(out_dir, f"{design.name}_draws.csv"),
                       draws_frame(result))
    print(emit_table(result, "markdown"))
    return ExitCode.OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "montecarlo": cmd_montecarlo,
}


def run(argv: Optional[List[str]] = None, service: Optional[EstimationService] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    service = service if service is not None else EstimationService()
    try:
        return int(_COMMANDS[args.command](args, service))
    except RankConditionException as e:
        print(f"error: {e}", file=sys.stderr)
        return int(ExitCode.SINGULAR)
    except VarianceNotPsdException as e:
        print(f"error: variance estimate failed: {e}", file=sys.stderr)
        return int(ExitCode.SINGULAR)
    except TrimmingException as e:
        print(f"error: {e}", file=sys.stderr)
        return int(ExitCode.TRIMMING_EMPTY)
    except DensityFloorException as e:
        print(f"error: internal density contract violated: {e}", file=sys.stderr)
        return int(ExitCode.CONFIG)
    except _CONFIG_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return int(ExitCode.CONFIG)


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
