"""
CLI commands for nikolskii-lb
"""

import math
from contextlib import contextmanager
from dataclasses import asdict
from typing import Any, Dict, List, Optional

import click
import numpy as np
from rich.console import Console
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from nikolskii_lb import __version__
from nikolskii_lb.cli.config import parse_config
from nikolskii_lb.cli.reports import emit_report, envelope, report_stem, write_samples
from nikolskii_lb.core.density_lab import (
    PerturbationFamily, build_family, build_family_synthetic, calibrate_constants, choose_kappa,
    draw_prior, sample_density,
)
from nikolskii_lb.core.errors import NikolskiiError, ParameterError
from nikolskii_lb.core.lb_verifier import (
    NAMED_CONSTANTS, branch_of, certificate, chi_budget, check_lemma_sandwich, check_lemma_wjk,
    verify_assumptions,
)
from nikolskii_lb.core.models import (
    BudgetMode, ClassParams, Command, FamilyConstants, KernelName, LambdaBranch, OutputFormat,
    Provenance, RunConfig,
)
from nikolskii_lb.core.param_space import (
    ParameterGrid, check_conditions_A, classify, compare_thetas, exponent_general, rate_exponent,
    rates_at_n,
)
from nikolskii_lb.core.risk_sim import (
    consistent_with_certificate, no_spec_wins_both, two_class_experiment,
)
from nikolskii_lb.utils.file_utils import FileUtils
from nikolskii_lb.utils.logging_config import setup_logging
from nikolskii_lb.utils.rng import stream

console = Console()

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

DEFAULT_BETAS = (0.3, 0.5, 0.8, 1.2)
DEFAULT_RS = (1.0, 2.0, 4.0)
RANDOM_R_CHOICES = (1.0, 1.5, 2.0, 3.0, 4.0, math.inf)
RANDOM_Q_CHOICES = (2.0, 4.0, math.inf)
SYNTHETIC_M = 8
LEMMA_CASES = 20
SANDWICH_GRID = 10_000

LOGO = """
[bold blue]
 ╔╗╔╦╦╔═╔═╗╦  ╔═╗╦╔═╦╦  ╦  ╔╗
 ║║║║╠╩╗║ ║║  ╚═╗╠╩╗║║  ║  ╠╩╗
 ╝╚╝╩╩ ╩╚═╝╩═╝╚═╝╩ ╩╩╩  ╩═╝╚═╝
[/bold blue]
[italic]Adaptive-rate calculus and two-class lower-bound certificates[/italic]
"""


def _fmt(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "✅" if value else "❌"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.6g}"
    return str(value)


def _spinner() -> Progress:
    return Progress(SpinnerColumn(), TextColumn("[progress.description]{task.description}"),
                    console=console, transient=True)


@contextmanager
def reporting_errors(ctx: click.Context):
    """Map the error hierarchy to exit codes: parameters 2, everything else 3"""
    try:
        yield
    except ParameterError as e:
        console.print(f"[red]❌ Error: {e}[/red]")
        ctx.exit(EXIT_USAGE)
    except NikolskiiError as e:
        console.print(f"[red]❌ {type(e).__name__}: {e}[/red]")
        ctx.exit(EXIT_NUMERICAL)
    except IOError as e:
        console.print(f"[red]❌ Could not write reports: {e}[/red]")
        ctx.exit(EXIT_NUMERICAL)


def _report_written(paths: List[str]) -> None:
    for path in paths:
        console.print(f"[green]📄 Report saved to {path}[/green]")


def class_options(func):
    """theta and theta_prime flags shared by the two-class commands"""
    options = [
        click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
                     help='YAML or JSON config file (flags override its values)'),
        click.option('--d', type=int, help='Dimension d'),
        click.option('--beta', help='Smoothness beta (scalar or comma-separated per direction)'),
        click.option('--r', help='Norm index r >= 1 ("inf" allowed)'),
        click.option('--q', help='Norm index q >= 2 ("inf" allowed)'),
        click.option('--L', 'L', help='Radii L (scalar or comma-separated)'),
        click.option('--Q', 'Q', help='L_q radius Q'),
        click.option('--beta-prime', help="Smoothness of theta'"),
        click.option('--r-prime', help="Norm index r of theta'"),
        click.option('--q-prime', help="Norm index q of theta'"),
        click.option('--L-prime', 'L_prime', help="Radii L of theta'"),
        click.option('--Q-prime', 'Q_prime', help="L_q radius Q of theta'"),
        click.option('--out-dir', help='Report directory (default $NIKOLSKII_OUT_DIR or ./reports)'),
        click.option('--format', 'format', type=click.Choice([f.value for f in OutputFormat]),
                     help='Main report format'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _load(ctx: click.Context, command: Command, config_path: Optional[str],
          flags: Dict[str, Any]) -> RunConfig:
    config = parse_config(command, flags, config_path)
    if ctx.obj.get('verbose'):
        console.print(f"[dim]{command.value}: config hash "
                      f"{FileUtils.config_hash(config.to_dict())}[/dim]")
    return config


def _constants(config: RunConfig, nonnegative: bool = False) -> FamilyConstants:
    return calibrate_constants(config.theta, config.theta_prime, config.big_n,
                               nonnegative=nonnegative)


def _family_at(config: RunConfig, n: int, constants: FamilyConstants) -> PerturbationFamily:
    delta = config.delta if config.delta is not None else 1.0
    kappa = config.kappa
    if kappa is None:
        kappa = choose_kappa(config.theta, config.theta_prime, n, delta, constants=constants,
                             big_n=config.big_n)
    return build_family(config.theta, config.theta_prime, n, kappa, delta,
                        construction=config.construction, constants=constants,
                        big_n=config.big_n)


def _c_of(config: RunConfig) -> Optional[float]:
    if config.alpha is None:
        return None
    return compare_thetas(config.theta, config.theta_prime, alpha=config.alpha).c


def _family_constants(family: PerturbationFamily) -> Dict[str, Any]:
    data = asdict(family.constants)
    data["provenance"] = Provenance.ESTIMATED.value
    return data


@click.group(invoke_without_command=True)
@click.option('--verbose', '-v', is_flag=True, help='Enable verbose output (DEBUG logging)')
@click.option('--log-level', envvar='LOG_LEVEL', help='Logging level (default WARNING)')
@click.option('--log-file', help='Also write logs to this file')
@click.version_option(version=__version__, prog_name='nikolskii-lb')
@click.pass_context
def cli(ctx, verbose, log_level, log_file):
    """
    nikolskii-lb - adaptive estimation of the L2 norm over anisotropic Nikolskii classes

    Rate exponents and regimes, explicit perturbation families, assumption
    checklists, lower-bound certificates and Monte-Carlo risk evidence.
    """
    ctx.ensure_object(dict)
    ctx.obj['verbose'] = verbose
    setup_logging('DEBUG' if verbose else log_level, log_file)

    if ctx.invoked_subcommand is None:
        console.print(LOGO)
        console.print("Run [bold]nikolskii-lb --help[/bold] to see all available commands.\n")


@cli.command()
@class_options
@click.option('--n', type=int, help='Sample size; adds psi_n, phi_n and the price')
@click.pass_context
def rate(ctx, config_path, **flags):
    """Rate exponent and regime of theta as JSON on standard output"""
    with reporting_errors(ctx):
        config = _load(ctx, Command.RATE, config_path, flags)
        report = (rates_at_n(config.theta, config.n) if config.n is not None
                  else rate_exponent(config.theta))
        payload = asdict(report)
        provenance = {key: Provenance.CLOSED_FORM.value
                      for key in ("z", "psi_n", "phi_n", "price") if payload.get(key) is not None}
        emit_report(config, payload, provenance=provenance)
        click.echo(FileUtils.dumps_json(envelope(config, payload, provenance=provenance)), nl=False)


@cli.command()
@click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
              help='YAML or JSON config file with a grid section')
@click.option('--grid-kind', type=click.Choice(['isotropic', 'anisotropic', 'random']),
              help='Structured grid or seeded random points')
@click.option('--d', type=int, help='Dimension of the grid points')
@click.option('--betas', help='Comma-separated beta values')
@click.option('--rs', help='Comma-separated r values ("inf" allowed)')
@click.option('--qs', help='Comma-separated q values ("inf" allowed)')
@click.option('--points', type=int, help='Number of random points')
@click.option('--seed', type=int, help='Seed for a random grid')
@click.option('--out-dir', help='Report directory')
@click.option('--format', 'format', type=click.Choice([f.value for f in OutputFormat]))
@click.pass_context
def regimes(ctx, config_path, grid_kind, d, betas, rs, qs, points, **flags):
    """Classify a parameter grid and check Conditions A1-A3 on it"""
    grid_flags = {k: v for k, v in (("kind", grid_kind), ("d", d), ("betas", betas),
                                    ("rs", rs), ("qs", qs), ("points", points)) if v is not None}
    flags["grid"] = grid_flags
    with reporting_errors(ctx):
        config = _load(ctx, Command.REGIMES, config_path, flags)
        grid = config.grid or {"kind": "isotropic", "d": 1}
        thetas = _grid_points(grid, config.seed)
        with _spinner() as progress:
            progress.add_task("🧭 Checking conditions on the grid...", total=None)
            if grid["kind"] == "random":
                report = check_conditions_A(thetas)
            else:
                report = check_conditions_A(_structured_grid(grid))

        rows = []
        for i, theta in enumerate(thetas):
            z = exponent_general(theta)
            rows.append([i, ",".join(_fmt(b) for b in theta.beta),
                         ",".join(_fmt(r) for r in theta.r), _fmt(theta.q), z,
                         classify(theta, z).value])
        table = Table(title="Regime classification")
        for header in ("#", "beta", "r", "q", "z", "regime"):
            table.add_column(header)
        for row in rows[:50]:
            table.add_row(*[_fmt(v) for v in row])
        console.print(table)
        if len(rows) > 50:
            console.print(f"[dim]... {len(rows) - 50} more rows in the report[/dim]")

        summary = Table(show_header=False, box=None)
        summary.add_row("[cyan]Pairs checked:[/cyan]", str(len(report.pairs)))
        summary.add_row("[cyan]Parametric points skipped:[/cyan]", str(report.skipped_parametric))
        summary.add_row("[cyan]Price bounded:[/cyan]", _fmt(report.price_bounded))
        summary.add_row("[cyan]A2/A3 pass:[/cyan]",
                        _fmt(all(p.a2_pass and p.a3_pass for p in report.pairs)))
        summary.add_row("[cyan]A1 pass:[/cyan]", _fmt(all(s.passed for s in report.a1)))
        console.print(Panel(summary, title="Conditions A", border_style="blue"))

        payload = {"points": [dict(theta.to_dict(), z=row[4], regime=row[5])
                              for theta, row in zip(thetas, rows)],
                   "conditions": asdict(report)}
        paths = emit_report(config, payload,
                            tables={"classification": (["index", "beta", "r", "q", "z", "regime"],
                                                       rows)},
                            provenance={"z": Provenance.CLOSED_FORM.value})
        _report_written(paths)
    ctx.exit(EXIT_OK if report.passed else EXIT_CHECK_FAILED)


def _structured_grid(grid: Dict[str, Any]) -> ParameterGrid:
    betas = grid.get("betas", list(DEFAULT_BETAS))
    rs = grid.get("rs", list(DEFAULT_RS))
    qs = grid.get("qs", [math.inf])
    if grid["kind"] == "anisotropic":
        return ParameterGrid.anisotropic(grid["d"], betas, rs, qs)
    return ParameterGrid.isotropic(grid["d"], betas, rs, qs)


def _grid_points(grid: Dict[str, Any], seed: Optional[int]) -> List[ClassParams]:
    if grid["kind"] != "random":
        return _structured_grid(grid).points()
    if seed is None:
        raise ParameterError("missing required field --seed for a random grid")
    rng = stream(seed, 0)
    d = grid["d"]
    thetas = []
    for _ in range(grid.get("points", 20)):
        if rng.random() < 0.5:
            beta = [float(rng.uniform(0.2, 3.0))] * d
            r = [float(rng.choice(RANDOM_R_CHOICES))] * d
        else:
            beta = [float(b) for b in rng.uniform(0.2, 3.0, size=d)]
            r = [float(v) for v in rng.choice(RANDOM_R_CHOICES, size=d)]
        thetas.append(ClassParams.create(d, beta, r, float(rng.choice(RANDOM_Q_CHOICES))))
    return thetas


@cli.command()
@class_options
@click.option('--n-grid', help='Comma-separated increasing sample sizes')
@click.pass_context
def sweep(ctx, config_path, **flags):
    """psi_n, phi_n and the price of adaptation along an n grid (rate-vs-n plot data)"""
    with reporting_errors(ctx):
        config = _load(ctx, Command.SWEEP, config_path, flags)
        with_prime = config.theta_prime is not None
        header = ["n", "z", "psi_n", "phi_n", "price"] + (["alpha_n"] if with_prime else [])
        rows = []
        for n in config.n_grid:
            report = rates_at_n(config.theta, n)
            row = [n, report.z, report.psi_n, report.phi_n, report.price]
            if with_prime:
                row.append(compare_thetas(config.theta, config.theta_prime, alpha=config.alpha,
                                          n=n).alpha_n)
            rows.append(row)

        table = Table(title=f"Rates for theta (z = {_fmt(rows[0][1])})")
        for name in header:
            table.add_column(name, justify="right")
        for row in rows:
            table.add_row(*[_fmt(v) for v in row])
        console.print(table)

        payload = {"rows": [dict(zip(header, row)) for row in rows],
                   "regime": rate_exponent(config.theta).regime}
        paths = emit_report(config, payload, tables={"rate_vs_n": (header, rows)},
                            provenance={k: Provenance.CLOSED_FORM.value for k in header[1:]})
        _report_written(paths)


@cli.command()
@class_options
@click.option('--n', type=int, help='Sample size n >= 3')
@click.option('--kappa', type=float, help='Bump density (chosen automatically when omitted)')
@click.option('--delta', type=float, help='Scale of M for construction II (default 1)')
@click.option('--big-n', type=float, help='Requested plateau parameter N of the base (default 8)')
@click.option('--construction', type=click.Choice(['I', 'II']),
              help='Force a construction instead of choosing by regime')
@click.option('--samples', type=int, help='Write this many draws from f_y as CSV (needs --seed)')
@click.option('--seed', type=int, help='Seed for the weight vector y and the draws')
@click.pass_context
def construct(ctx, config_path, **flags):
    """Build the perturbation family for (theta, theta') at n and save it as JSON

    With --samples K, one weight vector y is drawn from the prior and K exact
    draws from f_y are written as CSV.
    """
    with reporting_errors(ctx):
        config = _load(ctx, Command.CONSTRUCT, config_path, flags)
        with _spinner() as progress:
            progress.add_task("🏗️ Calibrating constants and building the family...", total=None)
            family = _family_at(config, config.n, _constants(config))

        info = Table(show_header=False, box=None)
        info.add_row("[cyan]Construction:[/cyan]", family.construction.value)
        info.add_row("[cyan]kappa:[/cyan]", _fmt(family.kappa))
        info.add_row("[cyan]Bumps M:[/cyan]", str(family.M))
        info.add_row("[cyan]Amplitude A:[/cyan]", _fmt(family.A))
        info.add_row("[cyan]sigma:[/cyan]", ", ".join(_fmt(s) for s in family.sigma))
        info.add_row("[cyan]psi_n:[/cyan]", _fmt(family.psi_n))
        info.add_row("[cyan]S_m:[/cyan]", _fmt(family.S_value))
        console.print(Panel(info, title="Perturbation family", border_style="blue"))

        payload = family.to_dict()
        draws = None
        if config.samples is not None:
            y = draw_prior(family.prior, family.M, stream(config.seed, 0))[0]
            draws = sample_density(family, y, config.samples, stream(config.seed, 1))
            payload["samples"] = {"count": config.samples, "rho_y": float(family.rho(y)),
                                  "file": f"{report_stem(config)}-samples.csv"}
        paths = emit_report(config, payload, constants=_family_constants(family),
                            provenance={"constants": Provenance.ESTIMATED.value,
                                        "derived": Provenance.CLOSED_FORM.value})
        if draws is not None:
            paths.append(write_samples(config, draws))
        _report_written(paths)


@cli.command()
@class_options
@click.option('--n', type=int, help='Sample size n >= 3')
@click.option('--kappa', type=float, help='Bump density (chosen automatically when omitted)')
@click.option('--delta', type=float, help='Scale of M for construction II')
@click.option('--big-n', type=float, help='Requested plateau parameter N of the base')
@click.option('--construction', type=click.Choice(['I', 'II']))
@click.option('--y-mc', type=int, help='Prior draws for the Monte-Carlo entries (>= 100)')
@click.option('--seed', type=int, help='Seed (required)')
@click.option('--membership', is_flag=True, help='Show the Nikolskii membership details')
@click.pass_context
def verify(ctx, config_path, membership, **flags):
    """Evaluate the assumption checklist on the family"""
    with reporting_errors(ctx):
        config = _load(ctx, Command.VERIFY, config_path, flags)
        with _spinner() as progress:
            progress.add_task("🔍 Building the family and checking assumptions...", total=None)
            family = _family_at(config, config.n, _constants(config))
            checklist = verify_assumptions(family, config.n, config.y_mc, stream(config.seed, 0))

        table = Table(title=f"Assumption checklist ({checklist.branch.value})")
        for header in ("check", "value", "threshold", "stderr", "provenance", "pass"):
            table.add_column(header)
        for entry in checklist.entries:
            table.add_row(entry.name, _fmt(entry.value), _fmt(entry.threshold),
                          _fmt(entry.stderr), entry.provenance.value, _fmt(entry.passed))
        console.print(table)

        if membership:
            report = checklist.a3_class_mass.detail["membership"]
            details = Table(title=f"Nikolskii membership ({report['method']}, "
                                  f"scale {_fmt(report['scale'])})")
            for header in ("j", "k", "worst ratio", "at u", "norm", "limit", "ratio ok", "norm ok"):
                details.add_column(header)
            for check in report["per_direction"]:
                details.add_row(str(check["j"]), str(check["k"]), _fmt(check["worst_ratio"]),
                                _fmt(check["worst_u"]), _fmt(check["norm"]),
                                _fmt(check["limit"]), _fmt(check["ratio_ok"]),
                                _fmt(check["norm_ok"]))
            console.print(details)

        console.print(f"[dim]{checklist.note}[/dim]")
        payload = asdict(checklist)
        payload["passed"] = checklist.passed
        payload["family"] = family.to_dict()
        rows = [[e.name, e.value, e.threshold, e.stderr, e.provenance, e.passed]
                for e in checklist.entries]
        paths = emit_report(config, payload,
                            tables={"checklist": (["check", "value", "threshold", "stderr",
                                                   "provenance", "pass"], rows)},
                            constants=_family_constants(family),
                            provenance={e.name: e.provenance.value for e in checklist.entries})
        _report_written(paths)
        if checklist.passed:
            console.print("[green]✅ All assumptions hold numerically[/green]")
        else:
            console.print("[red]❌ Some assumptions failed[/red]")
    ctx.exit(EXIT_OK if checklist.passed else EXIT_CHECK_FAILED)


@cli.command()
@class_options
@click.option('--n', type=int, help='Sample size n >= 3')
@click.option('--n-grid', help='Comma-separated sample sizes (ratio-vs-n plot data)')
@click.option('--kappa', type=float, help='Bump density (chosen per n when omitted)')
@click.option('--delta', type=float, help='Scale of M for construction II')
@click.option('--big-n', type=float, help='Requested plateau parameter N of the base')
@click.option('--construction', type=click.Choice(['I', 'II']))
@click.option('--alpha', type=float, help='alpha in (z, z\'); the midpoint by default')
@click.pass_context
def certify(ctx, config_path, **flags):
    """Chi-square budget and the numeric lower-bound certificate"""
    with reporting_errors(ctx):
        config = _load(ctx, Command.CERTIFY, config_path, flags)
        grid = config.n_grid or [config.n]
        c = _c_of(config)
        header = ["n", "kappa", "M", "ez2", "cosh_product", "alpha_sq", "ratio", "kappa_cert",
                  "R_term", "ez_min_bound", "final"]
        rows, results = [], []
        with _spinner() as progress:
            progress.add_task("📐 Computing budgets and certificates...", total=None)
            constants = _constants(config)
            for n in grid:
                family = _family_at(config, n, constants)
                if branch_of(family) is LambdaBranch.ZERO_LAMBDA:
                    budget = chi_budget(family, n, c, BudgetMode.EXACT_ENUM)
                else:
                    budget = chi_budget(family, n, c, BudgetMode.GENERAL_BRANCH_BOUND)
                cosh = chi_budget(family, n, c, BudgetMode.COSH_PRODUCT)
                cert = certificate(family, n, c, budget=budget)
                rows.append([n, family.kappa, family.M, cert.ez2, cosh.value, cert.alpha_sq,
                             budget.ratio, cert.kappa, cert.R_term, cert.ez_min_bound,
                             cert.final])
                results.append({"n": n, "budget": asdict(budget), "cosh_product": asdict(cosh),
                                "certificate": asdict(cert), "family": family.to_dict()})

        table = Table(title=f"Certificate ({cert.branch.value}, {cert.budget_mode.value})")
        for name in ("n", "kappa", "M", "ez2", "alpha_sq", "ratio", "final"):
            table.add_column(name, justify="right")
        for row in rows:
            table.add_row(*[_fmt(row[header.index(name)])
                            for name in ("n", "kappa", "M", "ez2", "alpha_sq", "ratio", "final")])
        console.print(table)

        named = Table(title="Named constants")
        for name in ("name", "expression", "value", "anchor"):
            named.add_column(name)
        for key, item in NAMED_CONSTANTS.items():
            named.add_row(key, item["expression"], _fmt(item["value"]), item["anchor"])
        console.print(named)

        constants_doc = {"named": NAMED_CONSTANTS, "family": _family_constants(family)}
        paths = emit_report(config, {"results": results},
                            tables={"ratio_vs_n": (header, rows)}, constants=constants_doc,
                            provenance=cert.provenance)
        _report_written(paths)
        passed = cert.final > 0.0
        if passed:
            console.print(f"[green]✅ Certified lower bound {_fmt(cert.final)} at "
                          f"n={grid[-1]}[/green]")
        else:
            console.print(f"[red]❌ Certificate is vacuous at n={grid[-1]}[/red]")
    ctx.exit(EXIT_OK if passed else EXIT_CHECK_FAILED)


@cli.command()
@class_options
@click.option('--n-grid', help='Comma-separated increasing sample sizes')
@click.option('--kappa', type=float, help='Bump density (chosen per n when omitted)')
@click.option('--delta', type=float, help='Scale of M for construction II')
@click.option('--big-n', type=float, help='Requested plateau parameter N of the base')
@click.option('--alpha', type=float, help="alpha in (z, z')")
@click.option('--reps', type=int, help='Replications per density and estimator')
@click.option('--bandwidths', help='Comma-separated bandwidths (default log-spaced)')
@click.option('--kernel', type=click.Choice([k.value for k in KernelName]))
@click.option('--seed', type=int, help='Seed (required)')
@click.pass_context
def simulate(ctx, config_path, **flags):
    """Monte-Carlo risk of kernel estimators on both classes"""
    with reporting_errors(ctx):
        config = _load(ctx, Command.SIMULATE, config_path, flags)
        with _spinner() as progress:
            progress.add_task(f"🎲 Simulating {config.reps} replications per density...",
                              total=None)
            constants = _constants(config)
            risk = two_class_experiment(
                config.theta, config.theta_prime, config.n_grid, config.kappa, config.reps,
                None, config.seed, alpha=config.alpha,
                delta=config.delta if config.delta is not None else 1.0, constants=constants,
                bandwidths=config.bandwidths, kernel=config.kernel)

        consistent = consistent_with_certificate(risk)
        no_winner = no_spec_wins_both(risk)
        table = Table(title=f"Two-class risk ({risk.label})")
        for name in ("estimator", "n", "normalized", "stderr", "combined", "certificate",
                     "consistent"):
            table.add_column(name)
        rows = []
        for label, by_n in risk.normalized_combined.items():
            for n, value in by_n.items():
                row = [label, n, value, risk.normalized_stderr[label][n],
                       risk.combined[label][n], risk.certificate_final[n], consistent[label]]
                rows.append(row)
                table.add_row(*[_fmt(v) for v in row])
        console.print(table)

        risk_rows = [[r.density_id, r.estimator, r.n, r.reps, r.mse, r.stderr, r.truth]
                     for r in risk.rows]
        payload = asdict(risk)
        payload["consistent_with_certificate"] = consistent
        payload["no_spec_wins_both"] = no_winner
        paths = emit_report(
            config, payload,
            tables={"risk": (["density_id", "estimator", "n", "reps", "mse", "stderr", "truth"],
                             risk_rows),
                    "combined_vs_n": (["estimator", "n", "normalized", "stderr", "combined",
                                       "certificate", "consistent"], rows)},
            constants={"family": asdict(constants)},
            provenance={"mse": Provenance.MONTE_CARLO.value,
                        "certificate": Provenance.CLOSED_FORM.value})
        _report_written(paths)
        passed = all(consistent.values()) and no_winner
        if passed:
            console.print("[green]✅ Every estimator respects the certificate[/green]")
        else:
            console.print("[yellow]⚠️ Risk evidence disagrees with the certificate[/yellow]")
    ctx.exit(EXIT_OK if passed else EXIT_CHECK_FAILED)


@cli.command()
@class_options
@click.option('--n', type=int, help='Sample size n >= 3')
@click.option('--kappa', type=float, help='Bump density of the zero-mean family')
@click.option('--delta', type=float, help='Scale of M for construction II')
@click.option('--big-n', type=float, help='Requested plateau parameter N of the base')
@click.option('--construction', type=click.Choice(['I', 'II']))
@click.option('--reps', type=int, help='Monte-Carlo draws per moment check (default 100000)')
@click.option('--y-mc', type=int, help='Prior draws for the sandwich checks')
@click.option('--seed', type=int, help='Seed (required)')
@click.pass_context
def lemmas(ctx, config_path, **flags):
    """Sandwich bound on perturbed densities and the moment bound W <= 2"""
    with reporting_errors(ctx):
        config = _load(ctx, Command.LEMMAS, config_path, flags)
        with _spinner() as progress:
            progress.add_task("🧮 Checking the auxiliary inequalities...", total=None)
            moment = _moment_checks(config)
            sandwich = _sandwich_checks(config)

        table = Table(title="Moment bound W_{J,K}(b) <= 2")
        for name in ("case", "J", "K", "b", "W_hat", "stderr", "W_exact", "2bJD_K", "pass"):
            table.add_column(name)
        for case in moment:
            table.add_row(case["case"], str(case["J"]), str(case["K"]), _fmt(case["b"]),
                          _fmt(case["W_hat"]), _fmt(case["stderr"]), _fmt(case["W_exact"]),
                          _fmt(case["premise_value"]), _fmt(case["pass"]))
        console.print(table)

        sand = Table(title="Sandwich bound f*_y >= f_y >= exp(-1/n) f*_y")
        for name in ("family", "branch", "checked", "upper margin", "lower margin",
                     "equality", "pass"):
            sand.add_column(name)
        for name, result in sandwich.items():
            sand.add_row(name, result["branch"], str(result["checked"]),
                         _fmt(result["worst_upper_margin"]), _fmt(result["worst_lower_margin"]),
                         _fmt(result["exact_equality"]), _fmt(result["pass"]))
        console.print(sand)

        boundary = moment[0]
        passed = (all(case["pass"] for case in moment[1:])
                  and boundary["W_exact"] is not None
                  and abs(boundary["W_exact"] - 1.1) <= 1e-3
                  and all(result["pass"] for result in sandwich.values())
                  and sandwich["zero_mean"]["exact_equality"])
        header = ["case", "J", "K", "b", "W_hat", "stderr", "W_exact", "premise_value", "pass"]
        paths = emit_report(config, {"moment": moment, "sandwich": sandwich, "passed": passed},
                            tables={"moment": (header, [[c[h] for h in header] for c in moment])},
                            provenance={"W_hat": Provenance.MONTE_CARLO.value,
                                        "W_exact": Provenance.CLOSED_FORM.value,
                                        "sandwich": Provenance.QUADRATURE.value})
        _report_written(paths)
    ctx.exit(EXIT_OK if passed else EXIT_CHECK_FAILED)


def _moment_checks(config: RunConfig) -> List[Dict[str, Any]]:
    """The J = K = 1, b = 0.1 boundary case followed by random admissible cases"""
    cases = []
    boundary = check_lemma_wjk(1, 1, 0.1, 1.0, [1.0], reps=config.reps,
                               seed=stream(config.seed, 1, 0))
    cases.append(dict(boundary, case="boundary", J=1, K=1, b=0.1))
    rng = stream(config.seed, 2)
    for i in range(LEMMA_CASES):
        J = int(rng.integers(1, 6))
        K = int(rng.integers(1, 13))
        a = rng.uniform(0.1, 1.0, size=K)
        D_K = 5.0 * float(np.max(a)) ** 2 * K
        b = float(rng.uniform(0.05, 1.0)) / (2.0 * J * D_K)
        result = check_lemma_wjk(J, K, b, 1.0, a, reps=config.reps,
                                 seed=stream(config.seed, 3, i))
        cases.append(dict(result, case=f"random-{i + 1}", J=J, K=K, b=b))
    return cases


def _sandwich_checks(config: RunConfig) -> Dict[str, Dict[str, Any]]:
    """Zero-mean family (equality expected) and a nonnegative-bump family"""
    zero_mean = _family_at(config, config.n, _constants(config))
    synthetic = build_family_synthetic(config.theta, config.theta_prime, config.n, SYNTHETIC_M,
                                       constants=_constants(config, nonnegative=True))
    return {
        "zero_mean": check_lemma_sandwich(zero_mean, config.y_mc, SANDWICH_GRID,
                                          stream(config.seed, 4)),
        "nonnegative": check_lemma_sandwich(synthetic, config.y_mc, SANDWICH_GRID,
                                            stream(config.seed, 5)),
    }
