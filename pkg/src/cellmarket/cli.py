"""Command line: validate scenarios, run experiments, export traces."""
from __future__ import annotations

import csv
import json
import logging
import sys

import click

from .experiment import MethodError, commodity_series, edgeworth_data, export_edgeworth, run
from .market import EconomyError
from .scenario import METHODS, ScenarioError, load_scenario
from .tatonnement import run_auction

EXIT_OK, EXIT_INVALID, EXIT_NO_CONVERGENCE = 0, 1, 2


def _load(path, variant):
    try:
        return load_scenario(path).with_variant(variant)
    except ScenarioError as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_INVALID)


def _methods(value):
    if not value:
        return None
    out = [m.strip().upper() for m in value.split(",") if m.strip()]
    bad = [m for m in out if m not in METHODS]
    if bad:
        raise click.BadParameter(f"unknown method(s) {bad}; choose from {', '.join(METHODS)}")
    return out


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Exchange-economy user association for energy-harvesting small cells.

    SCENARIO is a TOML file or the name of a bundled fixture
    (example1, example2, example3, secV_B, random_small).
    """
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.argument("scenario")
@click.option("--variant", default=None, help="Named variant of an explicit economy.")
def validate(scenario, variant):
    """Check a scenario file and summarize it."""
    sc = _load(scenario, variant)
    e = sc.build()
    click.echo(f"ok: {sc.name} ({sc.mode}) N={e.N} M={e.M} S={e.S} commodities={e.K}")


@main.command("run")
@click.argument("scenario")
@click.option("--methods", default=None, help=f"Comma-separated subset of {','.join(METHODS)}.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None, help="Directory for report and traces.")
@click.option("--variant", default=None)
@click.option("--endowment-seed", type=int, default=None, help="Override the endowment seed.")
@click.option("--rnd-seed", type=int, default=None, help="Override the RND seed.")
def run_cmd(scenario, methods, out_dir, variant, endowment_seed, rnd_seed):
    """Run methods on a scenario and write report.json, timings.json and traces."""
    sc = _load(scenario, variant)
    try:
        report = run(sc, _methods(methods), endowment_seed=endowment_seed, rnd_seed=rnd_seed)
    except (MethodError, EconomyError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_INVALID)
    for name, r in report.methods.items():
        norm = "-" if r.normalized is None else f"{r.normalized:.4f}"
        extra = f"  {r.outcome} after {r.iterations} rounds" if r.outcome else ""
        click.echo(f"{name:7s} expected={r.expected_utility:.6f} normalized={norm}{extra}")
    target = out_dir or sc.run.output_dir
    if target:
        for p in report.write(target):
            click.echo(f"wrote {p}")
    if report.auction_converged is False:
        sys.exit(EXIT_NO_CONVERGENCE)


@main.command()
@click.argument("scenario")
@click.option("--commodity", "m", type=int, required=True, help="Commodity (user) index, 1-based.")
@click.option("--state", "s", type=int, required=True, help="State index, 1-based.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV file; stdout when omitted.")
@click.option("--variant", default=None)
def trace(scenario, m, s, out, variant):
    """Price and excess demand of one state-contingent commodity per round."""
    sc = _load(scenario, variant)
    e = sc.build()
    if not (1 <= m <= e.M and 1 <= s <= e.S):
        click.echo(f"error: commodity must be in 1..{e.M} and state in 1..{e.S}", err=True)
        sys.exit(EXIT_INVALID)
    result, tr = run_auction(e, sc.auction.config())
    its, p, z = commodity_series(tr, m - 1, s - 1, e.M)
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", f"p[{m},{s}]", f"z[{m},{s}]"])
        for row in zip(its.tolist(), p.tolist(), z.tolist()):
            w.writerow([row[0], repr(row[1]), repr(row[2])])
    finally:
        if out:
            fh.close()
    if not result.converged:
        click.echo(f"auction did not converge ({tr.outcome})", err=True)
        sys.exit(EXIT_NO_CONVERGENCE)


@main.command()
@click.argument("scenario")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="JSON file; stdout when omitted.")
@click.option("--variant", default=None)
def edgeworth(scenario, out, variant):
    """Edgeworth-box plot data for a 2x2 one-state divisible economy."""
    sc = _load(scenario, variant)
    e = sc.build()
    if (e.N, e.M, e.S) != (2, 2, 1) or not e.divisible:
        click.echo("error: Edgeworth box needs N=2, M=2, S=1 divisible goods", err=True)
        sys.exit(EXIT_INVALID)
    result, tr = run_auction(e, sc.auction.config())
    prices = {"initial": tr.prices[0], "final": result.prices}
    if out:
        export_edgeworth(e, prices, out, result.allocation.values)
        click.echo(f"wrote {out}")
    else:
        click.echo(json.dumps(edgeworth_data(e, prices, result.allocation.values), indent=2))
    if not result.converged:
        sys.exit(EXIT_NO_CONVERGENCE)


if __name__ == "__main__":
    main()
