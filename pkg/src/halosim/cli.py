"""Command line front end.

Subcommands: run a scenario, verify its embedded assertions, print the
failure-mode table, and render static plots from a saved trace.
"""
from __future__ import annotations

import json
import sys
from dataclasses import replace
from pathlib import Path

import click

from . import topics
from .fmeca import render_table
from .harness import run_scenario
from .predicates import assert_trace
from .scenario import Scenario, load_scenario
from .scenarios import bundled_names, bundled_path
from .trace import FAULT, HALO_ACTION, PUBLISH, TraceLog


def _resolve(ref: str) -> Path:
    path = Path(ref)
    if path.exists():
        return path
    try:
        return bundled_path(ref)
    except FileNotFoundError:
        raise click.ClickException(
            f"{ref!r} is neither a scenario file nor a bundled name "
            f"(bundled: {', '.join(bundled_names())})"
        ) from None


def _load(ref: str, seed: int | None) -> Scenario:
    scenario = load_scenario(_resolve(ref))
    if seed is not None:
        scenario = replace(scenario, seed=seed)
    return scenario


@click.group()
def main() -> None:
    """Deterministic simulator for a racing stack with a safety layer."""


@main.command()
@click.argument("scenario_ref", metavar="SCENARIO")
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option(
    "--trace",
    "trace_out",
    type=click.Path(dir_okay=False, writable=True),
    default=None,
    help="Write the event trace (JSON lines) here.",
)
@click.option(
    "--metrics",
    "metrics_out",
    type=click.Path(dir_okay=False, writable=True),
    default=None,
    help="Write the metrics report (JSON) here.",
)
@click.option(
    "--disable-halo-node",
    default=None,
    help="Run with one safety node absent (e.g. 'behavioral').",
)
def run(
    scenario_ref: str,
    seed: int | None,
    trace_out: str | None,
    metrics_out: str | None,
    disable_halo_node: str | None,
) -> None:
    """Run SCENARIO (bundled name or file path) and print its metrics."""
    scenario = _load(scenario_ref, seed)
    result = run_scenario(scenario, disable_halo_node=disable_halo_node)
    report = json.dumps(result.metrics.to_dict(), indent=2)
    if trace_out:
        result.trace.write(trace_out)
    if metrics_out:
        Path(metrics_out).write_text(report + "\n")
    click.echo(report)


@main.command()
@click.argument("scenario_ref", metavar="SCENARIO")
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option(
    "--disable-halo-node",
    default=None,
    help="Run with one safety node absent before checking assertions.",
)
def verify(scenario_ref: str, seed: int | None, disable_halo_node: str | None) -> None:
    """Run SCENARIO and check its embedded assertions; exit 0 iff all pass."""
    scenario = _load(scenario_ref, seed)
    if not scenario.predicates:
        raise click.ClickException(f"scenario {scenario.name!r} embeds no assertions")
    result = run_scenario(scenario, disable_halo_node=disable_halo_node)
    outcomes = assert_trace(result.trace, scenario.predicates)
    failed = 0
    for outcome in outcomes:
        status = "PASS" if outcome.ok else "FAIL"
        line = f"[{status}] {outcome.label}"
        if not outcome.ok:
            failed += 1
            line += f": {outcome.detail}"
        click.echo(line)
    click.echo(f"{len(outcomes) - failed}/{len(outcomes)} assertions passed")
    sys.exit(0 if failed == 0 else 1)


@main.command()
def fmeca() -> None:
    """Print the failure-mode criticality table."""
    click.echo(render_table())


@main.command()
@click.argument(
    "trace_file", metavar="TRACE", type=click.Path(exists=True, dir_okay=False)
)
@click.option(
    "--out-dir",
    "-o",
    type=click.Path(file_okay=False),
    default=".",
    help="Directory for the generated PNG files.",
)
def plot(trace_file: str, out_dir: str) -> None:
    """Render static PNG plots from a saved TRACE (no display needed)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    trace = TraceLog.load(trace_file)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    truth_t, truth_speed, truth_sep, truth_lat = [], [], [], []
    odom_t, odom_source, cov_t, cov_val = [], [], [], []
    fault_marks, stop_marks = [], []
    for event in trace.events:
        t_s = event.t_ns / 1e9
        payload = event.payload_summary
        if event.kind == PUBLISH and event.topic == topics.TRUTH:
            truth_t.append(t_s)
            truth_speed.append(payload.get("ego_speed_mps"))
            truth_sep.append(payload.get("separation_m"))
            truth_lat.append(payload.get("lateral_error_m"))
        elif event.kind == PUBLISH and event.topic == topics.BEST_ODOM:
            odom_t.append(t_s)
            odom_source.append(payload.get("source", "?"))
        elif event.kind == PUBLISH and event.topic == topics.EKF_ODOM:
            cov_t.append(t_s)
            cov_val.append(max(payload.get("cov_xx", 0.0), payload.get("cov_yy", 0.0)))
        elif event.kind == FAULT:
            fault_marks.append((t_s, payload.get("fault", "?")))
        elif (
            event.kind == HALO_ACTION
            and payload.get("action") == "graceful_stop"
        ):
            stop_marks.append((t_s, payload.get("reason", "?")))

    def decorate(ax) -> None:
        for t_s, label in fault_marks:
            ax.axvline(t_s, color="tab:red", linestyle="--", alpha=0.6)
            ax.text(t_s, 0.98, label, rotation=90, va="top", fontsize=7,
                    transform=ax.get_xaxis_transform())
        for t_s, reason in stop_marks:
            ax.axvline(t_s, color="tab:purple", linestyle=":", alpha=0.8)
            ax.text(t_s, 0.02, f"stop:{reason}", rotation=90, va="bottom",
                    fontsize=7, transform=ax.get_xaxis_transform())

    def save(fig, name: str) -> None:
        target = out / name
        fig.savefig(target, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(target)

    if truth_t:
        fig, ax = plt.subplots(figsize=(9, 4))
        ax.plot(truth_t, truth_speed, label="ego speed (m/s)")
        ax.set_xlabel("time (s)")
        ax.set_ylabel("speed (m/s)")
        ax.legend(loc="best")
        decorate(ax)
        save(fig, "speed.png")

        if any(v is not None for v in truth_lat):
            fig, ax = plt.subplots(figsize=(9, 4))
            ax.plot(truth_t, truth_lat, label="|lateral error| (m)")
            ax.set_xlabel("time (s)")
            ax.set_ylabel("lateral error (m)")
            ax.legend(loc="best")
            decorate(ax)
            save(fig, "lateral_error.png")

    if any(v is not None for v in truth_sep):
        fig, ax = plt.subplots(figsize=(9, 4))
        ax.plot(truth_t, truth_sep, label="true separation (m)")
        ax.axhline(-30.0, color="tab:orange", linestyle="--", label="door bound")
        ax.set_xlabel("time (s)")
        ax.set_ylabel("separation (m)")
        ax.legend(loc="best")
        decorate(ax)
        save(fig, "separation.png")

    if cov_t:
        fig, ax = plt.subplots(figsize=(9, 4))
        ax.plot(cov_t, cov_val, label="filter position variance (m^2)")
        ax.axhline(0.1225, color="tab:orange", linestyle="--", label="fallback bound")
        ax.set_xlabel("time (s)")
        ax.set_ylabel("variance (m^2)")
        ax.set_yscale("log")
        ax.legend(loc="best")
        decorate(ax)
        save(fig, "covariance.png")

    if odom_t:
        sources = sorted(set(odom_source))
        index = {s: i for i, s in enumerate(sources)}
        fig, ax = plt.subplots(figsize=(9, 3))
        ax.step(odom_t, [index[s] for s in odom_source], where="post")
        ax.set_yticks(range(len(sources)), sources)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("best-odometry source")
        decorate(ax)
        save(fig, "odometry_source.png")

    if not written:
        raise click.ClickException("trace contains nothing plottable")
    for target in written:
        click.echo(str(target))


if __name__ == "__main__":
    main()
