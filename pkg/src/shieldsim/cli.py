"""
shieldsim - command-line entry point
"""
from __future__ import annotations

import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import click
import numpy as np

# ───────────────────────── internal imports ──────────────────────────
from .core import attacker, calibration, dse, evaluate, traces
from .core.config import DSE_MODES, ScenarioConfig, dump_resolved, parse_config, worker_count
from .core.constants import BATCH_MAX, MANIFEST_NAME, METRICS, MODES, STREAM_MESSAGES, STREAM_SIMULATE
from .core.engine import Engine, make_rng, simulate_traces, trace_metadata
from .core.errors import ConfigError, ShieldsimError
from .core.manifest import RunManifest, load_manifest, save_manifest
from .core.monitor import Trace
from .core.victim import bits_to_int, modexp, random_message
from .ui import progress as ui_progress

log = logging.getLogger(__name__)

RunFn = Callable[..., List[Path]]


# ---------------------------------------------------------------------#
# shared helpers
# ---------------------------------------------------------------------#
def _variant(cfg: ScenarioConfig, mode: str):
    sc = cfg.scenario.with_mode(mode)
    return calibration.ensure_calibrated(sc) if mode == "shield" else sc


def _finish(command: str, cfg: ScenarioConfig, out_dir: Path, options: Dict[str, Any], outputs: List[Path]) -> None:
    manifest = RunManifest.for_run(command, cfg, options)
    manifest.outputs = [p.relative_to(out_dir).as_posix() for p in outputs]
    path = save_manifest(manifest, out_dir, MANIFEST_NAME)
    click.echo(f"✓ wrote {len(outputs)} files + {path}")


def _simulated_traces(cfg: ScenarioConfig, record_events: int = 0):
    sc = cfg.scenario
    n = sc.experiment.traces
    return simulate_traces(sc, (sc.experiment.seed, STREAM_SIMULATE), n, Engine(sc), record_events=record_events)


# ---------------------------------------------------------------------#
# command bodies (shared by the click commands and `replay`)
# ---------------------------------------------------------------------#
def run_simulate(cfg: ScenarioConfig, out: str) -> List[Path]:
    sc = cfg.scenario
    out_dir = Path(out)
    recording = BATCH_MAX if sc.mode == "shield" else 0
    samples, batches = _simulated_traces(cfg, recording)
    base = trace_metadata(sc, cfg.config_hash)
    outputs: List[Path] = []
    messages = []
    for i, row in enumerate(ui_progress.progress(samples, desc="writing traces", unit="trace")):
        message = random_message(sc.key.modulus, make_rng(sc.experiment.seed, STREAM_MESSAGES, i))
        result = modexp(message, sc.key.bits, sc.key.modulus)
        messages.append((i, format(message, "x"), format(result, "x")))
        meta = {**base, "trace": str(i)}
        outputs.append(traces.write_trace_csv(Trace(row, sc.monitor.sample_period, meta), out_dir / traces.trace_filename(i)))
    outputs.append(traces.write_table(out_dir / "messages.csv", ("trace_index", "message_hex", "result_hex"), messages))

    if recording:
        events = [ev for b in batches for ev in b.events if ev.trace < len(samples)]
        for i in range(len(samples)):
            outputs.append(traces.write_events_csv(
                (ev for ev in events if ev.trace == i), out_dir / traces.event_filename(i),
            ))
    return outputs


def run_attack(cfg: ScenarioConfig, out: str, traces_dir: Optional[str] = None) -> List[Path]:
    sc = cfg.scenario
    out_dir = Path(out)
    if traces_dir:
        loaded = traces.load_trace_dir(traces_dir)
        data = np.stack([t.samples for t in loaded])
        slots = attacker.scenario_slots(sc, sample_period=loaded[0].sample_period)
    else:
        data, _ = _simulated_traces(cfg)
        slots = attacker.scenario_slots(sc)

    result = attacker.attack(data, slots, sc.key.bits, sc.error_tolerance)
    guess = result.guess
    summary = traces.write_table(
        out_dir / "attack.csv",
        ("traces_used", "bit_errors", "success", "threshold", "degenerate", "guess_hex"),
        [(result.traces_used, result.bit_errors, result.success, guess.threshold.value,
          guess.threshold.degenerate, format(bits_to_int(guess.bits), "x"))],
    )
    bits = traces.write_table(
        out_dir / "attack_bits.csv",
        ("bit_index", "true_bit", "guessed_bit", "margin"),
        [(i, t, g, m) for i, (t, g, m) in enumerate(zip(sc.key.bits, guess.bits, guess.margins))],
    )
    click.echo(f"{'✓' if result.success else '⚠️ '} {result.bit_errors} bit errors using {result.traces_used} traces")
    return [summary, bits]


def run_dse(cfg: ScenarioConfig, out: str, noise_sizing: bool = False, mode: Optional[str] = None) -> List[Path]:
    sc = cfg.scenario
    out_dir = Path(out)
    workers = worker_count()
    report = dse.explore(dse.DseSpace.from_scenario(sc), sc, mode=mode, workers=workers)
    rows = [
        (r.candidate.placement, r.candidate.f_ref, r.candidate.m, r.metrics.avg_bit_errors,
         r.metrics.traces_to_extract, r.metrics.ff_count, r.metrics.avg_power, r.cost, r.rank)
        for r in report.ranking
    ]
    outputs = [traces.write_table(
        out_dir / "dse.csv",
        ("placement", "f_ref_hz", "ro_count", "avg_bit_errors", "traces_to_extract",
         "ff_count", "avg_power_w", "cost", "rank"),
        rows,
    )]
    if report.degenerate:
        click.echo("⚠️  single candidate: normalisation degenerate")
    click.echo(f"✓ winner {report.winner.candidate.name} (cost {report.winner.cost:.4f})")

    if noise_sizing:
        shield_rows, random_rows = dse.noise_sizing(sc, workers=workers)
        outputs.append(traces.write_table(
            out_dir / "noise_sizing_shield.csv", ("sets", "mean_traces", "saturated", "ff", "power_w"),
            [(r.size, r.mean_traces, r.saturated, r.ff, r.power_w) for r in shield_rows],
        ))
        outputs.append(traces.write_table(
            out_dir / "noise_sizing_random.csv", ("ros", "mean_traces", "saturated", "ff", "power_w"),
            [(r.size, r.mean_traces, r.saturated, r.ff, r.power_w) for r in random_rows],
        ))
    return outputs


def run_evaluate(cfg: ScenarioConfig, out: str, metric: str, variants: Sequence[str] = MODES) -> List[Path]:
    out_dir = Path(out)
    exp = cfg.scenario.experiment
    outputs: List[Path] = []

    if metric == "effort":
        rows = []
        for mode in variants:
            rep = attacker.attack_effort(_variant(cfg, mode), workers=worker_count())
            rows.append((mode, rep.mean_traces, rep.saturated, rep.n_max))
        outputs.append(traces.write_table(out_dir / "effort.csv", ("variant", "mean_traces", "saturated", "n_max"), rows))

    elif metric == "tvla":
        rows = []
        for mode in variants:
            rep = evaluate.tvla_traces_to_leak(_variant(cfg, mode))
            rows.append((mode, rep.traces_to_cross, rep.crossed, rep.n_max, rep.threshold))
            outputs.append(traces.write_table(out_dir / f"tvla_curve_{mode}.csv", ("pairs", "t_max"), rep.curve))
        outputs.insert(0, traces.write_table(
            out_dir / "tvla.csv", ("variant", "traces_to_cross", "crossed", "n_max", "threshold"), rows,
        ))

    elif metric == "corr":
        rows = []
        for mode in variants:
            rep, variance = evaluate.correlation_for(_variant(cfg, mode))
            rows.append((mode, rep.mean, rep.undefined, variance))
            outputs.append(traces.write_table(
                out_dir / f"corr_{mode}.csv", ("pair_index", "coefficient"), enumerate(rep.coefficients),
            ))
        outputs.insert(0, traces.write_table(
            out_dir / "corr.csv", ("variant", "mean_coefficient", "undefined_pairs", "slot_mean_variance"), rows,
        ))

    elif metric == "overhead":
        rep = evaluate.overhead_report(_variant(cfg, "shield"))
        rows = [
            (v.name, v.ff, v.power_w, v.defense_ff, v.defense_power_w,
             rep.ratio(v.name, "none", "ff"), rep.ratio(v.name, "none", "power_w"),
             rep.ratio(v.name, "random", "ff"), rep.ratio(v.name, "random", "power_w"))
            for v in rep.variants
        ]
        outputs.append(traces.write_table(
            out_dir / "overhead.csv",
            ("variant", "ff", "power_w", "defense_ff", "defense_power_w",
             "ff_vs_none", "power_vs_none", "ff_vs_random", "power_vs_random"),
            rows,
        ))

    elif metric == "success":
        rows = []
        for mode in variants:
            rep = evaluate.success_rate(_variant(cfg, mode))
            rows.append((mode, rep.order, exp.success_traces, rep.rate))
        outputs.append(traces.write_table(out_dir / "success.csv", ("variant", "order", "traces", "rate"), rows))

    elif metric == "reaction":
        sweep = evaluate.reaction_sweep(cfg.scenario)
        outputs.append(traces.write_table(
            out_dir / "reaction.csv", ("f_ref_hz", "mean_samples", "events", "theta0", "delta"),
            [(r.f_ref, r.reaction.mean, r.reaction.events, r.theta0, r.delta) for r in sweep],
        ))

    elif metric == "dist":
        rows = []
        for mode in variants:
            summary = evaluate.distribution_for(_variant(cfg, mode))
            rows.append((mode, summary.n, summary.mean, summary.std, summary.q1, summary.median, summary.q3))
            outputs.append(traces.write_table(
                out_dir / f"dist_{mode}.csv", ("value", "count"), zip(summary.values, summary.counts),
            ))
        outputs.insert(0, traces.write_table(
            out_dir / "dist.csv", ("variant", "n", "mean", "std", "q1", "median", "q3"), rows,
        ))

    else:
        raise ConfigError("metric", f"unknown metric {metric!r}")
    return outputs


def run_calibrate(cfg: ScenarioConfig, out: str) -> List[Path]:
    result = calibration.calibrate(cfg.scenario)
    calibrated = cfg.with_calibration(result.theta0, result.delta)
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_resolved(calibrated.resolved), encoding="utf-8")
    click.echo(f"theta0={result.theta0!r} delta={result.delta!r}")
    return [path]


RUNNERS: Dict[str, RunFn] = {
    "simulate": run_simulate,
    "attack": run_attack,
    "dse": run_dse,
    "evaluate": run_evaluate,
    "calibrate": run_calibrate,
}


def _run(command: str, cfg: ScenarioConfig, options: Dict[str, Any]) -> None:
    outputs = RUNNERS[command](cfg, **options)
    out = Path(options["out"])
    out_dir = out.parent if command == "calibrate" else out
    _finish(command, cfg, out_dir, options, outputs)


# ---------------------------------------------------------------------#
# top-level Click group
# ---------------------------------------------------------------------#
@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Debug logging")
@click.option("--quiet", "-q", is_flag=True, help="Warnings only, no progress bars")
def shieldsim(verbose: bool, quiet: bool) -> None:
    """shieldsim - simulate and evaluate the SHIELD power side-channel defense."""
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s", force=True)
    ui_progress.set_enabled(not quiet)


config_arg = click.argument("config", type=click.Path(exists=True, dir_okay=False))


# ───────────────────────── simulate ──────────────────────────
@shieldsim.command("simulate")
@config_arg
@click.option("--out", "-o", default="out", show_default=True, type=click.Path(file_okay=False))
def simulate_cmd(config: str, out: str) -> None:
    """Export monitor traces (one CSV per trace) plus a run manifest."""
    _run("simulate", parse_config(config), {"out": out})


# ───────────────────────── attack ────────────────────────────
@shieldsim.command("attack")
@config_arg
@click.option("--traces", "traces_dir", type=click.Path(exists=True, file_okay=False),
              help="Attack exported traces instead of simulating")
@click.option("--out", "-o", default="out", show_default=True, type=click.Path(file_okay=False))
def attack_cmd(config: str, traces_dir: Optional[str], out: str) -> None:
    """Simple power analysis on the scenario's traces."""
    _run("attack", parse_config(config), {"out": out, "traces_dir": traces_dir})


# ─────────────────────────── dse ─────────────────────────────
@shieldsim.command("dse")
@config_arg
@click.option("--out", "-o", default="out", show_default=True, type=click.Path(file_okay=False))
@click.option("--mode", type=click.Choice(list(DSE_MODES)), default=None,
              help="Override dse.mode")
@click.option("--noise-sizing", is_flag=True, help="Also sweep noise-set and random-RO counts")
def dse_cmd(config: str, out: str, mode: Optional[str], noise_sizing: bool) -> None:
    """Design-space exploration of the power monitor."""
    _run("dse", parse_config(config), {"out": out, "mode": mode, "noise_sizing": noise_sizing})


# ───────────────────────── evaluate ──────────────────────────
@shieldsim.command("evaluate")
@config_arg
@click.option("--metric", "-m", required=True, type=click.Choice(list(METRICS)))
@click.option("--variant", "variants", multiple=True, type=click.Choice(list(MODES)),
              help="Defense variants to compare (default: all)")
@click.option("--out", "-o", default="out", show_default=True, type=click.Path(file_okay=False))
def evaluate_cmd(config: str, metric: str, variants: Sequence[str], out: str) -> None:
    """Metric table (CSV) plus plot data for one evaluation metric."""
    _run("evaluate", parse_config(config), {"out": out, "metric": metric, "variants": list(variants or MODES)})


# ───────────────────────── calibrate ─────────────────────────
@shieldsim.command("calibrate")
@config_arg
@click.option("--out", "-o", default="calibrated.yaml", show_default=True, type=click.Path(dir_okay=False))
def calibrate_cmd(config: str, out: str) -> None:
    """Derive theta0/delta offline and write the resolved, calibrated config."""
    _run("calibrate", parse_config(config, require_thresholds=False), {"out": out})


# ───────────────────────── replay ────────────────────────────
@shieldsim.command("replay")
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "-o", type=click.Path(), help="Write to a different location")
def replay_cmd(manifest: str, out: Optional[str]) -> None:
    """Re-run the command recorded in MANIFEST."""
    recorded = load_manifest(manifest)
    if recorded.command not in RUNNERS:
        raise ConfigError("manifest.command", f"unknown command {recorded.command!r}")
    options = dict(recorded.options)
    if out:
        options["out"] = out
    log.info("replaying %s (config %s)", recorded.command, recorded.config_hash[:12])
    _run(recorded.command, recorded.scenario_config(), options)


# ---------------------------------------------------------------------#
def main(argv: Optional[Sequence[str]] = None) -> None:
    """Console entry point: exit 2 on config errors, 3 on any other failure."""
    try:
        shieldsim.main(args=argv, prog_name="shieldsim", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        sys.exit(e.exit_code)
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        sys.exit(1)
    except ConfigError as e:
        click.echo(f"error: {e.kind}: {e}", err=True)
        sys.exit(2)
    except ShieldsimError as e:
        click.echo(f"error: {e.kind}: {e}", err=True)
        sys.exit(3)
    except (ValueError, ArithmeticError) as e:
        click.echo(f"error: runtime: {e}", err=True)
        sys.exit(3)


if __name__ == "__main__":
    main()          # pragma: no cover
