"""``rdtkit`` command-line entry point.

Every command reads a JSON run config (``--config``), lets ``--seed``,
``--trials``, ``--horizon`` and ``--figure`` override it, and writes artifacts
named ``{command}-{confighash}-*`` into ``--out`` together with a manifest.
The manifest holds the fully resolved config, so passing it back as
``--config`` repeats the run.

Exit codes: 0 ok, 2 config error, 3 insufficient data (no flip in the coarse
grid, or no failure to extrapolate MTTUE from), 4 internal error.
"""

from __future__ import annotations

import argparse
import sys
import time
import traceback
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from . import io
from .config import COMMANDS, ConfigError, Diagnostic, RunConfig, validate, validate_file
from .devsim import DeviceModel
from .errmodel import new_state, run_reference_trial
from .montecarlo import (InsufficientFailuresError, estimate_mttue, label_seed, run_trials, sweep,
                         trial_rng)
from .presets import FIGURES
from .profiler import (NoFlipInGridError, ProfileSummary, bitflip_census_at, coarse_min_scan, profile_device,
                       summarize)
from .svard import TRACE_KINDS, assign_thresholds, generate_trace, simulate_chronus, simulate_para

EXIT_OK, EXIT_CONFIG, EXIT_NO_DATA, EXIT_INTERNAL = 0, 2, 3, 4

DEFAULTS = {
    "profile_iterations": 1000,
    "census_repetitions": 1000,
    "trace_length": 100_000,
}


class Run:
    """Collects the artifacts of one command invocation."""

    def __init__(self, rc: RunConfig, out: Path):
        self.rc = rc
        self.out = out
        self.prefix = f"{rc.command}-{rc.config_hash()}"
        self.files: list[Path] = []

    def path(self, suffix: str) -> Path:
        p = self.out / f"{self.prefix}-{suffix}"
        self.files.append(p)
        return p

    def manifest(self, status: int, started: datetime, wall: float, threads: int, note: str = "") -> Path:
        p = self.out / f"{self.prefix}-manifest.json"
        io.write_json(p, {
            "manifest_version": 1,
            "command": self.rc.command,
            "config": self.rc.resolved,
            "config_hash": self.rc.config_hash(),
            "seed": self.rc.seed,
            "toolkit_version": __version__,
            "exit_status": status,
            "note": note,
            "threads": threads,
            "started_at": started.isoformat(timespec="seconds"),
            "wall_time_seconds": round(wall, 3),
            "artifacts": {f.name: io.sha256_file(f) for f in self.files if f.exists()},
        })
        return p


# -- shared steps -----------------------------------------------------------------

def _profile_summary(run: Run, write: bool = True) -> ProfileSummary:
    prof = run.rc.sections.get("profile", {})
    if prof.get("summary") is not None:
        return ProfileSummary.from_dict(prof["summary"])
    device = DeviceModel(run.rc.device)
    _, reference, matrix = profile_device(device, prof.get("iterations", DEFAULTS["profile_iterations"]))
    summary = summarize(matrix, reference)
    if write:
        io.write_json(run.path("profile-summary.json"), summary.to_dict())
    return summary


def _threshold_maps(run: Run, summary: ProfileSummary):
    sv = run.rc.sections.get("svard", {})
    knobs = {k: sv[k] for k in ("guardband", "tail_fraction", "extra_demotion") if k in sv}
    return {pol: assign_thresholds(summary, pol, **knobs) for pol in ("one-size-fits-all", "svard-two-bin")}


# -- commands -----------------------------------------------------------------------

def cmd_profile(run: Run, threads: int) -> int:
    device = DeviceModel(run.rc.device)
    iterations = run.rc.sections["profile"].get("iterations", DEFAULTS["profile_iterations"])
    _, reference, matrix = profile_device(device, iterations)
    io.write_rdt_matrix(matrix, run.path("rdt.csv"), run.path("flips.json"))
    io.write_json(run.path("summary.json"), summarize(matrix, reference).to_dict())
    return EXIT_OK


def cmd_census(run: Run, threads: int) -> int:
    device = DeviceModel(run.rc.device)
    sec = run.rc.sections["census"]
    hc = sec.get("hammer_count")
    if hc is None:
        hc = coarse_min_scan(device, episode=device.begin_episode())
    census = bitflip_census_at(device, hc, sec.get("repetitions", DEFAULTS["census_repetitions"]))
    io.write_csv(run.path("census.csv"), ("repetition", "flips", "cumulative_unique", "new_unique"),
                 zip(range(len(census.flips_per_repetition)), census.flips_per_repetition.tolist(),
                     census.cumulative_unique.tolist(), census.new_unique.tolist()))
    io.write_json(run.path("summary.json"), {
        "hammer_count": int(hc),
        "repetitions": len(census.flips_per_repetition),
        "unique_locations": int(census.cumulative_unique[-1]) if len(census.cumulative_unique) else 0,
        "first_coverage": census.first_coverage,
    })
    return EXIT_OK


def cmd_model(run: Run, threads: int) -> int:
    """Step-by-step reference trials with the uncorrectable-event log."""
    rc = run.rc
    params = rc.model
    trials, horizon = rc.trials, rc.horizon
    events, outcomes = [], []
    for t in range(trials):
        state = new_state(params)
        first = run_reference_trial(params, trial_rng(rc.seed, t), horizon, state)
        outcomes.append((t, first, len(state.locations)))
        if state.event is not None:
            events.append((t, first, state.event.codeword))
    io.write_events(run.path("events.csv"), events)
    io.write_csv(run.path("trials.csv"), ("trial", "first_failure_epoch", "final_locations"), outcomes)
    return EXIT_OK


def cmd_mttue(run: Run, threads: int) -> int:
    rc = run.rc
    params = rc.model
    trials, horizon = rc.trials, rc.horizon
    results, curve = run_trials(params, trials, horizon, rc.seed, threads)
    io.write_failure_curve(curve, run.path("curve.csv"))
    io.write_csv(run.path("trials.csv"), ("trial", "first_failure_epoch"),
                 ((r.trial, r.first_failure_epoch) for r in results))
    try:
        est = estimate_mttue(results, horizon, params.scrub_interval, rc.clock)
    except InsufficientFailuresError:
        est = None
    io.write_json(run.path("mttue.json"), {"label": rc.model_label, "params": params.to_dict(),
                                          "horizon": horizon, "estimate": io.estimate_to_json(est)})
    return EXIT_OK if est is not None else EXIT_NO_DATA


def _write_sweep(run: Run, rows, name: str) -> None:
    io.write_csv(run.path(f"{name}.csv"), ("epoch", "p_fail", "label"),
                 (rec for row in rows for rec in io.curve_rows(row.curve, row.label)))
    io.write_json(run.path(f"{name}-mttue.json"), [
        {"label": row.label, "params": row.params.to_dict(), "horizon": row.curve.horizon,
         "estimate": io.estimate_to_json(row.estimate)} for row in rows])


def cmd_sweep(run: Run, threads: int) -> int:
    rc = run.rc
    horizon = {label: rc.horizons.get(label, rc.horizon) for label, _ in rc.sweep}
    rows = sweep([(label, p, rc.clock) for label, p in rc.sweep], rc.trials,
                 horizon, rc.seed, threads)
    _write_sweep(run, rows, "sweep")
    return EXIT_OK


def cmd_report(run: Run, threads: int) -> int:
    rc = run.rc
    recipe = FIGURES[rc.figure]
    horizon = recipe.horizon_map(rc.horizon)
    horizon.update({k: v for k, v in rc.horizons.items() if k in horizon})
    configs = [(label, params, rc.clock) for label, params, _ in recipe.configs()]
    rows = sweep(configs, rc.trials, horizon, rc.seed, threads)
    _write_sweep(run, rows, rc.figure)
    return EXIT_OK


def cmd_svard(run: Run, threads: int) -> int:
    summary = _profile_summary(run)
    policy = run.rc.sections["svard"].get("policy", "svard-two-bin")
    tmap = _threshold_maps(run, summary)[policy]
    io.write_threshold_map(tmap, run.path("thresholds.csv"))
    io.write_json(run.path("bins.json"), {
        "policy": policy, "guarded": tmap.guarded, "relaxed": tmap.relaxed,
        "guarded_fraction": tmap.guarded_fraction(), "rdt_min": summary.rdt_min, "rdt_p10": summary.rdt_p10,
    })
    return EXIT_OK


def cmd_mitigate(run: Run, threads: int) -> int:
    rc = run.rc
    sec = rc.sections["mitigate"]
    summary = _profile_summary(run)
    maps = _threshold_maps(run, summary)
    rows = maps["svard-two-bin"].rows
    length = sec.get("length", DEFAULTS["trace_length"])
    records = []
    for kind in sec.get("kinds", list(TRACE_KINDS)):
        for s in range(sec.get("trace_seeds", 1)):
            seed = label_seed(rc.seed, f"{kind}/{s}")
            trace = generate_trace(kind, rows, length, seed)
            for policy, tmap in maps.items():
                for stats in (simulate_para(trace, tmap, sec.get("epsilon", 1e-15), seed),
                              simulate_chronus(trace, tmap)):
                    records.append({"kind": kind, "trace_seed": seed, "policy": policy, **stats.to_dict()})
    io.write_json(run.path("stats.json"), records)
    io.write_csv(run.path("stats.csv"),
                 ("kind", "trace_seed", "policy", "mechanism", "total_activations", "preventive_refreshes",
                  "refresh_rate_per_kilo_act", "max_counter_seen"),
                 ((r["kind"], r["trace_seed"], r["policy"], r["mechanism"], r["total_activations"],
                   r["preventive_refreshes"], repr(r["refresh_rate_per_kilo_act"]), r["max_counter_seen"])
                  for r in records))
    return EXIT_OK


HANDLERS = {
    "profile": cmd_profile, "census": cmd_census, "model": cmd_model, "mttue": cmd_mttue,
    "sweep": cmd_sweep, "report": cmd_report, "svard": cmd_svard, "mitigate": cmd_mitigate,
}


def run(rc: RunConfig, out, threads: int = 1) -> tuple[int, Path]:
    """Execute a validated config; returns (exit status, manifest path)."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    job = Run(rc, out)
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    note = ""
    try:
        status = HANDLERS[rc.command](job, threads)
        if status == EXIT_NO_DATA:
            note = "insufficient-failures"
    except NoFlipInGridError as exc:
        status, note = EXIT_NO_DATA, f"no-flip-in-grid: {exc}"
    except InsufficientFailuresError as exc:
        status, note = EXIT_NO_DATA, f"insufficient-failures: {exc}"
    manifest = job.manifest(status, started, time.perf_counter() - t0, threads, note)
    return status, manifest


# -- argument handling -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rdtkit", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"rdtkit {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="run config JSON (or a manifest from an earlier run)")
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--horizon", type=int, help="epochs per trial")
        p.add_argument("--out", type=Path, default=Path("results"))
        p.add_argument("--threads", type=int, default=1, help="worker processes; never changes results")
        p.add_argument("--model", help="model preset name or params JSON (overrides config)")
        p.add_argument("--device", help="device spec JSON (overrides config)")
        if name == "report":
            p.add_argument("--figure", choices=sorted(FIGURES))
    v = sub.add_parser("validate", help="check a config and print every diagnostic")
    v.add_argument("--config", type=Path, required=True)
    v.add_argument("--command", dest="for_command", choices=COMMANDS)
    return ap


def _load(args, command: str | None):
    import json

    data, base = {}, Path(".")
    if args.config is not None:
        try:
            data = json.loads(args.config.read_text())
        except FileNotFoundError:
            raise ConfigError([_diag("--config", f"file {str(args.config)!r} does not exist")]) from None
        except json.JSONDecodeError as exc:
            raise ConfigError([_diag("--config", f"invalid JSON ({exc.msg} at line {exc.lineno})")]) from None
        base = args.config.parent
    overrides = {k: getattr(args, k, None) for k in ("seed", "trials", "horizon", "figure", "model")}
    if getattr(args, "device", None) is not None:
        overrides["device"] = str(Path(args.device).resolve())
    if overrides["model"] is not None and Path(overrides["model"]).suffix == ".json":
        overrides["model"] = str(Path(overrides["model"]).resolve())
    rc, diags = validate(data, command, base, overrides)
    if diags:
        raise ConfigError(diags)
    return rc


def _diag(path, message):
    return Diagnostic(path, message)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            kind, diags = validate_file(args.config, args.for_command)
            for d in diags:
                print(d)
            if diags:
                print(f"{len(diags)} problem(s) in {args.config}")
                return EXIT_CONFIG
            print(f"{args.config}: ok ({kind})")
            return EXIT_OK
        if args.threads < 1:
            raise ConfigError([_diag("--threads", "must be >= 1")])
        rc = _load(args, args.command)
        status, manifest = run(rc, args.out, args.threads)
        print(manifest)
        return status
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"config error: {d}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception:  # noqa: BLE001 - last-resort mapping to the internal-error status
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
