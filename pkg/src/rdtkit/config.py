"""Run configuration: loading, resolution of referenced files, validation.

A run config is a JSON object. ``device`` and ``model`` may be given inline,
as a path to a JSON file (relative to the config), or for ``model`` as a
preset name. The run-level ``seed`` is authoritative: it replaces any seed in
a referenced device spec. Validation collects every problem before reporting, each tagged
with the dotted path of the offending field.

Example::

    {"command": "mttue", "seed": 7, "trials": 2000, "horizon": 500000,
     "model": "m8-worst"}
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path

from .devsim import (DISTRIBUTION_PRESETS, T_AGGON_FACTORS, TEMPERATURE_FACTORS, ChipGeometry, ConditionPreset,
                     DeviceSpec, RowDistribution)
from .errmodel import REMOVAL_MODES, ModelParams
from .montecarlo import EpochClock
from .presets import FIGURES, MODEL_PRESETS
from .svard import POLICIES, TRACE_KINDS

COMMANDS = ("profile", "census", "model", "mttue", "sweep", "svard", "mitigate", "report")
STOCHASTIC = frozenset(COMMANDS)  # every command draws random numbers somewhere
NEEDS_DEVICE = frozenset({"profile", "census", "svard", "mitigate"})
NEEDS_MODEL = frozenset({"model", "mttue"})

TOP_LEVEL = {
    "command", "seed", "trials", "horizon", "device", "model", "clock", "profile",
    "census", "svard", "mitigate", "sweep", "figure", "horizons", "threads",
}
SECTION_KEYS = {
    "profile": {"iterations", "summary"},
    "census": {"hammer_count", "repetitions"},
    "svard": {"policy", "guardband", "tail_fraction", "extra_demotion"},
    "mitigate": {"kinds", "length", "epsilon", "trace_seeds"},
}
# trials/horizon filled in when absent, so the manifest records what actually ran
RUN_DEFAULTS = {
    "model": {"trials": 20, "horizon": 20_000},
    "mttue": {"trials": 10_000, "horizon": 1_000_000},
    "sweep": {"trials": 10_000, "horizon": 1_000_000},
    "report": {"trials": 10_000},
}
# sections that shape each command's output (and so enter its config hash)
SECTIONS_USED = {
    "profile": ("profile",), "census": ("census",), "svard": ("profile", "svard"),
    "mitigate": ("profile", "svard", "mitigate"),
}


@dataclass(frozen=True)
class Diagnostic:
    path: str
    message: str

    def __str__(self):
        return f"{self.path}: {self.message}"


class ConfigError(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _read(path: Path, where: str, diags: list):
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        diags.append(Diagnostic(where, f"referenced file {str(path)!r} does not exist"))
    except json.JSONDecodeError as exc:
        diags.append(Diagnostic(where, f"{path} is not valid JSON ({exc.msg} at line {exc.lineno})"))
    return None


# -- section checkers -----------------------------------------------------------

def _check_fields(data, cls, where: str, diags: list, positive_ints=(), positive_nums=(), allow_extra=()):
    if not isinstance(data, dict):
        diags.append(Diagnostic(where, "must be an object"))
        return False
    known = {f.name for f in fields(cls)} | set(allow_extra)
    for k in sorted(set(data) - known):
        diags.append(Diagnostic(f"{where}.{k}", "unknown field"))
    ok = True
    for k in positive_ints:
        if k in data and not (_is_int(data[k]) and data[k] > 0):
            diags.append(Diagnostic(f"{where}.{k}", f"must be a positive integer, got {data[k]!r}"))
            ok = False
    for k in positive_nums:
        if k in data and not (_is_num(data[k]) and data[k] > 0):
            diags.append(Diagnostic(f"{where}.{k}", f"must be a positive number, got {data[k]!r}"))
            ok = False
    return ok


def check_model(data, where: str, diags: list) -> ModelParams | None:
    ints = ("delta_l", "n", "growth_period", "scrub_interval", "flip_space_bits",
            "codeword_data_bits", "codeword_total_bits")
    if not _check_fields(data, ModelParams, where, diags, positive_ints=ints):
        return None
    ok = True
    for k in ("delta_l", "n"):
        if k not in data:
            diags.append(Diagnostic(f"{where}.{k}", "required"))
            ok = False
    if "removal_enabled" in data and not isinstance(data["removal_enabled"], bool):
        diags.append(Diagnostic(f"{where}.removal_enabled", "must be true or false"))
        ok = False
    if "removal_mode" in data and data["removal_mode"] not in REMOVAL_MODES:
        diags.append(Diagnostic(f"{where}.removal_mode", f"must be one of {list(REMOVAL_MODES)}"))
        ok = False
    if not ok:
        return None
    try:
        return ModelParams.from_dict(data)
    except ValueError as exc:
        diags.append(Diagnostic(where, str(exc)))
        return None


def check_device(data, where: str, diags: list, fallback_seed=None) -> DeviceSpec | None:
    if not isinstance(data, dict):
        diags.append(Diagnostic(where, "must be an object"))
        return None
    before = len(diags)
    for k in sorted(set(data) - {"geometry", "distribution", "preset", "seed"}):
        diags.append(Diagnostic(f"{where}.{k}", "unknown field"))
    geo = data.get("geometry", {})
    if _check_fields(geo, ChipGeometry, f"{where}.geometry", diags,
                     positive_ints=("banks", "rows_per_bank", "bits_per_row")):
        if "tested_row_fraction" in geo:
            try:
                frac = Fraction(geo["tested_row_fraction"])
                if not 0 < frac <= 1:
                    raise ValueError
            except (ValueError, TypeError, ZeroDivisionError):
                diags.append(Diagnostic(f"{where}.geometry.tested_row_fraction",
                                        f"must be a fraction in (0, 1], got {geo['tested_row_fraction']!r}"))
    dist = data.get("distribution", {})
    if isinstance(dist, str):
        if dist not in DISTRIBUTION_PRESETS:
            diags.append(Diagnostic(f"{where}.distribution", f"unknown preset {dist!r}; known: {sorted(DISTRIBUTION_PRESETS)}"))
    elif _check_fields(dist, RowDistribution, f"{where}.distribution", diags, allow_extra=("preset",)):
        if "preset" in dist and dist["preset"] not in DISTRIBUTION_PRESETS:
            diags.append(Diagnostic(f"{where}.distribution.preset", f"unknown preset {dist['preset']!r}"))
        for k, v in dist.items():
            if k != "preset" and not _is_num(v):
                diags.append(Diagnostic(f"{where}.distribution.{k}", f"must be a number, got {v!r}"))
        j = dist.get("jitter_half_width", 0)
        if _is_num(j) and not 0 <= j < 1:
            diags.append(Diagnostic(f"{where}.distribution.jitter_half_width", "must be in [0, 1)"))
    cond = data.get("preset", {})
    if _check_fields(cond, ConditionPreset, f"{where}.preset", diags, positive_nums=("rdt_scale",)):
        if "temperature" in cond and cond["temperature"] not in TEMPERATURE_FACTORS:
            diags.append(Diagnostic(f"{where}.preset.temperature", f"must be one of {sorted(TEMPERATURE_FACTORS)}"))
        if "t_aggon" in cond and cond["t_aggon"] not in T_AGGON_FACTORS:
            diags.append(Diagnostic(f"{where}.preset.t_aggon", f"must be one of {sorted(T_AGGON_FACTORS)}"))
    seed = data.get("seed", fallback_seed)
    if seed is None:
        diags.append(Diagnostic(f"{where}.seed", "required (or give a run-level seed)"))
    elif not (_is_int(seed) and seed >= 0):
        diags.append(Diagnostic(f"{where}.seed", f"must be a non-negative integer, got {seed!r}"))
    if len(diags) > before:
        return None
    try:
        return DeviceSpec.from_dict({**data, "seed": seed})
    except (ValueError, TypeError) as exc:
        diags.append(Diagnostic(where, str(exc)))
        return None


def check_clock(data, where: str, diags: list) -> EpochClock | None:
    if not _check_fields(data, EpochClock, where, diags,
                         positive_ints=("rows_hammered_per_epoch", "hammer_count"),
                         positive_nums=("seconds_per_hammer",)):
        return None
    return EpochClock(**data)


# -- run config ---------------------------------------------------------------

@dataclass
class RunConfig:
    """Fully resolved run: every referenced file inlined, every default filled."""

    command: str
    seed: int
    trials: int | None = None
    horizon: int | None = None
    device: DeviceSpec | None = None
    model: ModelParams | None = None
    model_label: str | None = None
    clock: EpochClock = field(default_factory=EpochClock)
    sections: dict = field(default_factory=dict)  # profile/census/svard/mitigate knobs
    sweep: list = field(default_factory=list)  # (label, ModelParams)
    figure: str | None = None
    horizons: dict = field(default_factory=dict)
    resolved: dict = field(default_factory=dict)  # JSON form, hashed and stored in the manifest

    def config_hash(self) -> str:
        blob = json.dumps(self.resolved, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _resolve_model(value, where: str, base: Path, diags: list):
    """Returns (label, params, json form)."""
    if isinstance(value, str):
        if value in MODEL_PRESETS:
            params = MODEL_PRESETS[value]
            return value, params, params.to_dict()
        data = _read(base / value, where, diags)
        if data is None:
            return None, None, None
        label = Path(value).stem
        value = data
    else:
        label = None
    params = check_model(value, where, diags)
    return label, params, (params.to_dict() if params else None)


def validate(data, command: str | None = None, base: Path = Path("."), overrides: dict | None = None):
    """Check a raw config object. Returns ``(RunConfig or None, diagnostics)``."""
    diags: list[Diagnostic] = []
    if not isinstance(data, dict):
        return None, [Diagnostic("$", "config must be a JSON object")]
    data = copy.deepcopy(data)
    if "config" in data and "manifest_version" in data:
        data = data["config"]  # a manifest re-runs its recorded config
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    for k in sorted(set(data) - TOP_LEVEL):
        diags.append(Diagnostic(k, "unknown field"))

    cmd = command or data.get("command")
    if cmd not in COMMANDS:
        diags.append(Diagnostic("command", f"must be one of {list(COMMANDS)}, got {cmd!r}"))
        return None, diags
    if command and data.get("command") not in (None, command):
        diags.append(Diagnostic("command", f"config is for {data['command']!r}, not {command!r}"))

    seed = data.get("seed")
    if seed is None:
        if cmd in STOCHASTIC:
            diags.append(Diagnostic("seed", f"required for stochastic command {cmd!r}"))
    elif not (_is_int(seed) and seed >= 0):
        diags.append(Diagnostic("seed", f"must be a non-negative integer, got {seed!r}"))
        seed = None
    for k in ("trials", "horizon", "threads"):
        if k in data and not (_is_int(data[k]) and data[k] > 0):
            diags.append(Diagnostic(k, f"must be a positive integer, got {data[k]!r}"))

    resolved: dict = {"command": cmd, "seed": seed}
    for k, v in RUN_DEFAULTS.get(cmd, {}).items():
        data.setdefault(k, v)
    for k in ("trials", "horizon"):
        if k in data and cmd in RUN_DEFAULTS:
            resolved[k] = data[k]
    rc = RunConfig(cmd, seed if seed is not None else -1, data.get("trials"), data.get("horizon"))

    sections = {}
    for name in SECTION_KEYS:
        sec = data.get(name, {})
        if not isinstance(sec, dict):
            diags.append(Diagnostic(name, "must be an object"))
            sec = {}
        for k in sorted(set(sec) - SECTION_KEYS[name]):
            diags.append(Diagnostic(f"{name}.{k}", "unknown field"))
        sections[name] = dict(sec)
        _check_section(name, sections[name], base, diags)
    summary = sections["profile"].get("summary")
    if isinstance(summary, str):
        summary = _read(base / summary, "profile.summary", diags)
    if summary is not None:
        summary = _check_summary(summary, diags)
        sections["profile"]["summary"] = summary
    rc.sections = sections
    for name in SECTIONS_USED.get(cmd, ()):
        if sections[name]:
            resolved[name] = sections[name]

    uses_summary = cmd in ("svard", "mitigate") and summary is not None
    if cmd in NEEDS_DEVICE and not uses_summary:
        dev = data.get("device")
        if dev is None:
            diags.append(Diagnostic("device", f"required for command {cmd!r}"
                                    + (" (or give profile.summary)" if cmd in ("svard", "mitigate") else "")))
        else:
            if isinstance(dev, str):
                dev = _read(base / dev, "device", diags)
            if dev is not None:
                if isinstance(dev, dict) and seed is not None:
                    dev = {**dev, "seed": seed}  # the run seed drives the device
                rc.device = check_device(dev, "device", diags, fallback_seed=0)
                if rc.device:
                    resolved["device"] = rc.device.to_dict()

    if cmd in NEEDS_MODEL:
        if "model" not in data:
            diags.append(Diagnostic("model", f"required for command {cmd!r}"))
        else:
            label, rc.model, form = _resolve_model(data["model"], "model", base, diags)
            rc.model_label = label
            if form:
                resolved["model"] = form

    if "clock" in data:
        clock = check_clock(data["clock"], "clock", diags)
        if clock:
            rc.clock = clock
    resolved["clock"] = rc.clock.__dict__.copy()

    if cmd == "sweep":
        entries = data.get("sweep")
        if not isinstance(entries, list) or not entries:
            diags.append(Diagnostic("sweep", "must be a non-empty list of {label, model}"))
            entries = []
        seen = set()
        forms = []
        for i, ent in enumerate(entries):
            where = f"sweep[{i}]"
            if not isinstance(ent, dict) or "model" not in ent:
                diags.append(Diagnostic(where, "needs a model (preset name, path or object)"))
                continue
            _, params, form = _resolve_model(ent["model"], f"{where}.model", base, diags)
            label = ent.get("label") or (ent["model"] if isinstance(ent["model"], str) else None)
            if not isinstance(label, str) or not label:
                diags.append(Diagnostic(f"{where}.label", "required for inline models"))
                continue
            if label in seen:
                diags.append(Diagnostic(f"{where}.label", f"duplicate label {label!r}"))
            seen.add(label)
            if params:
                rc.sweep.append((label, params))
                forms.append({"label": label, "model": form})
        resolved["sweep"] = forms

    if cmd == "report":
        fig = data.get("figure")
        if fig not in FIGURES:
            diags.append(Diagnostic("figure", f"must be one of {sorted(FIGURES)}, got {fig!r}"))
        else:
            rc.figure = fig
            resolved["figure"] = fig

    if cmd in ("sweep", "report"):
        hz = data.get("horizons", {})
        if not isinstance(hz, dict) or any(not (_is_int(v) and v > 0) for v in hz.values()):
            diags.append(Diagnostic("horizons", "must map labels to positive integers"))
        else:
            rc.horizons = dict(hz)
            if hz:
                resolved["horizons"] = rc.horizons

    rc.resolved = resolved
    return (None if diags else rc), diags


def _check_section(cmd: str, sec: dict, base: Path, diags: list) -> None:
    def pos_int(k):
        if k in sec and not (_is_int(sec[k]) and sec[k] > 0):
            diags.append(Diagnostic(f"{cmd}.{k}", f"must be a positive integer, got {sec[k]!r}"))

    def unit(k, closed_low=False):
        v = sec.get(k)
        if k in sec and not (_is_num(v) and (0 <= v if closed_low else 0 < v) and v < 1):
            diags.append(Diagnostic(f"{cmd}.{k}", f"must be a number in {'[' if closed_low else '('}0, 1), got {v!r}"))

    if cmd == "profile":
        pos_int("iterations")
        if "summary" in sec and not isinstance(sec["summary"], (str, dict)):
            diags.append(Diagnostic("profile.summary", "must be a path or an object"))
    elif cmd == "census":
        pos_int("repetitions")
        pos_int("hammer_count")
    elif cmd == "svard":
        if "policy" in sec and sec["policy"] not in POLICIES:
            diags.append(Diagnostic("svard.policy", f"must be one of {list(POLICIES)}"))
        unit("guardband")
        unit("tail_fraction")
        unit("extra_demotion", closed_low=True)
    elif cmd == "mitigate":
        kinds = sec.get("kinds", list(TRACE_KINDS))
        if not isinstance(kinds, list) or not kinds or any(k not in TRACE_KINDS for k in kinds):
            diags.append(Diagnostic("mitigate.kinds", f"must be a non-empty list drawn from {list(TRACE_KINDS)}"))
        pos_int("length")
        pos_int("trace_seeds")
        unit("epsilon")


def _check_summary(data, diags: list):
    from .profiler import ProfileSummary
    try:
        return ProfileSummary.from_dict(data).to_dict()
    except (ValueError, TypeError, AttributeError, KeyError) as exc:
        diags.append(Diagnostic("profile.summary", f"not a profile summary: {exc}"))
        return None


def validate_file(path, command: str | None = None) -> tuple[str, list[Diagnostic]]:
    """Validate a run config, manifest, device spec or model params file.

    The kind is inferred from the keys; returns ``(kind, diagnostics)``.
    """
    path = Path(path)
    diags: list[Diagnostic] = []
    data = _read(path, "--config", diags)
    if data is None:
        return "unreadable", diags
    if command is None and isinstance(data, dict) and "command" not in data and "manifest_version" not in data:
        if {"delta_l", "n"} & set(data):
            check_model(data, "$", diags)
            return "model", diags
        if {"geometry", "distribution", "preset"} & set(data):
            check_device(data, "$", diags)
            return "device", diags
    _, diags = validate(data, command, path.parent)
    return "run", diags


def load(path, command: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Load and validate ``path``; raises :class:`ConfigError` with every diagnostic."""
    path = Path(path)
    diags: list[Diagnostic] = []
    data = _read(path, "--config", diags)
    if data is None:
        raise ConfigError(diags)
    rc, diags = validate(data, command, path.parent, overrides)
    if diags:
        raise ConfigError(diags)
    return rc
