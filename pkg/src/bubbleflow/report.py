"""Scenario configuration, reports and artifact files."""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .params import AnsatzParams, ConfigError

SCHEMA_VERSION = 1

SCENARIOS = ("profiles-check", "selfsim", "modulation", "ansatz-error", "matching",
             "evolve-track", "threshold", "rates")

EXIT_OK = 0
EXIT_CHECK_FAILED = 2
EXIT_CONFIG = 3
EXIT_INTERNAL = 4

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "scenario": None,
    "params": {"gamma": 3.0, "A": 1.0, "t0": 100.0, "r0": 0.1, "R": 1.1, "sigma": 0.55, "B": 0.0,
               "u0_moment": math.sqrt(math.pi)},
    "gammas": [1.5, 2.0, 3.0],
    "oracles": True,
    "out": None,
    "profiles": {"phi1_per_decade": 200, "eigen_r_max": 40.0, "n_matrix": 16000},
    "selfsim": {"nus": [0.6, 0.75, 0.9], "n": 2000, "s_max": 20.0},
    "modulation": {"grid_n": 801, "window_factor": 100.0, "M_values": [10.0, 20.0, 40.0],
                   "convention": "derived", "samples": 10, "seed": 7},
    "norm": {"t_end_factor": 100.0, "t_per_decade": 10, "r_per_decade": 40,
             "holder_dx": [0.1, 0.5], "holder_dt": [0.1, 0.5]},
    "matching": {"factors": [1.0, 10.0, 100.0], "R_values": [1.1, 2.0, 4.0, 8.0], "per_decade": 200},
    "grid": {"n": 1200, "core_fraction": 1e-3},
    "evolution": {"scheme": "trbdf2", "rtol": 1e-5, "atol": 1e-12, "c_safe": 0.5,
                  "blowup_level": 1e8, "decay_floor": 1e-8},
    "threshold": {"lo": 0.5, "hi": 1.5, "width": 0.1, "max_runs": 8, "horizon": 1e7},
    "track": {"t_end_factor": 5.0, "tolerance": 0.15, "n": 1600, "scale": 1.0},
    "rates": {"t_lo": 100.0, "t_hi": 1e6, "samples": 60, "tolerance": 1e-6},
}


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown configuration key {path + k!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{path + k!r} must be an object")
            out[k] = _merge(base[k], v, path + k + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


def _positive(name, value):
    if not (isinstance(value, (int, float)) and not isinstance(value, bool) and value > 0):
        raise ConfigError(f"{name} must be a positive number")


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated settings of one scenario run.

    ``data`` holds the full merged configuration (defaults plus overrides);
    ``params`` is the ansatz parameter set built from ``data["params"]``.
    """

    scenario: str
    data: dict = field(repr=False)
    params: AnsatzParams = field(repr=False)

    @classmethod
    def from_dict(cls, raw: dict, scenario: str | None = None) -> "ScenarioConfig":
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a JSON object")
        version = raw.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
        data = _merge(DEFAULTS, raw)
        if scenario is not None:
            data["scenario"] = scenario
        if data["scenario"] not in SCENARIOS:
            raise ConfigError(f"unknown scenario {data['scenario']!r}")
        try:
            params = AnsatzParams(**data["params"])
            for g in data["gammas"]:
                params.with_(gamma=float(g))
            _validate(data)
        except (TypeError, ValueError, KeyError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid value: {exc}") from None
        return cls(data["scenario"], data, params)

    @classmethod
    def load(cls, path, scenario: str | None = None) -> "ScenarioConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from None
        return cls.from_dict(raw, scenario)

    def section(self, name: str) -> dict:
        return self.data[name]

    def gamma_params(self) -> list[AnsatzParams]:
        return [self.params.with_(gamma=float(g)) for g in self.data["gammas"]]


def _validate(d: dict) -> None:
    for name in ("n", "core_fraction"):
        _positive(f"grid.{name}", d["grid"][name])
    ev = d["evolution"]
    if ev["scheme"] not in ("trbdf2", "trapezoidal"):
        raise ConfigError("evolution.scheme must be 'trbdf2' or 'trapezoidal'")
    for name in ("rtol", "c_safe", "blowup_level", "decay_floor"):
        _positive(f"evolution.{name}", ev[name])
    if not ev["decay_floor"] < ev["blowup_level"]:
        raise ConfigError("evolution.decay_floor must lie below blowup_level")
    th = d["threshold"]
    if not 0 < th["lo"] < th["hi"]:
        raise ConfigError("threshold needs 0 < lo < hi")
    if not (isinstance(th["max_runs"], int) and th["max_runs"] >= 2):
        raise ConfigError("threshold.max_runs must be an integer >= 2")
    _positive("threshold.width", th["width"])
    _positive("threshold.horizon", th["horizon"])
    if d["track"]["t_end_factor"] <= 1:
        raise ConfigError("track.t_end_factor must exceed 1")
    if d["norm"]["t_end_factor"] <= 1 or d["modulation"]["window_factor"] <= 1:
        raise ConfigError("time windows must extend beyond t0")
    for name in ("holder_dx", "holder_dt"):
        if not d["norm"][name] or any(v <= 0 for v in d["norm"][name]):
            raise ConfigError(f"norm.{name} must be a non-empty list of positive displacements")
    nus = d["selfsim"]["nus"]
    if not nus or any(not 0.5 <= v < 1 for v in nus):
        raise ConfigError("selfsim.nus must lie in [1/2, 1)")
    if d["modulation"]["convention"] not in ("derived", "as_written"):
        raise ConfigError("modulation.convention must be 'derived' or 'as_written'")
    r = d["rates"]
    if not (0 < r["t_lo"] and 10 * r["t_lo"] <= r["t_hi"] and r["samples"] >= 20):
        raise ConfigError("rates need t_hi >= 10 t_lo and at least 20 samples")


# --------------------------------------------------------------------------
# reports


@dataclass
class Check:
    name: str
    passed: bool
    value: object = None
    limit: object = None
    note: str = ""


@dataclass
class Report:
    """Outcome of one scenario; serialised as JSON with the config embedded."""

    scenario: str
    config: dict
    build: str
    wall_clock: float = 0.0
    checks: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    error: str | None = None

    def check(self, name: str, passed, value=None, limit=None, note: str = "") -> bool:
        self.checks.append(Check(name, bool(passed), value, limit, note))
        return bool(passed)

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.passed for c in self.checks)

    @property
    def exit_code(self) -> int:
        if self.error is not None:
            return EXIT_INTERNAL
        return EXIT_OK if self.passed else EXIT_CHECK_FAILED

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "build": self.build, "wall_clock_s": self.wall_clock,
                "passed": self.passed, "exit_code": self.exit_code, "error": self.error,
                "checks": [asdict(c) for c in self.checks], "constants": self.constants,
                "artifacts": list(self.artifacts), "config": self.config}


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python numbers, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "tolist") and not isinstance(obj, (str, bytes)):
        return _clean(obj.tolist())
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else repr(obj)
    return str(obj)


def build_id() -> str:
    """Content hash of the package sources, 12 hex digits (git-style short id)."""
    h = hashlib.sha1()
    root = Path(__file__).parent
    for p in sorted(root.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:12]


def format_float(x) -> str:
    return format(float(x), ".17g")


def write_csv(path: Path, header, rows) -> None:
    """RFC-4180 CSV (CRLF line ends, header row) with 17-significant-digit floats."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(v) if isinstance(v, float) or hasattr(v, "dtype") else v
                        for v in row])


def emit_report(report: Report, out_dir, text: bool = True) -> list[Path]:
    """Write report.json (and summary.txt) into ``out_dir``; returns the written paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        path = out / "report.json"
        path.write_text(json.dumps(_clean(report.to_dict()), indent=2, allow_nan=False) + "\n")
        written = [path]
        if text:
            lines = [f"{report.scenario}: {'PASS' if report.passed else 'FAIL'} "
                     f"(exit {report.exit_code}, {report.wall_clock:.1f} s, build {report.build})"]
            for c in report.checks:
                limit = "" if c.limit is None else f" (limit {c.limit})"
                note = f"  {c.note}" if c.note else ""
                lines.append(f"  [{'pass' if c.passed else 'FAIL'}] {c.name}: {c.value}{limit}{note}")
            if report.error:
                lines.append(f"  error: {report.error}")
            tpath = out / "summary.txt"
            tpath.write_text("\n".join(lines) + "\n")
            written.append(tpath)
    except OSError as exc:
        raise OSError(f"cannot write report to {out}: {exc}") from exc
    return written


def emit_index(entries, out_dir) -> Path:
    """index.json listing each scenario's report path and status."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"schema_version": SCHEMA_VERSION, "build": build_id(),
           "passed": all(e["passed"] for e in entries), "reports": list(entries)}
    path = out / "index.json"
    path.write_text(json.dumps(_clean(doc), indent=2, allow_nan=False) + "\n")
    return path


def output_root(cli_out: str | None, config_out: str | None) -> Path:
    """--out, then $BUBBLEFLOW_OUT, then the config's out, then ./bubbleflow-out."""
    for candidate in (cli_out, os.environ.get("BUBBLEFLOW_OUT"), config_out):
        if candidate:
            return Path(candidate)
    return Path("bubbleflow-out")
