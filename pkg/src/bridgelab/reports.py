"""Experiment configuration and machine-readable verdict reports.

Configs are flat key=value files (diff-able, scriptable) merged with
command-line overrides; every run is identified by the sha256 digest of
the canonical key=value listing, so a verdict can always be rerun exactly.
Verdicts serialize to JSON lines and CSV via atomic replace.  Wall-clock
runtime is carried on the report object but deliberately excluded from
serialization: reports must be bitwise identical across reruns and worker
counts, and runtime is the one field that never is.
"""

import hashlib
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Tuple

from .errors import ConfigError


def _cast_float(raw: str) -> float:
    try:
        value = float(raw)
    except ValueError as exc:
        raise ConfigError(f"expected a number, got {raw!r}") from exc
    if value != value or value in (float("inf"), float("-inf")):
        raise ConfigError(f"expected a finite number, got {raw!r}")
    return value


def _cast_int(raw: str) -> int:
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"expected an integer, got {raw!r}") from exc


def _cast_float_list(raw: str) -> Tuple[float, ...]:
    parts = [p for p in raw.split(",") if p.strip()]
    if not parts:
        raise ConfigError(f"expected a comma-separated list, got {raw!r}")
    return tuple(_cast_float(p.strip()) for p in parts)


_CASTERS = {
    "float": _cast_float,
    "int": _cast_int,
    "str": lambda raw: raw,
    "float_list": _cast_float_list,
}


@dataclass(frozen=True)
class FieldSpec:
    """One config key: its type, default, and admissibility predicate."""

    kind: str
    default: object = None
    check: Optional[Callable] = None
    help: str = ""

    def cast(self, key: str, raw: str):
        try:
            value = _CASTERS[self.kind](raw)
        except ConfigError as exc:
            raise ConfigError(f"config key '{key}': {exc}") from None
        if self.check is not None and not self.check(value):
            raise ConfigError(f"config key '{key}': value {value!r} is out of range")
        return value


def positive(x) -> bool:
    return x > 0


def nonnegative(x) -> bool:
    return x >= 0


def parse_config_file(path: str) -> dict:
    """Read a key=value file; blank lines and #-comments are skipped."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if "=" not in text:
                raise ConfigError(
                    f"{path}:{lineno}: expected key=value, got {text!r}")
            key, _, raw = text.partition("=")
            values[key.strip()] = raw.strip()
    return values


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, typed configuration of one experiment run."""

    subcommand: str
    values: Mapping[str, object]

    @classmethod
    def build(cls, subcommand: str, schema: Mapping[str, FieldSpec],
              *sources: Mapping[str, str]) -> "ExperimentConfig":
        """Merge raw key=value sources (later sources win), reject unknown
        keys, cast and validate everything against the schema."""
        merged = {}
        for source in sources:
            for key, raw in source.items():
                if key not in schema:
                    raise ConfigError(
                        f"unknown config key '{key}' for '{subcommand}'")
                merged[key] = raw
        values = {}
        for key, spec in schema.items():
            if key in merged:
                raw = merged[key]
                values[key] = spec.cast(key, raw) if isinstance(raw, str) else raw
            elif spec.default is not None:
                values[key] = spec.default
            else:
                raise ConfigError(f"missing required config key '{key}'")
        return cls(subcommand=subcommand, values=dict(values))

    def __getitem__(self, key: str):
        return self.values[key]

    def canonical(self) -> str:
        # "workers" is scheduling-only: results are bitwise identical for
        # any worker count, so it stays out of the run's identity (like
        # runtime stays out of serialized verdicts).
        lines = [f"subcommand={self.subcommand}"]
        lines += [f"{k}={_format_value(self.values[k])}"
                  for k in sorted(self.values) if k != "workers"]
        return "\n".join(lines) + "\n"

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class VerdictReport:
    """One experiment's verdict with everything needed to rerun it.

    ``runtime`` (seconds) is informational only and never serialized.
    """

    experiment: str
    claim: str
    measured: Mapping[str, float]
    bounds: Mapping[str, float]
    verdict: str
    seed: int
    config_digest: str
    runtime: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if self.verdict not in ("pass", "fail", "inconclusive"):
            raise ValueError("verdict must be pass, fail or inconclusive")

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "claim": self.claim,
            "measured": {k: self.measured[k] for k in self.measured},
            "bounds": {k: self.bounds[k] for k in self.bounds},
            "verdict": self.verdict,
            "seed": self.seed,
            "config": self.config_digest,
        }

    def to_json_line(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True,
                          separators=(",", ":"))


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temporary file in the same directory plus rename, so a
    crashed run never leaves a half-written report."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".partial-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def render_jsonl(reports: Sequence[VerdictReport]) -> str:
    return "".join(r.to_json_line() + "\n" for r in reports)


def write_jsonl(path: str, reports: Sequence[VerdictReport]) -> None:
    atomic_write_text(path, render_jsonl(reports))


def render_csv(fieldnames: Sequence[str], rows: Sequence[Mapping]) -> str:
    buf = io.StringIO()
    buf.write(",".join(fieldnames) + "\n")
    for row in rows:
        buf.write(",".join(_format_value(row[k]) for k in fieldnames) + "\n")
    return buf.getvalue()


def write_csv(path: str, fieldnames: Sequence[str],
              rows: Sequence[Mapping]) -> None:
    atomic_write_text(path, render_csv(fieldnames, rows))
