"""File-based coupling between the learner and a (possibly external) solver.

Per actuation the solver side emits a bundle (probe vector, coefficient
history, applied jet velocity) and the learner side emits an action
file plus a rendered solver configuration. Three strategies control the
on-disk shape:

* ``baseline``  - text files plus a padded field dump, one bundle per
  actuation totalling ``baseline_payload_bytes``.
* ``optimized`` - a single binary file padded to ``optimized_payload_bytes``.
* ``disabled``  - nothing is written (benchmarking only; an external
  solver cannot run without data exchange).

Byte accounting is exact: every writer returns the number of bytes that
landed on disk.
"""

from __future__ import annotations

import math
import re
import shutil
import struct
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, SolverError, SolverTimeout, SpawnError, TemplateError

BASELINE = "baseline"
OPTIMIZED = "optimized"
DISABLED = "disabled"
STRATEGIES = (BASELINE, OPTIMIZED, DISABLED)

BUNDLE_MAGIC = b"AFCB"
ACTION_MAGIC = b"AFCA"
FIELD_MAGIC = b"AFCF"
FORMAT_VERSION = 1

PROBES_FILE = "probes.txt"
COEFFS_FILE = "coeffs.csv"
FIELD_FILE = "field.dat"
STEP_FILE = "step.bin"
ACTION_TEXT_FILE = "action.txt"
ACTION_BIN_FILE = "action.bin"


@dataclass(frozen=True)
class IoStrategy:
    """Exchange strategy plus the padded payload sizes it emulates."""

    mode: str = BASELINE
    baseline_payload_bytes: int = 5_242_880
    optimized_payload_bytes: int = 1_258_291

    def __post_init__(self):
        if self.mode not in STRATEGIES:
            raise ConfigError(f"unknown I/O strategy {self.mode!r}; expected one of {STRATEGIES}")
        if self.baseline_payload_bytes < 0 or self.optimized_payload_bytes < 0:
            raise ConfigError("payload sizes must be >= 0")

    @property
    def bytes_per_actuation(self) -> int:
        """Nominal bundle volume used by the virtual clock."""
        if self.mode == BASELINE:
            return self.baseline_payload_bytes
        if self.mode == OPTIMIZED:
            return self.optimized_payload_bytes
        return 0


@dataclass
class ActuationBundle:
    """Everything exchanged for one actuation period."""

    episode_index: int
    actuation_index: int
    probes: np.ndarray           # (obs_dim,)
    rows: np.ndarray             # (steps, 3) of (t, cd, cl)
    jet_velocity: float

    def value_equal(self, other: "ActuationBundle") -> bool:
        return (
            self.episode_index == other.episode_index
            and self.actuation_index == other.actuation_index
            and self.probes.shape == other.probes.shape
            and bool(np.all(self.probes == other.probes))
            and self.rows.shape == other.rows.shape
            and bool(np.all(self.rows == other.rows))
            and self.jet_velocity == other.jet_velocity
        )


@dataclass
class SolverTemplate:
    """Config template with ``{{name}}`` placeholders and its target path."""

    text: str
    target: str = "solver.cfg"


_PLACEHOLDER = re.compile(r"\{\{([A-Za-z0-9_]+)\}\}")


def _format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_template(tpl: SolverTemplate, values: dict) -> str:
    """Substitute every placeholder; numbers use shortest round-trip decimals."""
    names = set(_PLACEHOLDER.findall(tpl.text))
    missing = [n for n in names if n not in values]
    if missing:
        raise TemplateError(missing)
    return _PLACEHOLDER.sub(lambda m: _format_value(values[m.group(1)]), tpl.text)


def _encode_step_bin(bundle: ActuationBundle) -> bytes:
    probes = np.ascontiguousarray(bundle.probes, dtype="<f8")
    rows = np.ascontiguousarray(bundle.rows, dtype="<f8")
    parts = [
        BUNDLE_MAGIC,
        struct.pack("<HH", FORMAT_VERSION, 0),
        struct.pack("<II", bundle.episode_index, bundle.actuation_index),
        struct.pack("<I", probes.size),
        probes.tobytes(),
        struct.pack("<I", rows.shape[0]),
        rows.tobytes(),
        struct.pack("<d", bundle.jet_velocity),
    ]
    return b"".join(parts)


def _decode_step_bin(data: bytes) -> ActuationBundle:
    if data[:4] != BUNDLE_MAGIC:
        raise FormatError(f"bad bundle magic {data[:4]!r}", offset=0)
    if len(data) < 16:
        raise FormatError("truncated bundle header", offset=len(data))
    version, _flags = struct.unpack_from("<HH", data, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported bundle version {version}", offset=4)
    episode, actuation = struct.unpack_from("<II", data, 8)
    off = 16
    (n_probes,) = struct.unpack_from("<I", data, off)
    off += 4
    if off + 8 * n_probes > len(data):
        raise FormatError("truncated probe payload", offset=off)
    probes = np.frombuffer(data, dtype="<f8", count=n_probes, offset=off).astype(np.float64)
    off += 8 * n_probes
    if off + 4 > len(data):
        raise FormatError("truncated row count", offset=off)
    (n_rows,) = struct.unpack_from("<I", data, off)
    off += 4
    if off + 24 * n_rows + 8 > len(data):
        raise FormatError("truncated row payload", offset=off)
    rows = (
        np.frombuffer(data, dtype="<f8", count=3 * n_rows, offset=off)
        .reshape(n_rows, 3)
        .astype(np.float64)
    )
    off += 24 * n_rows
    (jet,) = struct.unpack_from("<d", data, off)
    return ActuationBundle(
        episode_index=episode, actuation_index=actuation,
        probes=probes, rows=rows, jet_velocity=jet,
    )


def write_bundle(directory, bundle: ActuationBundle, strategy: IoStrategy) -> int:
    """Write one actuation bundle; returns the exact bytes put on disk."""
    if strategy.mode == DISABLED:
        return 0
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"bundle directory does not exist: {directory}")

    if strategy.mode == OPTIMIZED:
        blob = _encode_step_bin(bundle)
        if len(blob) > strategy.optimized_payload_bytes:
            raise ConfigError(
                f"optimized payload {strategy.optimized_payload_bytes} smaller than "
                f"encoded content ({len(blob)} bytes)"
            )
        blob += b"\0" * (strategy.optimized_payload_bytes - len(blob))
        (directory / STEP_FILE).write_bytes(blob)
        return len(blob)

    probes_text = "".join(repr(float(p)) + "\n" for p in bundle.probes)
    coeffs_lines = ["t,cd,cl"]
    for t, cd, cl in bundle.rows:
        coeffs_lines.append(f"{repr(float(t))},{repr(float(cd))},{repr(float(cl))}")
    coeffs_text = "\n".join(coeffs_lines) + "\n"
    field_header = (
        FIELD_MAGIC
        + struct.pack("<HH", FORMAT_VERSION, 0)
        + struct.pack("<II", bundle.episode_index, bundle.actuation_index)
        + struct.pack("<d", bundle.jet_velocity)
    )
    written = len(probes_text.encode()) + len(coeffs_text.encode()) + len(field_header)
    if written > strategy.baseline_payload_bytes:
        raise ConfigError(
            f"baseline payload {strategy.baseline_payload_bytes} smaller than "
            f"encoded content ({written} bytes)"
        )
    field_blob = field_header + b"\0" * (strategy.baseline_payload_bytes - written)
    (directory / PROBES_FILE).write_text(probes_text)
    (directory / COEFFS_FILE).write_text(coeffs_text)
    (directory / FIELD_FILE).write_bytes(field_blob)
    return len(probes_text.encode()) + len(coeffs_text.encode()) + len(field_blob)


def read_bundle(directory, strategy: IoStrategy) -> ActuationBundle:
    """Reconstruct a bundle written by :func:`write_bundle`.

    Binary round-trips are bitwise exact; the text route is value-exact
    because every real is written with shortest round-trip decimals.
    """
    if strategy.mode == DISABLED:
        raise ConfigError("nothing to read: I/O strategy is disabled")
    directory = Path(directory)

    if strategy.mode == OPTIMIZED:
        path = directory / STEP_FILE
        if not path.is_file():
            raise FormatError(f"missing {path}")
        return _decode_step_bin(path.read_bytes())

    probes_path = directory / PROBES_FILE
    coeffs_path = directory / COEFFS_FILE
    field_path = directory / FIELD_FILE
    for p in (probes_path, coeffs_path, field_path):
        if not p.is_file():
            raise FormatError(f"missing {p}")
    probes = np.array([float(line) for line in probes_path.read_text().split()])
    lines = coeffs_path.read_text().splitlines()
    if not lines or lines[0] != "t,cd,cl":
        raise FormatError(f"bad coefficient header in {coeffs_path}", offset=0)
    rows = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    if rows.size == 0:
        rows = rows.reshape(0, 3)
    blob = field_path.read_bytes()
    if blob[:4] != FIELD_MAGIC:
        raise FormatError(f"bad field magic {blob[:4]!r}", offset=0)
    version, _flags = struct.unpack_from("<HH", blob, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported field version {version}", offset=4)
    if len(blob) < 24:
        raise FormatError("truncated field header", offset=len(blob))
    episode, actuation = struct.unpack_from("<II", blob, 8)
    (jet,) = struct.unpack_from("<d", blob, 16)
    return ActuationBundle(
        episode_index=episode, actuation_index=actuation,
        probes=probes, rows=rows, jet_velocity=jet,
    )


def write_action(directory, a: float, strategy: IoStrategy) -> int:
    """Write the action value for the solver side; returns bytes written."""
    if strategy.mode == DISABLED:
        return 0
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"action directory does not exist: {directory}")
    if strategy.mode == OPTIMIZED:
        blob = ACTION_MAGIC + struct.pack("<d", a)
        (directory / ACTION_BIN_FILE).write_bytes(blob)
        return len(blob)
    text = repr(float(a)) + "\n"
    (directory / ACTION_TEXT_FILE).write_text(text)
    return len(text.encode())


def read_action(directory, strategy: IoStrategy) -> float:
    """Read back an action written by :func:`write_action`."""
    directory = Path(directory)
    if strategy.mode == DISABLED:
        raise ConfigError("nothing to read: I/O strategy is disabled")
    if strategy.mode == OPTIMIZED:
        blob = (directory / ACTION_BIN_FILE).read_bytes()
        if blob[:4] != ACTION_MAGIC:
            raise FormatError(f"bad action magic {blob[:4]!r}", offset=0)
        if len(blob) < 12:
            raise FormatError("truncated action payload", offset=len(blob))
        (a,) = struct.unpack_from("<d", blob, 4)
        return a
    return float((directory / ACTION_TEXT_FILE).read_text())


@dataclass
class LauncherSpec:
    """How to start one external solver run for one actuation period."""

    program: str
    args: list[str] = field(default_factory=list)
    template: SolverTemplate | None = None
    actuation_period: float = 0.025


@dataclass
class ExternalActuationResult:
    """Output bundle of an external run plus its recorded cost."""

    bundle: ActuationBundle
    wall_seconds: float
    bytes_written: int
    bytes_read: int


def _resolve_program(program: str) -> str | None:
    p = Path(program)
    if p.is_file():
        return str(p)
    return shutil.which(program)


def run_external_actuation(
    workdir,
    launcher: LauncherSpec,
    bundle_in: ActuationBundle,
    timeout: float,
    strategy: IoStrategy,
) -> ExternalActuationResult:
    """Drive one external solver instance for one actuation period.

    Protocol: the input bundle (whose ``jet_velocity`` is the velocity to
    apply) and the action file are written to ``workdir/in``, the config
    template is rendered into ``workdir``, the solver runs with
    ``workdir`` as its working directory and must leave its output
    bundle in ``workdir/out``.
    """
    if strategy.mode == DISABLED:
        raise ConfigError(
            "external solver runs require data exchange; disabled I/O is benchmarking-only"
        )
    resolved = _resolve_program(launcher.program)
    if resolved is None:
        raise SpawnError(f"launcher program not found: {launcher.program}")
    workdir = Path(workdir)
    indir = workdir / "in"
    outdir = workdir / "out"
    indir.mkdir(parents=True, exist_ok=True)
    outdir.mkdir(parents=True, exist_ok=True)

    start = time.perf_counter()
    applied = bundle_in.jet_velocity
    if not math.isfinite(applied):
        raise ConfigError(f"applied jet velocity must be finite, got {applied}")
    bytes_written = write_bundle(indir, bundle_in, strategy)
    bytes_written += write_action(indir, applied, strategy)
    if launcher.template is not None:
        t0 = bundle_in.actuation_index * launcher.actuation_period
        text = render_template(
            launcher.template,
            {
                "jet_velocity": applied,
                "start_time": t0,
                "end_time": t0 + launcher.actuation_period,
            },
        )
        target = workdir / launcher.template.target
        target.write_text(text)
        bytes_written += len(text.encode())

    cmd = [resolved] + list(launcher.args)
    try:
        proc = subprocess.run(
            cmd, cwd=workdir, capture_output=True, text=True, timeout=timeout
        )
    except subprocess.TimeoutExpired as exc:
        tail = ((exc.stdout or b"").decode(errors="replace") if isinstance(exc.stdout, bytes)
                else (exc.stdout or ""))[-500:]
        raise SolverTimeout(f"solver exceeded {timeout}s", output_tail=tail) from exc
    if proc.returncode != 0:
        tail = ((proc.stdout or "") + (proc.stderr or ""))[-500:]
        raise SolverError(f"solver exited with code {proc.returncode}", output_tail=tail)

    bundle = read_bundle(outdir, strategy)
    bytes_read = sum(f.stat().st_size for f in outdir.iterdir() if f.is_file())
    return ExternalActuationResult(
        bundle=bundle,
        wall_seconds=time.perf_counter() - start,
        bytes_written=bytes_written,
        bytes_read=bytes_read,
    )
