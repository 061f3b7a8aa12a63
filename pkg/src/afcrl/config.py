"""Flat key=value run configuration.

One text document covers the environment, learner, parallel plan, and
I/O strategy, with a handful of run-level keys. Keys are namespaced by
section (``env.sigma``, ``ppo.gamma``, ``plan.n_envs``, ``io.mode``,
``run.seed``). Unknown keys are rejected, and the canonical echo of a
parsed config re-parses to an equal config.
"""

from __future__ import annotations

import typing
from dataclasses import dataclass, field, fields

from .coupling import IoStrategy
from .env import EnvConfig
from .errors import ConfigError
from .orchestrator import ParallelPlan
from .ppo import PpoHyper


@dataclass
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    ppo: PpoHyper = field(default_factory=PpoHyper)
    plan: ParallelPlan = field(default_factory=ParallelPlan)
    io: IoStrategy = field(default_factory=IoStrategy)
    seed: int = 0
    episodes: int = 50
    checkpoint_every: int = 50
    out: str = ""
    grid: str = "table1"
    repetitions: int = 3

    def flat(self) -> dict[str, object]:
        """All keys in canonical (sorted) order with their current values."""
        out: dict[str, object] = {}
        for section, obj in self._sections().items():
            for f in fields(obj):
                out[f"{section}.{f.name}"] = getattr(obj, f.name)
        for name in _RUN_KEYS:
            out[f"run.{name}"] = getattr(self, name)
        return dict(sorted(out.items()))

    def _sections(self) -> dict[str, object]:
        return {"env": self.env, "ppo": self.ppo, "plan": self.plan, "io": self.io}


_SECTION_TYPES = {
    "env": EnvConfig,
    "ppo": PpoHyper,
    "plan": ParallelPlan,
    "io": IoStrategy,
}
_RUN_KEYS = ("seed", "episodes", "checkpoint_every", "out", "grid", "repetitions")


def _field_types(cls) -> dict[str, type]:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in fields(cls)}


_TYPE_TABLE = {name: _field_types(cls) for name, cls in _SECTION_TYPES.items()}
_RUN_TYPES = {"seed": int, "episodes": int, "checkpoint_every": int,
              "out": str, "grid": str, "repetitions": int}


def _parse_value(key: str, raw: str, typ) -> object:
    raw = raw.strip()
    origin = typing.get_origin(typ)
    if origin is typing.Union or str(origin) == "<class 'types.UnionType'>":
        args = [a for a in typing.get_args(typ) if a is not type(None)]
        if raw.lower() == "none":
            return None
        typ = args[0]
    try:
        if typ is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"invalid value for {key}: {raw!r}") from exc


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_kv_text(text: str) -> dict[str, str]:
    """key=value lines to a dict; '#' starts a comment, blanks are skipped."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = stripped.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def typed_value(key: str, raw: str) -> object:
    """Parse one raw string against the key's declared type."""
    if "." not in key:
        raise ConfigError(f"unknown key {key!r} (keys are section.name)")
    section, name = key.split(".", 1)
    if section == "run":
        if name not in _RUN_TYPES:
            raise ConfigError(f"unknown key {key!r}")
        return _parse_value(key, raw, _RUN_TYPES[name])
    table = _TYPE_TABLE.get(section)
    if table is None or name not in table:
        raise ConfigError(f"unknown key {key!r}")
    return _parse_value(key, raw, table[name])


def build_config(overrides: dict[str, object]) -> RunConfig:
    """Construct a validated RunConfig from typed key overrides."""
    kwargs: dict[str, dict[str, object]] = {s: {} for s in _SECTION_TYPES}
    run_kwargs: dict[str, object] = {}
    for key, value in overrides.items():
        section, name = key.split(".", 1)
        if section == "run":
            run_kwargs[name] = value
        else:
            kwargs[section][name] = value
    try:
        return RunConfig(
            env=EnvConfig(**kwargs["env"]),
            ppo=PpoHyper(**kwargs["ppo"]),
            plan=ParallelPlan(**kwargs["plan"]),
            io=IoStrategy(**kwargs["io"]),
            **run_kwargs,
        )
    except ConfigError:
        raise
    except Exception as exc:  # contract violations from section validators
        raise ConfigError(str(exc)) from exc


def parse_config(text: str) -> RunConfig:
    """Parse a config document, rejecting unknown keys."""
    raw = parse_kv_text(text)
    typed = {key: typed_value(key, value) for key, value in raw.items()}
    return build_config(typed)


def canonical_text(cfg: RunConfig) -> str:
    """Sorted key=value form; parsing it reproduces an equal config."""
    lines = [f"{key}={_format_value(value)}" for key, value in cfg.flat().items()]
    return "\n".join(lines) + "\n"


def merge_config(
    file_text: str | None,
    cli_overrides: dict[str, str],
    command_defaults: dict[str, str] | None = None,
) -> RunConfig:
    """Apply precedence: CLI flag > config file > command default > built-in."""
    typed: dict[str, object] = {}
    for key, value in (command_defaults or {}).items():
        typed[key] = typed_value(key, value)
    if file_text is not None:
        for key, value in parse_kv_text(file_text).items():
            typed[key] = typed_value(key, value)
    for key, value in cli_overrides.items():
        typed[key] = typed_value(key, value)
    return build_config(typed)
