"""Run configuration: one sectioned key=value file plus flag overrides.

Sections map onto the library dataclasses ([task], [model], [sampler],
[train], [decode]); a [run] section holds the global seed. The fully
resolved configuration is serialized into every output directory.
"""

from __future__ import annotations

import typing
from configparser import ConfigParser
from dataclasses import fields

from .corpus import SyntheticTaskConfig
from .decoding import DecodeConfig
from .model import ModelConfig
from .sampler import SamplerConfig
from .train import TrainConfig


def _coerce(raw: str, typ):
    origin = typing.get_origin(typ)
    if origin in (tuple, list):
        args = typing.get_args(typ)
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if args and args[-1] is Ellipsis:
            elem = args[0]
            return tuple(_coerce(p, elem) for p in parts)
        if args:
            return tuple(_coerce(p, t) for p, t in zip(parts, args))
        return tuple(parts)
    if typ is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if typ is int:
        return int(raw)
    if typ is float:
        return float(raw)
    return raw


class RunConfig:
    _SECTIONS = {
        "task": SyntheticTaskConfig,
        "model": ModelConfig,
        "sampler": SamplerConfig,
        "train": TrainConfig,
        "decode": DecodeConfig,
    }

    def __init__(self, sections: dict[str, dict[str, str]] | None = None):
        self.sections = sections or {}

    @classmethod
    def load(cls, path=None) -> "RunConfig":
        cfg = cls()
        if path is not None:
            parser = ConfigParser()
            with open(path, "r", encoding="utf-8") as f:
                parser.read_file(f)
            cfg.sections = {s: dict(parser[s]) for s in parser.sections()}
        return cfg

    def override(self, assignment: str) -> None:
        """Apply one 'section.key=value' command-line override."""
        target, _, value = assignment.partition("=")
        section, _, key = target.partition(".")
        if not section or not key or not _:
            raise ValueError(f"override must look like section.key=value, got {assignment!r}")
        self.sections.setdefault(section, {})[key] = value

    @property
    def seed(self) -> int:
        return int(self.sections.get("run", {}).get("seed", 0))

    def _build(self, section: str, **forced):
        cls = self._SECTIONS[section]
        hints = typing.get_type_hints(cls)
        kwargs = dict(forced)
        valid = {f.name for f in fields(cls)}
        for key, raw in self.sections.get(section, {}).items():
            if key not in valid:
                raise ValueError(f"unknown key {key!r} in [{section}]")
            if key not in kwargs:
                kwargs[key] = _coerce(raw, hints[key])
        if "seed" in valid and "seed" not in kwargs and "seed" not in self.sections.get(section, {}):
            kwargs["seed"] = self.seed
        return cls(**kwargs)

    def task(self) -> SyntheticTaskConfig:
        return self._build("task")

    def model(self, feature_dim: int | None = None) -> ModelConfig:
        if feature_dim is None:
            feature_dim = self.task().feature_dim
        return self._build("model", feature_dim=feature_dim)

    def sampler(self) -> SamplerConfig:
        return self._build("sampler")

    def train(self) -> TrainConfig:
        return self._build("train")

    def decode(self) -> DecodeConfig:
        return self._build("decode")

    def resolved_text(self) -> str:
        """Every section fully expanded, suitable for reproduction."""
        lines = ["[run]", f"seed = {self.seed}", ""]
        builders = {
            "task": self.task,
            "model": self.model,
            "sampler": self.sampler,
            "train": self.train,
            "decode": self.decode,
        }
        for name, build in builders.items():
            obj = build()
            lines.append(f"[{name}]")
            for f in fields(obj):
                value = getattr(obj, f.name)
                if isinstance(value, tuple):
                    value = ",".join(str(v) for v in value)
                lines.append(f"{f.name} = {value}")
            lines.append("")
        return "\n".join(lines)

    def save_resolved(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.resolved_text())
