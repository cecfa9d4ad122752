"""Flat ``section.key = value`` experiment configuration.

Lines are ``section.key = value``; ``#`` starts a comment and blank lines are
ignored. Every key has a default, so an empty file is a valid configuration.
Matrix-valued settings name a file in the plain-text matrix format, resolved
relative to the configuration file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .empirics import LossSpec
from .exceptions import ConfigError
from .probcore import Channel, Pmf, bec, bsc, load_matrix
from .sources import IidSource, MarkovSource


def _choice(*options):
    def check(v):
        if v not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
    return check


def _open01(v):
    if not 0.0 < v < 1.0:
        raise ValueError("must lie in (0, 1)")


def _positive(v):
    if not v > 0:
        raise ValueError("must be positive")


def _non_negative(v):
    if not v >= 0:
        raise ValueError("must be non-negative")


# key -> (type, default, check); order here is the canonical serialization order
SCHEMA = {
    "source.type": (str, "markov", _choice("markov", "iid")),
    "source.p_s": (float, 0.2, None),
    "source.matrix": (str, "", None),
    "channel.type": (str, "bsc", _choice("bsc", "bec", "matrix")),
    "channel.p": (float, 0.1, None),
    "channel.matrix": (str, "", None),
    "loss.type": (str, "hamming", _choice("hamming", "mse", "matrix")),
    "loss.embedding": (str, "", None),
    "loss.matrix": (str, "", None),
    "run.n": (int, 1024, _positive),
    "run.k": (int, 1, _non_negative),
    "run.rate_slack_bits": (float, 0.1, _non_negative),
    "run.trials": (int, 200, _positive),
    "run.seed": (int, 0, _non_negative),
    "run.output": (str, "", None),
    "lemma.n": (int, 8, _positive),
    "lemma.words": (int, 16, _positive),
    "lemma.extension": (int, 6, _non_negative),
    "lemma.restarts": (int, 32, _positive),
    "mixing.k_max": (int, 8, _non_negative),
    "mixing.extension": (int, 0, _non_negative),
    "mixing.tails": (int, 512, _positive),
    "figure.points": (int, 11, _positive),
    "figure.p_s": (float, 0.1, _open01),
    "figure.p_e": (float, 0.5, None),
    "figure.n": (int, 2048, _positive),
    "figure.trials": (int, 16, _positive),
    "check.rd_tol_bits": (float, 1e-4, _positive),
    "check.rd_block_tol_bits": (float, 1e-3, _positive),
    "check.achiever_tv": (float, 1e-4, _positive),
    "check.mixing_r2": (float, 0.9, None),
    "check.distortion_rel": (float, 0.05, _positive),
    "check.loss_rel": (float, 0.15, _positive),
}


@dataclass
class ExperimentConfig:
    """Validated settings; ``values`` maps every schema key to its typed value."""

    values: dict = field(default_factory=lambda: {k: spec[1] for k, spec in SCHEMA.items()})
    base_dir: Path = field(default_factory=Path.cwd)
    explicit: set = field(default_factory=set)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def replace(self, **updates) -> "ExperimentConfig":
        """Copy with ``section__key=value`` overrides applied and validated."""
        vals = dict(self.values)
        for name, v in updates.items():
            key = name.replace("__", ".")
            if key not in SCHEMA:
                raise ConfigError(f"unknown key {key!r}")
            vals[key] = _coerce(key, v, None)
        cfg = ExperimentConfig(vals, self.base_dir, self.explicit | {k.replace("__", ".") for k in updates})
        validate(cfg)
        return cfg

    def path(self, key) -> Optional[Path]:
        raw = self.values[key]
        if not raw:
            return None
        p = Path(raw)
        return p if p.is_absolute() else self.base_dir / p

    def build_source(self):
        if self["source.type"] == "markov":
            path = self.path("source.matrix")
            if path is not None:
                return MarkovSource(load_matrix(path))
            return MarkovSource.binary_symmetric(self["source.p_s"])
        path = self.path("source.matrix")
        return IidSource(Pmf.from_file(path) if path is not None else Pmf.uniform(2))

    def build_channel(self) -> Channel:
        kind = self["channel.type"]
        if kind == "bsc":
            return bsc(self["channel.p"])
        if kind == "bec":
            return bec(self["channel.p"])
        return Channel.from_file(self.path("channel.matrix"))

    def build_loss(self, n_states: int) -> LossSpec:
        kind = self["loss.type"]
        if kind == "hamming":
            return LossSpec.hamming(n_states)
        if kind == "mse":
            raw = self["loss.embedding"]
            emb = [float(t) for t in raw.split(",")] if raw else list(range(n_states))
            if len(emb) != n_states:
                raise ConfigError(f"loss.embedding needs {n_states} values")
            return LossSpec.mse(emb)
        return LossSpec(load_matrix(self.path("loss.matrix")))


def _coerce(key, raw, lineno):
    kind, _, check = SCHEMA[key]
    try:
        if kind is int:
            value = int(raw) if not isinstance(raw, str) else int(raw.strip())
        elif kind is float:
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError("must be finite")
        else:
            value = str(raw).strip()
        if check is not None:
            check(value)
    except ValueError as exc:
        msg = str(exc) if "must" in str(exc) else f"expected {kind.__name__}, got {raw!r}"
        raise ConfigError(f"{key}: {msg}", lineno) from None
    return value


def parse_config_text(text: str, base_dir=None) -> ExperimentConfig:
    values = {k: spec[1] for k, spec in SCHEMA.items()}
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected `section.key = value`", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in lines:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[key]})", lineno)
        lines[key] = lineno
        values[key] = _coerce(key, value, lineno)
    cfg = ExperimentConfig(values, Path(base_dir) if base_dir else Path.cwd(), set(lines))
    validate(cfg, lines)
    return cfg


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text, path.parent)


def validate(cfg: ExperimentConfig, lines=None) -> None:
    """Cross-field range checks; errors cite the offending line when known."""
    lines = lines or {}

    def fail(key, msg):
        raise ConfigError(f"{key}: {msg}", lines.get(key))

    if cfg["source.type"] == "markov" and not cfg["source.matrix"]:
        if not 0.0 < cfg["source.p_s"] < 0.5:
            fail("source.p_s", "must lie in (0, 1/2)")
    kind = cfg["channel.type"]
    if kind == "bsc" and not 0.0 <= cfg["channel.p"] <= 1.0:
        fail("channel.p", "crossover probability must lie in [0, 1]")
    if kind == "bec" and not 0.0 <= cfg["channel.p"] < 1.0:
        fail("channel.p", "erasure probability must lie in [0, 1)")
    if not 0.0 <= cfg["figure.p_e"] < 1.0:
        fail("figure.p_e", "must lie in [0, 1)")
    if cfg["run.n"] <= 2 * cfg["run.k"]:
        fail("run.n", f"must exceed 2k = {2 * cfg['run.k']}")
    for key, needed in (("source.matrix", False), ("channel.matrix", kind == "matrix"),
                        ("loss.matrix", cfg["loss.type"] == "matrix")):
        path = cfg.path(key)
        if needed and path is None:
            fail(key, "a matrix file is required for this type")
        if path is not None and not path.is_file():
            fail(key, f"file not found: {path}")


def serialize(cfg: ExperimentConfig) -> str:
    """Canonical text: every key in schema order, so parse/serialize is idempotent."""
    out = []
    section = None
    for key in SCHEMA:
        sec = key.split(".", 1)[0]
        if sec != section and section is not None:
            out.append("")
        section = sec
        out.append(f"{key} = {_render(cfg.values[key])}")
    return "\n".join(out) + "\n"


def _render(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def default_config() -> ExperimentConfig:
    return ExperimentConfig()


__all__ = [
    "SCHEMA",
    "ExperimentConfig",
    "parse_config",
    "parse_config_text",
    "serialize",
    "validate",
    "default_config",
]
