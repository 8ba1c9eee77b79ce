"""``key = value`` run configuration with optional ``[section]`` headers.

Section names only group keys for readability; every key is global and must
be one of the fields of :class:`RunConfig`.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


def _opt(default, section, lo=None, hi=None, lo_open=False, hi_open=False, choices=None):
    return field(default=default, metadata=dict(section=section, lo=lo, hi=hi, lo_open=lo_open,
                                                hi_open=hi_open, choices=choices))


@dataclass(frozen=True)
class RunConfig:
    seed: int = _opt(0, "run", lo=0)
    out: str = _opt("runs/default", "run")
    workers: int = _opt(1, "run", lo=1)

    corpus: str = _opt("", "data")
    inventory: str = _opt("", "data")
    vocab: str = _opt("", "data")
    num_emoji: int = _opt(10, "data", lo=1)
    num_sentences: int = _opt(60_000, "data", lo=1)
    emoji_fraction: float = _opt(0.03, "data", lo=0.0, hi=1.0, lo_open=True, hi_open=True)
    top_emoji_share: float = _opt(0.3, "data", lo=0.0, hi=1.0, lo_open=True)
    vocab_size: int = _opt(400, "data", lo=3)
    max_len: int = _opt(20, "data", lo=1)
    num_clients: int = _opt(600, "data", lo=2)
    sentences_per_client: float = _opt(100.0, "data", lo=0.0, lo_open=True)
    sentences_dispersion: float = _opt(0.0, "data", lo=0.0)
    skew: float = _opt(0.0, "data", lo=0.0, hi=1.0)
    unk_keep_fraction: float = _opt(1.0, "data", lo=0.0, hi=1.0, lo_open=True)
    holdout_fraction: float = _opt(1 / 6, "data", lo=0.0, hi=1.0, lo_open=True, hi_open=True)

    embed_dim: int = _opt(16, "model", lo=1)
    hidden_dim: int = _opt(32, "model", lo=1)
    num_layers: int = _opt(2, "model", lo=1)

    client_lr: float = _opt(1.0, "client", lo=0.0)
    batch_size: int = _opt(50, "client", lo=1)
    epochs: int = _opt(1, "client", lo=1)
    clip_norm: float = _opt(5.0, "client", lo=0.0, lo_open=True)

    server_opt: str = _opt("sgd", "server", choices=("sgd", "nesterov"))
    server_lr: float = _opt(1.0, "server", lo=0.0, lo_open=True)
    momentum: float = _opt(0.9, "server", lo=0.0, hi=1.0, hi_open=True)

    devices_per_round: int = _opt(10, "federation", lo=1)
    rounds: int = _opt(300, "federation", lo=0)
    eval_every: int = _opt(10, "federation", lo=1)
    eval_clients: int = _opt(100, "federation", lo=1)
    availability: float = _opt(1.0, "federation", lo=0.0, hi=1.0, lo_open=True)

    pretrain_rounds: int = _opt(100, "pretrain", lo=0)
    lm_client_lr: float = _opt(1.0, "pretrain", lo=0.0)
    pretrained: str = _opt("", "pretrain")

    central_epochs: int = _opt(5, "central", lo=1)

    checkpoint: str = _opt("", "inference")
    alpha: float = _opt(0.7, "inference", lo=0.0)
    smoothing: float = _opt(1.0, "inference", lo=0.0)
    threshold: float = _opt(0.5, "inference", lo=0.0, hi=1.0, lo_open=True)
    top_k: int = _opt(3, "inference", lo=1)

    sweep_axis: str = _opt("B", "sweep", choices=("B", "K", "server_opt"))
    sweep_values: str = _opt("1,50", "sweep")

    def __post_init__(self):
        for f in dataclasses.fields(self):
            _check_range(f, getattr(self, f.name))

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)


FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _check_range(f: dataclasses.Field, value) -> None:
    m = f.metadata
    if m.get("choices") and value not in m["choices"]:
        raise ConfigError(f"{f.name}: must be one of {', '.join(m['choices'])}, got {value!r}")
    lo, hi = m.get("lo"), m.get("hi")
    if lo is not None and (value < lo or (m["lo_open"] and value == lo)):
        raise ConfigError(f"{f.name}: must be {'>' if m['lo_open'] else '>='} {lo}, got {value!r}")
    if hi is not None and (value > hi or (m["hi_open"] and value == hi)):
        raise ConfigError(f"{f.name}: must be {'<' if m['hi_open'] else '<='} {hi}, got {value!r}")


def _convert(name: str, raw: str):
    kind = FIELDS[name].type
    if kind in (str, "str"):
        return raw
    try:
        return int(raw) if kind in (int, "int") else float(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as a number") from None


def parse_overrides(pairs: dict[str, str], base: RunConfig | None = None) -> RunConfig:
    values = {}
    for key, raw in pairs.items():
        if key not in FIELDS:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _convert(key, raw.strip())
    base = base or RunConfig()
    return dataclasses.replace(base, **values)


def loads_config(text: str) -> RunConfig:
    # keys before the first [section] live in a synthetic root section
    parser = configparser.ConfigParser(interpolation=None, strict=True,
                                       comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[__root__]\n" + text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        detail = exc.message.splitlines()[0]
        if isinstance(exc, configparser.ParsingError) and exc.errors:
            line, text = exc.errors[0]
            detail = f"expected 'key = value', got {text.strip()}"
        where = f"line {line - 1}: " if line else ""
        raise ConfigError(f"parse error: {where}{detail}") from None
    pairs: dict[str, str] = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key in pairs:
                raise ConfigError(f"duplicate key {key!r}")
            pairs[key] = raw
    return parse_overrides(pairs)


def load_config(path: str | Path) -> RunConfig:
    return loads_config(Path(path).read_text(encoding="utf-8"))


def dump_config(cfg: RunConfig) -> str:
    """Fully resolved config in the same format ``load_config`` reads."""
    lines: list[str] = []
    section = None
    for f in dataclasses.fields(cfg):
        sec = f.metadata["section"]
        if sec != section:
            if lines:
                lines.append("")
            lines.append(f"[{sec}]")
            section = sec
        value = getattr(cfg, f.name)
        lines.append(f"{f.name} = {value!r}" if isinstance(value, float) else f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
