"""Run configuration: dataclasses plus a sectioned ``key = value`` text format.

Example::

    [run]
    master_seed = 7
    rounds = 4

    [data]
    kind = gaussian
    classes = 3

    [split]
    kind = setup1

    [attacker.a1]
    mode = weight_scale
    r = 0.9999
    user = 0

Unknown sections or keys are rejected with the offending line number.
``to_text`` always writes every key, so a resolved snapshot reparses to an
identical configuration.
"""

from dataclasses import dataclass, field, fields, replace
import configparser
import hashlib
import re

from .attacker import AttackerConfig
from .data import SplitSpec
from .errors import ConfigurationError


class ConfigParseError(ConfigurationError):
    def __init__(self, message, line=None, column=None):
        where = f"line {line}, column {column or 1}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
        self.column = column


@dataclass(frozen=True)
class DataSpec:
    kind: str = "gaussian"
    classes: int = 3
    per_class: int = 300
    test_per_class: int = 100
    spread: float = 0.05
    glyph_noise: float = 0.1
    glyph_shift: int = 0
    images: str = ""
    labels: str = ""
    test_images: str = ""
    test_labels: str = ""

    def __post_init__(self):
        if self.kind not in ("gaussian", "glyphs", "idx"):
            raise ConfigurationError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "idx" and not (self.images and self.labels):
            raise ConfigurationError("idx datasets need images and labels paths")


@dataclass(frozen=True)
class GanSpec:
    z_dim: int = 8
    gen_hidden: tuple = (32, 32)
    disc_hidden: tuple = (32, 32)
    batch_size: int = 32
    d_steps: int = 1
    g_lr: float = 1e-3
    d_lr: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    # "auto": zero biases unless an attacker scales biases, then +-0.05
    bias_init: str = "auto"


@dataclass(frozen=True)
class RoundConfig:
    # 0 means one local epoch: ceil(shard size / batch size) steps
    steps_per_round: int = 0
    synth_per_user: int = 100
    cloud_fraction: float = 0.01
    classifier_epochs_per_round: int = 1
    classifier_hidden: tuple = (32,)
    classifier_lr: float = 1e-3
    classifier_batch: int = 32
    judge_epochs: int = 5

    def __post_init__(self):
        if self.steps_per_round < 0 or self.synth_per_user < 0:
            raise ConfigurationError("steps_per_round and synth_per_user must be non-negative")
        if not 0 < self.cloud_fraction <= 1:
            raise ConfigurationError("cloud_fraction must lie in (0, 1]")
        if self.classifier_epochs_per_round <= 0 or self.classifier_batch <= 0:
            raise ConfigurationError("classifier epochs and batch must be positive")


@dataclass(frozen=True)
class ChannelSpec:
    kind: str = "ideal"
    bits: int = 16
    clip: float = 4.0

    def __post_init__(self):
        if self.kind not in ("ideal", "quantized"):
            raise ConfigurationError(f"unknown channel kind {self.kind!r}")


@dataclass(frozen=True)
class FederationConfig:
    master_seed: int = 0
    rounds: int = 1
    data: DataSpec = field(default_factory=DataSpec)
    split: SplitSpec = field(default_factory=lambda: SplitSpec("setup1"))
    gan: GanSpec = field(default_factory=GanSpec)
    round: RoundConfig = field(default_factory=RoundConfig)
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    attackers: tuple = ()
    probe_size: int = 200

    @property
    def num_users(self):
        return self.split.num_users

    @property
    def gen_bias_range(self):
        if self.gan.bias_init == "auto":
            return 0.05 if any(a.mode == "bias_scale" for a in self.attackers) else 0.0
        return float(self.gan.bias_init)

    def with_seed(self, seed):
        return replace(self, master_seed=int(seed))

    def to_text(self):
        return to_text(self)

    def digest(self):
        return hashlib.sha256(self.to_text().encode()).digest()


def _fmt(value):
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return "; ".join(",".join(str(v) for v in group) for group in value)
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


_SECTIONS = (("data", DataSpec), ("gan", GanSpec), ("round", RoundConfig), ("channel", ChannelSpec))


def to_text(cfg):
    lines = ["[run]", f"master_seed = {cfg.master_seed}", f"rounds = {cfg.rounds}",
             f"probe_size = {cfg.probe_size}", ""]
    for name, _ in _SECTIONS:
        lines.append(f"[{name}]")
        spec = getattr(cfg, name)
        for f in fields(spec):
            lines.append(f"{f.name} = {_fmt(getattr(spec, f.name))}")
        lines.append("")
    lines += ["[split]", f"kind = {cfg.split.kind}", f"users = {cfg.split.num_users}",
              f"seed = {cfg.split.seed}"]
    if cfg.split.kind == "custom":
        lines.append(f"assignment = {_fmt(cfg.split.assignment)}")
    lines.append("")
    for i, a in enumerate(cfg.attackers):
        lines += [f"[attacker.{i}]", f"mode = {a.mode}", f"r = {a.r!r}", f"user = {a.user_id}"]
        if a.missed_steps:
            lines.append(f"missed_steps = {_fmt(tuple(a.missed_steps))}")
        lines.append("")
    return "\n".join(lines)


def _line_index(text):
    """Map (section, key) to the 1-based line where the key appears."""
    index, section = {}, None
    for n, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        m = re.match(r"\[([^\]]+)\]", stripped)
        if m:
            section = m.group(1).strip()
            index[(section, None)] = n
        elif section and "=" in stripped and not stripped.startswith(("#", ";")):
            index[(section, stripped.split("=", 1)[0].strip().lower())] = n
    return index


def _convert(raw, annotation_default, where):
    line, key = where
    try:
        if isinstance(annotation_default, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(annotation_default, int):
            return int(raw, 0)
        if isinstance(annotation_default, float):
            return float(raw)
        if isinstance(annotation_default, tuple):
            if ";" in raw:
                return tuple(tuple(int(v) for v in g.split(",") if v.strip()) for g in raw.split(";"))
            return tuple(int(v) for v in raw.split(",") if v.strip())
        return raw
    except ValueError:
        raise ConfigParseError(f"invalid value {raw!r} for {key}", line,
                               None) from None


def from_text(text):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigParseError("malformed line", lineno) from None
    except configparser.Error as exc:
        raise ConfigParseError(str(exc).splitlines()[0], getattr(exc, "lineno", None)) from None
    lines = _line_index(text)

    def section_values(name, cls, extra=()):
        if not parser.has_section(name):
            return {}
        allowed = {f.name: f for f in fields(cls)} if cls else {}
        defaults = cls() if cls else None
        out = {}
        for key, raw in parser.items(name):
            line = lines.get((name, key))
            if key in extra:
                out[key] = raw
                continue
            if key not in allowed:
                raise ConfigParseError(f"unknown key {key!r} in [{name}]", line)
            out[key] = _convert(raw.strip(), getattr(defaults, key), (line, key))
        return out

    known = {"run", "data", "split", "gan", "round", "channel"}
    for name in parser.sections():
        if name not in known and not name.startswith("attacker."):
            raise ConfigParseError(f"unknown section [{name}]", lines.get((name, None)))

    run = {}
    if parser.has_section("run"):
        for key, raw in parser.items("run"):
            line = lines.get(("run", key))
            if key not in ("master_seed", "rounds", "probe_size"):
                raise ConfigParseError(f"unknown key {key!r} in [run]", line)
            run[key] = _convert(raw.strip(), 0, (line, key))

    try:
        data = DataSpec(**section_values("data", DataSpec))
        gan = GanSpec(**section_values("gan", GanSpec))
        rnd = RoundConfig(**section_values("round", RoundConfig))
        channel = ChannelSpec(**section_values("channel", ChannelSpec))
        split = _split_from(parser, lines)
        attackers = tuple(_attacker_from(parser, name, lines)
                          for name in parser.sections() if name.startswith("attacker."))
        return FederationConfig(attackers=attackers, data=data, gan=gan, round=rnd, channel=channel,
                                split=split, **run)
    except ConfigParseError:
        raise
    except (ConfigurationError, TypeError) as exc:
        raise ConfigParseError(str(exc)) from None


def _split_from(parser, lines):
    if not parser.has_section("split"):
        return SplitSpec("setup1")
    raw = dict(parser.items("split"))
    for key in raw:
        if key not in ("kind", "users", "assignment", "seed"):
            raise ConfigParseError(f"unknown key {key!r} in [split]", lines.get(("split", key)))
    assignment = ()
    if "assignment" in raw:
        assignment = _convert(raw["assignment"], (), (lines.get(("split", "assignment")), "assignment"))
        if assignment and not isinstance(assignment[0], tuple):
            assignment = (assignment,)
    users = _convert(raw.get("users", "10"), 0, (lines.get(("split", "users")), "users"))
    seed = _convert(raw.get("seed", "0"), 0, (lines.get(("split", "seed")), "seed"))
    return SplitSpec(raw.get("kind", "setup1").strip(), users, assignment, seed)


def _attacker_from(parser, name, lines):
    raw = dict(parser.items(name))
    kw = {}
    for key, value in raw.items():
        line = lines.get((name, key))
        if key == "mode":
            kw["mode"] = value.strip()
        elif key == "r":
            kw["r"] = _convert(value, 0.0, (line, key))
        elif key == "user":
            kw["user_id"] = _convert(value, 0, (line, key))
        elif key == "missed_steps":
            kw["missed_steps"] = _convert(value, (), (line, key))
        else:
            raise ConfigParseError(f"unknown key {key!r} in [{name}]", line)
    try:
        return AttackerConfig(**kw)
    except ConfigurationError as exc:
        raise ConfigParseError(str(exc), lines.get((name, None))) from None


def load(path):
    with open(path, encoding="utf-8") as fh:
        return from_text(fh.read())
