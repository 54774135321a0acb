"""Pipeline configuration read from an INI-style file with ``[section]`` blocks.

Sections: ``[radar]``, ``[simulate]``, ``[annotate]``, ``[model]``, ``[train]``,
``[postproc]``, ``[paths]`` and one block per class (``[pedestrian]``,
``[cyclist]``, ``[car]``). Every key is optional; missing keys take defaults.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace

from ._validation import check_count, check_positive
from .crf import DEFAULT_CLASS_PARAMS, ClassParams, dump_class_params, load_class_params
from .exceptions import ConfigError
from .nn.model import ModelSpec
from .nn.train import TrainConfig
from .radar import DEFAULT_PROFILES, RadarConfig, SimulatorSettings


@dataclass(frozen=True)
class SimulateConfig:
    noise_std: float = 1.0
    num_frames: int = 32
    fov_deg: float = 60.0
    min_range_m: float = 2.0
    min_separation_m: float = 2.5
    clutter_amplitude: tuple = (0.3, 1.0)

    def settings(self) -> SimulatorSettings:
        import math

        return SimulatorSettings(self.noise_std, self.num_frames, math.radians(self.fov_deg),
                                 self.min_range_m, self.min_separation_m, dict(DEFAULT_PROFILES),
                                 tuple(self.clutter_amplitude))


@dataclass(frozen=True)
class AnnotateConfig:
    co_range_fraction: float = 0.05
    co_azimuth_std: float = 0.02
    cfar_guard: int = 2
    cfar_train: int = 4
    cfar_scale: float = 3.0
    min_confidence: float = 0.3
    interpret_as_std: bool = False

    @property
    def co_noise(self):
        return (self.co_range_fraction, self.co_azimuth_std, (0.5, 1.0))


@dataclass(frozen=True)
class PostprocConfig:
    ols_threshold: float = 0.3
    min_confidence: float = 0.05
    stride: int = 0  # 0 means "snippet length"

    def __post_init__(self):
        check_positive("ols_threshold", self.ols_threshold)
        check_positive("min_confidence", self.min_confidence, strict=False)
        check_count("stride", self.stride, 0)


def desk_radar() -> RadarConfig:
    """64 x 64 grid (16 m at 0.25 m bins) used by the pipeline by default."""
    return RadarConfig(samples_per_chirp=64, range_bins=64, azimuth_bins=64)


def desk_train() -> TrainConfig:
    return TrainConfig(batch_size=1, epochs=20, normalization="dataset-std")


@dataclass(frozen=True)
class PipelineConfig:
    radar: RadarConfig = field(default_factory=desk_radar)
    classes: dict = field(default_factory=lambda: dict(DEFAULT_CLASS_PARAMS))
    model: ModelSpec = field(default_factory=ModelSpec)
    train: TrainConfig = field(default_factory=desk_train)
    head_prior: float | None = 0.01
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    annotate: AnnotateConfig = field(default_factory=AnnotateConfig)
    postproc: PostprocConfig = field(default_factory=PostprocConfig)
    paths: dict = field(default_factory=dict)

    def __post_init__(self):
        r, a = self.radar.grid_shape
        if r % 4 or a % 4:
            raise ConfigError(f"grid {r}x{a}: both dims must be divisible by 4 for the network")
        if self.simulate.num_frames < self.model.snippet_len:
            raise ConfigError("simulate.num_frames must be >= model.snippet_len")
        if self.postproc.stride > self.model.snippet_len:
            raise ConfigError("postproc.stride must not exceed model.snippet_len")

    @property
    def stride(self) -> int:
        return self.postproc.stride or self.model.snippet_len

    def data_hash(self) -> str:
        """Digest of everything that determines simulated data: radar and simulate sections."""
        blob = json.dumps({"radar": asdict(self.radar), "simulate": asdict(self.simulate)},
                          sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_ini(self) -> str:
        parser = configparser.ConfigParser()
        for name in ("radar", "simulate", "annotate", "model", "train", "postproc"):
            vals = asdict(getattr(self, name))
            if name == "train":
                vals["head_prior"] = "none" if self.head_prior is None else self.head_prior
            parser[name] = {k: _fmt(v) for k, v in vals.items() if v is not None}
        if self.paths:
            parser["paths"] = dict(self.paths)
        parser.read_string(dump_class_params(self.classes))
        import io

        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, (tuple, list)):
        return ", ".join(str(x) for x in v)
    return str(v)


def _coerce(text: str, default, name: str):
    try:
        if isinstance(default, bool):
            low = text.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no", "on", "off"):
                raise ValueError(f"not a boolean: {text!r}")
            return low in ("true", "1", "yes", "on")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float) or default is None:
            return float(text)
        if isinstance(default, tuple):
            kind = type(default[0]) if default else float
            return tuple(kind(t) for t in text.replace(",", " ").split())
        return text.strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {exc}") from exc


def _section(parser, name, cls, base):
    if not parser.has_section(name):
        return base
    known = {f.name: getattr(base, f.name) for f in fields(cls)}
    updates = {}
    for key, text in parser[name].items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in [{name}]")
        updates[key] = _coerce(text, known[key], f"{name}.{key}")
    try:
        return replace(base, **updates)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from exc


def load_config(source=None) -> PipelineConfig:
    """Build a :class:`PipelineConfig` from a path, INI text, or ``None`` (defaults)."""
    parser = configparser.ConfigParser()
    try:
        if source is not None:
            text = str(source)
            if "\n" in text or text.lstrip().startswith("["):
                parser.read_string(text)
            else:
                try:
                    with open(text) as fh:
                        parser.read_file(fh)
                except OSError as exc:
                    raise ConfigError(f"cannot read config {text}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc

    known = {"radar", "simulate", "annotate", "model", "train", "postproc", "paths",
             *DEFAULT_CLASS_PARAMS}
    unknown = set(parser.sections()) - known
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")

    head_prior = PipelineConfig.head_prior
    if parser.has_section("train") and parser.has_option("train", "head_prior"):
        raw = parser["train"]["head_prior"]
        head_prior = None if raw.strip().lower() == "none" else _coerce(raw, 0.0, "train.head_prior")
        parser.remove_option("train", "head_prior")
    try:
        return PipelineConfig(
            radar=_section(parser, "radar", RadarConfig, desk_radar()),
            classes=load_class_params(parser),
            model=_section(parser, "model", ModelSpec, ModelSpec()),
            train=_section(parser, "train", TrainConfig, desk_train()),
            head_prior=head_prior,
            simulate=_section(parser, "simulate", SimulateConfig, SimulateConfig()),
            annotate=_section(parser, "annotate", AnnotateConfig, AnnotateConfig()),
            postproc=_section(parser, "postproc", PostprocConfig, PostprocConfig()),
            paths=dict(parser["paths"]) if parser.has_section("paths") else {},
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


__all__ = ["AnnotateConfig", "ClassParams", "PipelineConfig", "PostprocConfig",
           "SimulateConfig", "load_config"]
