"""Run configuration: one pydantic schema per section, TOML in, flat dotted TOML out."""

import json
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from scancap.operations.ahbs import AhbsConfig
from scancap.operations.errors import ConfigError
from scancap.operations.model import ModelConfig

logger = logging.getLogger(__name__)

CONFIG_ECHO = "resolved_config.toml"

PROFILES: dict[str, dict[str, Any]] = {
    "desk": {"lr": 3e-4, "batch": 32, "epochs": 20, "warmup_ratio": 0.03, "weight_decay": 0.03},
    "large": {"lr": 2e-5, "batch": 128, "epochs": 2, "warmup_ratio": 0.03, "weight_decay": 0.03},
}


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DataConfig(Section):
    n_train: int = Field(2000, ge=1)
    n_eval: int = Field(200, ge=1)
    seed: int = 0
    frames: int = Field(16, ge=1)
    height: int = Field(32, ge=1)
    width: int = Field(32, ge=1)
    patch: int = Field(8, ge=1)

    @model_validator(mode="after")
    def patch_divides_frame(self) -> "DataConfig":
        if self.height % self.patch or self.width % self.patch:
            raise ValueError(
                f"patch {self.patch} must divide the {self.height}x{self.width} frame"
            )
        return self

    @property
    def patches(self) -> int:
        return (self.height // self.patch) * (self.width // self.patch)


class EncoderConfig(Section):
    d_semantic: int = Field(48, ge=1)
    d_detail: int = Field(32, ge=1)
    seed: int = 1234

    @property
    def d_v(self) -> int:
        return self.d_semantic + self.d_detail


class TrainSection(Section):
    profile: Literal["desk", "large"] = "desk"
    lr: float | None = Field(None, gt=0)
    batch: int | None = Field(None, ge=1)
    epochs: int | None = Field(None, ge=0)
    warmup_ratio: float | None = Field(None, ge=0, le=1)
    weight_decay: float | None = Field(None, ge=0)
    seed: int = 0
    grad_clip: float = Field(1.0, ge=0)
    log_every: int = Field(50, ge=1)
    eval_every_epoch: bool = False

    @model_validator(mode="after")
    def fill_from_profile(self) -> "TrainSection":
        for key, value in PROFILES[self.profile].items():
            if getattr(self, key) is None:
                setattr(self, key, value)
        return self


class EvalSection(Section):
    max_len: int = Field(12, ge=1)


class BenchSection(Section):
    lengths: list[int] = Field(default_factory=lambda: [512, 1024, 2048, 4096, 8192])
    trials: int = Field(5, ge=3)
    d: int = Field(128, ge=1)
    decode_tokens: int = Field(512, ge=1)
    decode_context: int = Field(4096, ge=1)
    warmup: int = Field(2, ge=0)
    memory_steps: int = Field(100, ge=1)

    @field_validator("lengths")
    @classmethod
    def strictly_increasing(cls, value: list[int]) -> list[int]:
        if len(value) < 2:
            raise ValueError("at least two lengths are needed to fit a slope")
        if any(b <= a for a, b in zip(value, value[1:])) or value[0] < 1:
            raise ValueError(f"lengths must be positive and strictly increasing, got {value}")
        return value


class AblateSection(Section):
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2], min_length=1)
    grid: Literal["scan", "branches"] = "scan"


class OutputSection(Section):
    dir: str = "runs/default"


class RunConfig(Section):
    data: DataConfig = Field(default_factory=DataConfig)
    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    ahbs: AhbsConfig = Field(default_factory=AhbsConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainSection = Field(default_factory=TrainSection)
    eval: EvalSection = Field(default_factory=EvalSection)
    bench: BenchSection = Field(default_factory=BenchSection)
    ablate: AblateSection = Field(default_factory=AblateSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def sections_agree(self) -> "RunConfig":
        if self.ahbs.d_model != self.model.d:
            raise ValueError(
                f"ahbs.d_model ({self.ahbs.d_model}) must equal model.d ({self.model.d})"
            )
        return self

    @property
    def output_dir(self) -> Path:
        return Path(self.output.dir)


def _parse_value(text: str) -> Any:
    try:
        return tomllib.loads(f"value = {text}")["value"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(raw: dict[str, Any], assignment: str) -> None:
    """Apply one `section.key=value` override to a nested mapping."""
    key, sep, text = assignment.partition("=")
    path = key.strip().split(".")
    if not sep or len(path) < 2 or not all(path):
        raise ConfigError(f"override {assignment!r} must look like section.key=value")
    node = raw
    for part in path[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"override {assignment!r}: {part} is not a section")
        node = child
    node[path[-1]] = _parse_value(text.strip())


def validate_config(raw: dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}"
            for err in exc.errors()
        )
        raise ConfigError(f"invalid configuration: {problems}") from None


def load_config(
    path: str | Path | None = None,
    overrides: list[str] | None = None,
    seed: int | None = None,
    out: str | None = None,
    base: str | None = None,
) -> RunConfig:
    """File values beat defaults; --set, --seed and --out beat the file.

    `base` is a config echo (e.g. from a checkpoint) that sits between the
    defaults and the file.
    """
    raw: dict[str, Any] = {}
    if base is not None:
        raw = parse_config_echo(base).model_dump()
    if path is not None:
        path = Path(path)
        try:
            with path.open("rb") as fh:
                merge(raw, tomllib.load(fh))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} does not exist") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid TOML: {exc}") from None
    for assignment in overrides or []:
        apply_override(raw, assignment)
    if seed is not None:
        apply_override(raw, f"train.seed={seed}")
    if out is not None:
        raw.setdefault("output", {})["dir"] = out
    config = validate_config(raw)
    logger.debug("resolved configuration:\n%s", echo_config(config))
    return config


def flatten(config: BaseModel) -> dict[str, Any]:
    """Dotted key -> value for every leaf of the schema."""
    flat: dict[str, Any] = {}
    for section, values in config.model_dump().items():
        for key, value in values.items():
            flat[f"{section}.{key}"] = value
    return flat


def echo_config(config: RunConfig) -> str:
    return "".join(f"{key} = {json.dumps(value)}\n" for key, value in flatten(config).items())


def write_config_echo(config: RunConfig, directory: Path) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / CONFIG_ECHO
    path.write_text(echo_config(config), encoding="utf-8")
    return path


def parse_config_echo(text: str) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config echo is not valid TOML: {exc}") from None
    return validate_config(raw)


def merge(target: dict[str, Any], source: dict[str, Any]) -> None:
    for key, value in source.items():
        if isinstance(value, dict) and isinstance(target.get(key), dict):
            merge(target[key], value)
        else:
            target[key] = value
