"""Experiment configuration: flat ``key = value`` text with dotted prefixes.

The format is deliberately primitive: one assignment per line, ``#`` starts
a comment line, keys are dotted paths (``trainer.eta``), and every key must
be in the schema (unknown keys are rejected with their path). Parsed
configs serialize back to canonical text, and every field is echoed into
run outputs for provenance.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Any

from .feedback import FeedbackConfig
from .problems import Task, gen_classification, gen_quadratic, gen_regression, load_libsvm
from .quantizer import NormKind, QuantScheme
from .sim import CodecKind, TrainerConfig

__all__ = [
    "ConfigError",
    "ProblemSpec",
    "TrainerSpec",
    "OutputSpec",
    "ExperimentConfig",
    "parse_config",
    "parse_config_file",
    "serialize_config",
    "build_problem",
    "build_trainer_config",
]


class ConfigError(ValueError):
    pass


@dataclass
class ProblemSpec:
    kind: str = "quadratic"  # quadratic | regression | classification | libsvm
    d: int = 64
    n: int = 1024
    seed: int = 0
    P: int = 1
    noise_sigma: float = 0.5
    a1: float = 1.0
    a2: float = 25.0
    grad_noise: float = 1.0
    density: float = 0.13
    scale_spread: float = 1.75
    n_test: int = 0
    path: str = ""
    task: str = "auto"  # libsvm only: auto | regression | classification


@dataclass
class TrainerSpec:
    eta: float = 0.02
    batch_size: int = 10
    T: int = 1000
    codec: str = "ecq"
    s: int = 4
    norm: str = "l2"
    bucket_size: int = 0  # 0 means one bucket spanning the whole vector
    alpha: float = 0.2
    beta: float = 0.9
    seed: int = 1


@dataclass
class OutputSpec:
    dir: str = "out"
    prefix: str = "run"


@dataclass
class ExperimentConfig:
    problem: ProblemSpec
    trainer: TrainerSpec
    output: OutputSpec
    repetitions: int = 1


_SECTIONS = {"problem": ProblemSpec, "trainer": TrainerSpec, "output": OutputSpec}


def _coerce(key: str, text: str, target_type: type) -> Any:
    try:
        if target_type is bool:
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ValueError("expected a boolean")
        return target_type(text)
    except ValueError as exc:
        raise ConfigError(f"config key '{key}': {exc}") from None


def parse_config(text: str) -> ExperimentConfig:
    specs = {name: cls() for name, cls in _SECTIONS.items()}
    field_types = {
        name: {f.name: f.type for f in fields(cls)} for name, cls in _SECTIONS.items()
    }
    repetitions = 1
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        seen.add(key)
        if key == "repetitions":
            repetitions = _coerce(key, value, int)
            continue
        section, _, attr = key.partition(".")
        if section not in _SECTIONS or not attr:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        type_name = field_types[section].get(attr)
        if type_name is None:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        target = {"int": int, "float": float, "str": str, "bool": bool}[type_name]
        setattr(specs[section], attr, _coerce(key, value, target))
    cfg = ExperimentConfig(
        problem=specs["problem"],
        trainer=specs["trainer"],
        output=specs["output"],
        repetitions=repetitions,
    )
    _validate(cfg)
    return cfg


def parse_config_file(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.problem.kind not in ("quadratic", "regression", "classification", "libsvm"):
        raise ConfigError(f"config key 'problem.kind': unknown kind '{cfg.problem.kind}'")
    if cfg.problem.kind == "libsvm" and not cfg.problem.path:
        raise ConfigError("config key 'problem.path': required for libsvm problems")
    if cfg.problem.task not in ("auto", "regression", "classification"):
        raise ConfigError(f"config key 'problem.task': unknown task '{cfg.problem.task}'")
    try:
        CodecKind(cfg.trainer.codec)
    except ValueError:
        raise ConfigError(
            f"config key 'trainer.codec': unknown codec '{cfg.trainer.codec}'"
        ) from None
    if cfg.trainer.norm not in ("l2", "linf"):
        raise ConfigError(f"config key 'trainer.norm': unknown norm '{cfg.trainer.norm}'")
    if cfg.repetitions < 1:
        raise ConfigError("config key 'repetitions': must be >= 1")


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = []
    for section, spec in (
        ("problem", cfg.problem),
        ("trainer", cfg.trainer),
        ("output", cfg.output),
    ):
        for f in fields(spec):
            lines.append(f"{section}.{f.name} = {getattr(spec, f.name)}")
    lines.append(f"repetitions = {cfg.repetitions}")
    return "\n".join(lines) + "\n"


def build_problem(spec: ProblemSpec):
    """Materialize the problem object a config describes."""
    if spec.kind == "quadratic":
        return gen_quadratic(
            d=spec.d, n=spec.n, p_workers=spec.P, seed=spec.seed,
            conditioning=(spec.a1, spec.a2), grad_noise=spec.grad_noise,
        )
    if spec.kind == "regression":
        ds, _ = gen_regression(
            d=spec.d, n=spec.n, noise_sigma=spec.noise_sigma, seed=spec.seed,
            p_workers=spec.P,
        )
        return ds
    if spec.kind == "classification":
        ds, _ = gen_classification(
            d=spec.d, n=spec.n, seed=spec.seed, density=spec.density,
            scale_spread=spec.scale_spread, n_test=spec.n_test, p_workers=spec.P,
        )
        return ds
    task = {"auto": None, "regression": Task.SQUARED_LOSS, "classification": Task.LOG_LOSS}[
        spec.task
    ]
    return load_libsvm(spec.path, task=task, p_workers=spec.P, cache=True)


def build_trainer_config(cfg: ExperimentConfig, dim: int) -> TrainerConfig:
    t = cfg.trainer
    bucket = t.bucket_size if t.bucket_size > 0 else dim
    return TrainerConfig(
        eta=t.eta,
        p_workers=cfg.problem.P,
        batch_size=t.batch_size,
        iterations=t.T,
        codec=CodecKind(t.codec),
        scheme=QuantScheme(
            s=t.s,
            norm_kind=NormKind.L2 if t.norm == "l2" else NormKind.LINF,
            bucket_size=bucket,
        ),
        feedback=FeedbackConfig(alpha=t.alpha, beta=t.beta),
        seed=t.seed,
    )
