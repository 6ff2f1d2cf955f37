"""Experiment configuration: flat key=value files with dotted sections.

Unknown keys, malformed values, and missing kind-specific requirements are
rejected with the offending key in the message. The same file format is
echoed back into every report directory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .corpus import DriftConfig
from .model import ModelDims, TrainConfig

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "config_lines"]

EXPERIMENT_KINDS = ("temporal-effect", "adapt-compare", "ablation")

DEFAULT_METRICS = ("f1_macro", "f1_samples", "auc_macro", "fair")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    corpus_source: str = "generate"
    corpus_path: str | None = None
    boundaries: tuple[int, ...] | None = None
    min_tokens: int = 10
    drift: DriftConfig = field(default_factory=DriftConfig)
    dims: ModelDims = field(default_factory=ModelDims)
    top_k: int = 2
    aux_weight: float = 0.01
    num_experts: int | None = None  # default: number of source domains
    train: TrainConfig = field(default_factory=TrainConfig)
    metrics: tuple[str, ...] = DEFAULT_METRICS
    out_dir: str = "report"
    literal_gating: bool = False
    threads: int = 1
    figures: bool = True

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(
                f"experiment.kind must be one of {EXPERIMENT_KINDS}, got {self.kind!r}"
            )
        if self.corpus_source not in ("generate", "load"):
            raise ConfigError("corpus.source must be 'generate' or 'load'")
        if self.corpus_source == "load":
            if not self.corpus_path:
                raise ConfigError("corpus.path is required when corpus.source=load")
            if not self.boundaries or len(self.boundaries) < 2:
                raise ConfigError("corpus.boundaries is required when corpus.source=load")
        if self.top_k < 1:
            raise ConfigError("mote.top_k must be at least 1")
        if self.aux_weight < 0:
            raise ConfigError("mote.aux_weight must be non-negative")
        if self.threads < 1:
            raise ConfigError("run.threads must be at least 1")
        unknown = [m for m in self.metrics if m not in DEFAULT_METRICS]
        if unknown:
            raise ConfigError(f"metrics.list contains unknown metrics {unknown}")


def _parse_bool(key: str, raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected an integer, got {raw!r}") from exc


def _parse_float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from exc


def _parse_int_list(key: str, raw: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in raw.split(",") if part.strip() != "")
    except ValueError as exc:
        raise ConfigError(f"{key}: expected comma-separated integers, got {raw!r}") from exc


_DRIFT_KEYS = {
    "corpus.vocab_size": ("vocab_size", _parse_int),
    "corpus.classes": ("num_classes", _parse_int),
    "corpus.domains": ("num_domains", _parse_int),
    "corpus.docs_per_domain": ("docs_per_domain", _parse_int),
    "corpus.doc_len_min": ("doc_len_min", _parse_int),
    "corpus.doc_len_max": ("doc_len_max", _parse_int),
    "corpus.token_drift": ("token_drift", _parse_float),
    "corpus.label_shift": ("label_shift", _parse_float),
    "corpus.group_balance": ("group_balance", _parse_float),
    "corpus.seed": ("seed", _parse_int),
}

_DIM_KEYS = {
    "model.d": ("d", _parse_int),
    "model.d_emb": ("d_emb", _parse_int),
    "model.hash_buckets": ("hash_buckets", _parse_int),
    "model.d_hidden": ("d_hidden", _parse_int),
}

_TRAIN_KEYS = {
    "train.warmup_epochs": ("warmup_epochs", _parse_int),
    "train.adapt_epochs": ("adapt_epochs", _parse_int),
    "train.source_epochs": ("source_epochs", _parse_int),
    "train.batch_size": ("batch_size", _parse_int),
    "train.learning_rate": ("learning_rate", _parse_float),
    "train.source_learning_rate": ("source_learning_rate", _parse_float),
    "train.seeds": ("seeds", _parse_int_list),
    "train.no_warmup": ("no_warmup", _parse_bool),
    "train.no_router": ("no_router", _parse_bool),
    "train.no_evaluator": ("no_evaluator", _parse_bool),
    "train.unfreeze_encoder": ("unfreeze_encoder", _parse_bool),
}

def _parse_str(key: str, raw: str) -> str:
    return raw


def _parse_str_list(key: str, raw: str) -> tuple[str, ...]:
    return tuple(m.strip() for m in raw.split(",") if m.strip())


_TOP_KEYS = {
    "experiment.kind": ("kind", _parse_str),
    "corpus.source": ("corpus_source", _parse_str),
    "corpus.path": ("corpus_path", _parse_str),
    "corpus.boundaries": ("boundaries", _parse_int_list),
    "corpus.min_tokens": ("min_tokens", _parse_int),
    "mote.top_k": ("top_k", _parse_int),
    "mote.aux_weight": ("aux_weight", _parse_float),
    "mote.experts": ("num_experts", _parse_int),
    "metrics.list": ("metrics", _parse_str_list),
    "output.dir": ("out_dir", _parse_str),
    "run.literal_gating": ("literal_gating", _parse_bool),
    "run.threads": ("threads", _parse_int),
    "report.figures": ("figures", _parse_bool),
}


def parse_config(path: str | Path) -> ExperimentConfig:
    """Read a key=value config file; every key must be known."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    raw: dict[str, str] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key in raw:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key}")
            raw[key] = value.strip()
    top: dict = {}
    drift_kwargs: dict = {}
    dim_kwargs: dict = {}
    train_kwargs: dict = {}
    for key, value in raw.items():
        if key in _TOP_KEYS:
            name, parse = _TOP_KEYS[key]
            top[name] = parse(key, value)
        elif key in _DRIFT_KEYS:
            name, parse = _DRIFT_KEYS[key]
            drift_kwargs[name] = parse(key, value)
        elif key in _DIM_KEYS:
            name, parse = _DIM_KEYS[key]
            dim_kwargs[name] = parse(key, value)
        elif key in _TRAIN_KEYS:
            name, parse = _TRAIN_KEYS[key]
            train_kwargs[name] = parse(key, value)
        else:
            raise ConfigError(f"unknown config key: {key}")
    if "kind" not in top:
        raise ConfigError("experiment.kind is required")
    try:
        return ExperimentConfig(
            drift=DriftConfig(**drift_kwargs),
            dims=ModelDims(**dim_kwargs),
            train=TrainConfig(**train_kwargs),
            **top,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def config_lines(cfg: ExperimentConfig) -> list[str]:
    """Resolved key=value lines, sorted by key, suitable for echoing."""
    values: dict[str, object] = {
        "experiment.kind": cfg.kind,
        "corpus.source": cfg.corpus_source,
        "corpus.min_tokens": cfg.min_tokens,
        "mote.top_k": cfg.top_k,
        "mote.aux_weight": cfg.aux_weight,
        "metrics.list": ",".join(cfg.metrics),
        "output.dir": cfg.out_dir,
        "run.literal_gating": str(cfg.literal_gating).lower(),
        "run.threads": cfg.threads,
        "report.figures": str(cfg.figures).lower(),
    }
    if cfg.corpus_path is not None:
        values["corpus.path"] = cfg.corpus_path
    if cfg.boundaries is not None:
        values["corpus.boundaries"] = ",".join(str(b) for b in cfg.boundaries)
    if cfg.num_experts is not None:
        values["mote.experts"] = cfg.num_experts
    for key, (name, _) in _DRIFT_KEYS.items():
        values[key] = getattr(cfg.drift, name)
    for key, (name, _) in _DIM_KEYS.items():
        values[key] = getattr(cfg.dims, name)
    for key, (name, _) in _TRAIN_KEYS.items():
        value = getattr(cfg.train, name)
        if name == "seeds":
            value = ",".join(str(s) for s in value)
        elif isinstance(value, bool):
            value = str(value).lower()
        values[key] = value
    return [f"{key}={values[key]}" for key in sorted(values)]
