"""Experiment configuration files and the corrupt-train-evaluate pipeline.

Config files are flat ``key = value`` lines.  Keys are case-insensitive;
spaces and hyphens become underscores, so ``train batchsize`` and
``train_batchsize`` are the same key, and dots mark nesting
(``noise.eta``).  ``#`` starts a comment.  Relative paths are resolved
against the directory holding the config file.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import LabeledDataset, SyntheticSpec, gaussian_blobs, load_classification_csv
from .losses import make_loss
from .model import TrainConfig, TrainRecord, init_mlp, train
from .noise import NoiseModel, corrupt_labels, load_transition_csv
from .numerics import InvalidArgumentError, make_rng
from .schemas import ROBUSTNESS_SCHEMA_VERSION

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ROBUSTNESS_PROTOCOL",
    "SEED_ENV_VAR",
    "build_datasets",
    "load_config",
    "parse_config_text",
    "robustness_comparison",
    "run_experiment",
]

SEED_ENV_VAR = "SYMLOSS_SEED"

# stream keys so that data, noise and model draws never share a generator
_NOISE_STREAM = 0x4015E


class ConfigError(InvalidArgumentError):
    """The config file cannot be parsed or names an invalid value."""


# config key -> (section, field, type)
_KEYS = {
    "train_batchsize": ("train", "batch_size", int),
    "batch_size": ("train", "batch_size", int),
    "total_epoch": ("train", "epochs", int),
    "epochs": ("train", "epochs", int),
    "learning_rate": ("train", "lr", float),
    "lr": ("train", "lr", float),
    "momentum": ("train", "momentum", float),
    "weight_decay": ("train", "weight_decay", float),
    "gradient_bound": ("train", "grad_clip", float),
    "grad_clip": ("train", "grad_clip", float),
    "scheduler": ("train", "schedule", str),
    "schedule": ("train", "schedule", str),
    "t_max": ("train", "T_max", int),
    "eta_min": ("train", "eta_min", float),
    "step_size": ("train", "step_size", int),
    "gamma": ("train", "gamma", float),
    "score_norm": ("train", "score_norm", str),
    "norm_eps": ("train", "norm_eps", float),
    "seed": ("top", "seed", int),
    "loss": ("top", "loss", str),
    "loss.q": ("loss", "q", float),
    "loss.alpha": ("loss", "alpha", float),
    "loss.base": ("loss", "base", str),
    "dataset.kind": ("dataset", "kind", str),
    "dataset.num_classes": ("dataset", "num_classes", int),
    "dataset.per_class": ("dataset", "per_class", int),
    "dataset.dim": ("dataset", "dim", int),
    "dataset.radius": ("dataset", "radius", float),
    "dataset.stddev": ("dataset", "stddev", float),
    "dataset.test_count": ("dataset", "test_count", int),
    "dataset.seed": ("dataset", "seed", int),
    "dataset.train": ("dataset", "train", "path"),
    "dataset.test": ("dataset", "test", "path"),
    "noise.kind": ("noise", "kind", str),
    "noise.eta": ("noise", "eta", float),
    "noise.transition": ("noise", "transition", "path"),
    "model.hidden": ("model", "hidden", "ints"),
    "model.activation": ("model", "activation", str),
    "model.bias": ("model", "bias", "bool"),
    "output": ("output", "record", "path"),
    "output.record": ("output", "record", "path"),
    "output.curve": ("output", "curve", "path"),
}

_SCHEDULE_ALIASES = {"cosine": "cosine", "cosineannealing": "cosine", "cosineannealinglr": "cosine",
                     "step": "step", "steplr": "step", "constant": "constant", "none": "constant"}


def _normalize_key(raw: str) -> str:
    parts = [re.sub(r"[\s\-]+", "_", p.strip().lower()) for p in raw.split(".")]
    return ".".join(parts)


def _convert(value: str, kind, key: str, base_dir: Path):
    try:
        if kind is int:
            f = float(value)
            if not f.is_integer():
                raise ValueError
            return int(f)
        if kind is float:
            return float(value)
        if kind == "path":
            p = Path(value)
            return str(p if p.is_absolute() else base_dir / p)
        if kind == "ints":
            return tuple(int(v) for v in re.split(r"[,\s]+", value) if v)
        if kind == "bool":
            low = value.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError
        return value
    except ValueError:
        raise ConfigError(f"bad value {value!r} for key {key!r}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything ``cmd_train`` needs: data, noise, model, optimiser, outputs."""

    train: TrainConfig = field(default_factory=TrainConfig)
    dataset: dict = field(default_factory=lambda: {"kind": "gaussian_blobs"})
    noise: dict = field(default_factory=lambda: {"kind": "none"})
    model: dict = field(default_factory=lambda: {"hidden": (32, 32), "activation": "relu", "bias": True})
    record_path: str | None = None
    curve_path: str | None = None

    @property
    def seed(self) -> int:
        return self.train.seed

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, train=replace(self.train, seed=int(seed)))

    def describe(self) -> dict:
        """JSON-friendly snapshot of the non-optimiser settings."""
        return {
            "dataset": dict(self.dataset),
            "noise": dict(self.noise),
            "model": {k: list(v) if isinstance(v, tuple) else v for k, v in self.model.items()},
        }


def parse_config_text(text: str, base_dir: str | Path = ".", *, env: dict | None = None) -> ExperimentConfig:
    """Parse config text; the ``SYMLOSS_SEED`` entry of ``env`` (default ``os.environ``) overrides ``seed``."""
    base_dir = Path(base_dir)
    sections: dict[str, dict] = {s: {} for s in ("train", "top", "loss", "dataset", "noise", "model", "output")}
    seen = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = re.split(r"(?:^|\s)#", line, maxsplit=1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        raw_key, value = stripped.split("=", 1)
        key = _normalize_key(raw_key)
        value = value.strip()
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {raw_key.strip()!r}")
        section, name, kind = _KEYS[key]
        if (section, name) in seen:
            raise ConfigError(f"line {lineno}: {raw_key.strip()!r} set twice")
        seen.add((section, name))
        sections[section][name] = _convert(value, kind, key, base_dir)

    env = os.environ if env is None else env
    if env.get(SEED_ENV_VAR, "").strip():
        sections["top"]["seed"] = _convert(env[SEED_ENV_VAR].strip(), int, SEED_ENV_VAR, base_dir)

    tr = dict(sections["train"])
    if "schedule" in tr:
        sched = tr["schedule"].lower()
        if sched not in _SCHEDULE_ALIASES:
            raise ConfigError(f"unknown scheduler {tr['schedule']!r}")
        tr["schedule"] = _SCHEDULE_ALIASES[sched]
    tr["seed"] = sections["top"].get("seed", 0)
    tr["loss_name"] = sections["top"].get("loss", "ce")
    tr["loss_params"] = dict(sorted(sections["loss"].items()))
    try:
        train_cfg = TrainConfig(**tr)
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc)) from None

    dataset = {"kind": "gaussian_blobs", **sections["dataset"]}
    if dataset["kind"] not in ("gaussian_blobs", "csv"):
        raise ConfigError(f"dataset.kind must be gaussian_blobs or csv, got {dataset['kind']!r}")
    if dataset["kind"] == "csv" and not ("train" in dataset and "test" in dataset):
        raise ConfigError("csv datasets need dataset.train and dataset.test")
    noise = {"kind": "none", **sections["noise"]}
    if noise["kind"] not in ("none", "symmetric", "asymmetric"):
        raise ConfigError(f"noise.kind must be none, symmetric or asymmetric, got {noise['kind']!r}")
    model = {"hidden": (32, 32), "activation": "relu", "bias": True, **sections["model"]}
    if model["activation"] not in ("relu", "tanh", "identity"):
        raise ConfigError(f"unknown activation {model['activation']!r}")
    return ExperimentConfig(
        train=train_cfg, dataset=dataset, noise=noise, model=model,
        record_path=sections["output"].get("record"), curve_path=sections["output"].get("curve"),
    )


def load_config(path, *, env: dict | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text, path.parent, env=env)


def build_datasets(cfg: ExperimentConfig) -> tuple[LabeledDataset, LabeledDataset, LabeledDataset]:
    """``(clean_train, noisy_train, clean_test)`` for the config."""
    ds = cfg.dataset
    if ds["kind"] == "csv":
        C = ds.get("num_classes")
        train_data = load_classification_csv(ds["train"], C)
        test_data = load_classification_csv(ds["test"], C or train_data.num_classes)
        if test_data.num_classes != train_data.num_classes:
            C = max(train_data.num_classes, test_data.num_classes)
            train_data = LabeledDataset(train_data.features, train_data.labels, C)
            test_data = LabeledDataset(test_data.features, test_data.labels, C)
    else:
        spec = SyntheticSpec(
            num_classes=ds.get("num_classes", 3), per_class=ds.get("per_class", 1000), dim=ds.get("dim", 2),
            radius=ds.get("radius", 4.0), stddev=ds.get("stddev", 1.0), seed=ds.get("seed", cfg.seed),
        )
        train_data = gaussian_blobs(spec, 0)
        test_total = ds.get("test_count", spec.per_class * spec.num_classes)
        test_data = gaussian_blobs(replace(spec, total=test_total), 1)

    nz = cfg.noise
    C = train_data.num_classes
    if nz["kind"] == "none":
        noisy = train_data
    else:
        if nz["kind"] == "symmetric":
            model = NoiseModel.symmetric(nz.get("eta", 0.0), C)
        else:
            if "transition" not in nz:
                raise ConfigError("asymmetric noise needs noise.transition")
            model = load_transition_csv(nz["transition"])
        noisy = corrupt_labels(train_data, model, make_rng(cfg.seed, _NOISE_STREAM))
    return train_data, noisy, test_data


def run_experiment(cfg: ExperimentConfig) -> TrainRecord:
    """Corrupt the training labels, train a fresh MLP, evaluate on clean test data.

    May raise :class:`symloss.model.TrainingAborted`, whose ``record`` holds
    the epochs completed before the non-finite loss.
    """
    _, noisy, test_data = build_datasets(cfg)
    dims = (noisy.dim, *cfg.model["hidden"], noisy.num_classes)
    model = init_mlp(dims, cfg.model["activation"], bias=cfg.model["bias"], seed=cfg.seed)
    loss = make_loss(cfg.train.loss_name, noisy.num_classes, **cfg.train.loss_params)
    record = train(model, noisy, test_data, cfg.train, loss=loss)
    record.config["experiment"] = cfg.describe()
    return record


# The desk-scale robustness protocol.  The optimiser settings (no weight
# decay, a constant and fairly large step, small batches) are chosen so that
# the network has room to fit flipped labels within 60 epochs; under the
# cosine / weight-decay defaults no loss loses accuracy at all at this scale.
ROBUSTNESS_PROTOCOL = {
    "dataset": {"kind": "gaussian_blobs", "num_classes": 3, "per_class": 1000, "dim": 2,
                "radius": 4.0, "stddev": 1.0, "test_count": 1000},
    "model": {"hidden": (32, 32), "activation": "relu", "bias": True},
    "train": {"epochs": 60, "batch_size": 32, "lr": 0.2, "momentum": 0.9, "weight_decay": 0.0,
              "grad_clip": 5.0, "schedule": "constant"},
    "losses": (("ce", "ce", {}), ("unhinged", "unhinged", {}), ("sgce(0.65)", "sgce", {"q": 0.65}),
               ("alpha_mae(2.0)", "alpha_mae", {"alpha": 2.0})),
    "etas": (0.0, 0.4),
    "seeds": (0, 1, 2, 3, 4),
}


def robustness_comparison(protocol: dict | None = None) -> dict:
    """Mean clean-test accuracy per loss and noise rate over the protocol's seeds.

    ``drop`` is the mean accuracy at the first noise rate minus that at the last.
    """
    proto = ROBUSTNESS_PROTOCOL if protocol is None else protocol
    entries = []
    for label, name, params in proto["losses"]:
        acc = {}
        for eta in proto["etas"]:
            runs = []
            for seed in proto["seeds"]:
                cfg = ExperimentConfig(
                    train=TrainConfig(seed=seed, loss_name=name, loss_params=dict(params), **proto["train"]),
                    dataset=dict(proto["dataset"]),
                    noise={"kind": "symmetric", "eta": eta} if eta > 0 else {"kind": "none"},
                    model=dict(proto["model"]),
                )
                runs.append(run_experiment(cfg).final_test_accuracy)
            acc[repr(float(eta))] = runs
        means = {k: float(np.mean(v)) for k, v in acc.items()}
        first, last = repr(float(proto["etas"][0])), repr(float(proto["etas"][-1]))
        entries.append({"label": label, "loss": name, "params": dict(params), "accuracy": acc,
                        "mean_accuracy": means, "drop": means[first] - means[last]})
    return {
        "schema": ROBUSTNESS_SCHEMA_VERSION,
        "etas": [float(e) for e in proto["etas"]],
        "seeds": [int(s) for s in proto["seeds"]],
        "protocol": {k: _plain(v) for k, v in proto.items() if k not in ("losses", "etas", "seeds")},
        "losses": entries,
    }


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, tuple):
        return [_plain(v) for v in obj]
    return obj
