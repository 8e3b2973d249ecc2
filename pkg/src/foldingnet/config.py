"""INI-style run configuration with a closed schema.

Every key has a type and a default; unknown sections or keys are errors.
Values from the file are overridden by ``section.key=value`` pairs.
"""
from __future__ import annotations

import configparser
import hashlib
import json

from .features import ClassifierConfig
from .model import GridSpec, ModelConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text):
    return tuple(int(t) for t in str(text).replace(",", " ").split())


def _floats(text):
    return tuple(float(t) for t in str(text).replace(",", " ").split())


def _str(text):
    return str(text).strip()


SCHEMA = {
    "run": {"seed": (int, 0), "out_dir": (_str, "out")},
    "data": {
        "manifest": (_str, ""), "test_manifest": (_str, ""),
        "n_points": (int, 256), "per_class": (int, 100), "test_fraction": (float, 0.25),
    },
    "model": {
        "codeword": (int, 512), "k": (int, 16), "folds": (int, 2),
        "grid_dim": (int, 2), "grid_m": (int, 225), "grid_mode": (_str, "regular"),
        "grid_extent": (float, 0.5), "encoder": (_str, "graph"), "decoder": (_str, "folding"),
        "point_widths": (_ints, (64, 64, 64)), "graph_widths": (_ints, (128, 1024)),
        "head_widths": (_ints, (512,)), "fold_hidden": (_ints, (512, 512)),
        "fc_hidden": (_ints, (1024, 2048)), "include_self": (_bool, True), "graph_relu": (_bool, True),
    },
    "train": {
        "lr": (float, 1e-4), "beta1": (float, 0.9), "beta2": (float, 0.999), "eps": (float, 1e-8),
        "weight_decay": (float, 1e-6), "batch_size": (int, 1), "iterations": (int, 2000),
        "augment_rotations": (_bool, True), "noise_fraction": (float, 0.0),
        "snapshot_every": (int, 0), "checkpoint_every": (int, 0),
    },
    "classifier": {"margin": (float, 1.0), "l2": (float, 1e-4), "epochs": (int, 1000), "lr": (float, 0.1)},
    "eval": {
        "fractions": (_floats, (0.01, 0.02, 0.05, 0.075, 0.1, 0.15, 0.2, 1.0)),
        "steps": (int, 8), "noise_fraction": (float, 0.05),
    },
}


class RunConfig:
    def __init__(self, values: dict):
        self.values = values

    def __getitem__(self, key: str):
        section, name = key.split(".", 1)
        return self.values[section][name]

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls({s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()})

    @classmethod
    def load(cls, path=None, overrides=()) -> "RunConfig":
        cfg = cls.defaults()
        if path:
            parser = configparser.ConfigParser(interpolation=None)
            parser.optionxform = str
            try:
                with open(path) as fh:
                    parser.read_file(fh)
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
            except configparser.Error as exc:
                raise ConfigError(f"{path}: {exc}") from None
            for section in parser.sections():
                for key, value in parser.items(section):
                    cfg.set(section, key, value)
        for item in overrides:
            if "=" not in item or "." not in item.split("=", 1)[0]:
                raise ConfigError(f"override must look like section.key=value, got {item!r}")
            lhs, value = item.split("=", 1)
            section, key = lhs.split(".", 1)
            cfg.set(section, key, value)
        cfg.validate()
        return cfg

    def set(self, section: str, key: str, value) -> None:
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown config key {section}.{key}")
        parse = SCHEMA[section][key][0]
        try:
            self.values[section][key] = parse(value) if isinstance(value, str) else value
        except ValueError as exc:
            raise ConfigError(f"bad value for {section}.{key}: {exc}") from None

    def validate(self) -> None:
        try:
            self.model_config()
            self.train_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self["data.n_points"] <= self["model.k"]:
            raise ConfigError("data.n_points must exceed model.k")
        if not 0 <= self["data.test_fraction"] < 1:
            raise ConfigError("data.test_fraction must be in [0, 1)")

    def model_config(self) -> ModelConfig:
        s = self.values["model"]
        grid = GridSpec(dim=s["grid_dim"], m=s["grid_m"], mode=s["grid_mode"], extent=s["grid_extent"])
        return ModelConfig(codeword=s["codeword"], k=s["k"], point_widths=s["point_widths"],
                           graph_widths=s["graph_widths"], head_widths=s["head_widths"],
                           fold_hidden=s["fold_hidden"], folds=s["folds"], grid=grid,
                           encoder=s["encoder"], decoder=s["decoder"], fc_hidden=s["fc_hidden"],
                           fc_points=self["data.n_points"], include_self=s["include_self"],
                           graph_relu=s["graph_relu"])

    def train_config(self) -> TrainConfig:
        return TrainConfig(seed=self["run.seed"], **self.values["train"])

    def classifier_config(self) -> ClassifierConfig:
        return ClassifierConfig(**self.values["classifier"])

    def to_dict(self) -> dict:
        return {s: {k: list(v) if isinstance(v, tuple) else v for k, v in keys.items()}
                for s, keys in self.values.items()}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def dump(self, path) -> None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        for s, keys in self.to_dict().items():
            parser[s] = {k: " ".join(map(str, v)) if isinstance(v, list) else str(v)
                         for k, v in keys.items()}
        with open(path, "w") as fh:
            parser.write(fh)
