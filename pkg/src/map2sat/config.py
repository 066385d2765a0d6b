"""Run configuration: flat key=value files, CLI overrides, run manifests.

The config file format is deliberately flat (one ``key = value`` per line,
``#`` comments) so a run manifest is both human-diffable and directly
reusable as a config file. Unknown keys are rejected with the closest
valid key named.
"""

from __future__ import annotations

import difflib
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .discriminator import DiscriminatorSpec
from .generator import GeneratorSpec
from .optim import AdamConfig
from .pipeline import JitterSpec

MANIFEST_KEYS = ("manifest_version", "artifact_version", "dataset_fingerprint",
                 "started_at", "kernel_backend", "data_dir")


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    """Optimizer and loop hyperparameters."""

    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-7
    lambda_l1: float = 100.0
    steps: int = 200
    sample_every: int = 100
    checkpoint_every: int = 100
    seed: int = 0
    batch_size: int = 1

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError(f"betas must be in [0, 1): {self.beta1}, {self.beta2}")
        if self.lambda_l1 < 0:
            raise ConfigError(f"lambda_l1 must be >= 0, got {self.lambda_l1}")
        if self.batch_size != 1:
            raise ConfigError("only batch_size 1 is supported")

    @property
    def adam(self) -> AdamConfig:
        return AdamConfig(self.lr, self.beta1, self.beta2, self.epsilon)


# key -> (type, default, help). Defaults marked "pix2pix setting" follow the
# standard pix2pix recipe; the rest are artifact choices.
CONFIG_SCHEMA: dict[str, tuple] = {
    "seed": (int, 0, "base seed for every random stream"),
    "steps": (int, 200, "number of training steps"),
    "lr": (float, 2e-4, "Adam learning rate (pix2pix setting: 2e-4)"),
    "beta1": (float, 0.5, "Adam first-moment decay (pix2pix setting: 0.5)"),
    "beta2": (float, 0.999, "Adam second-moment decay"),
    "adam_epsilon": (float, 1e-7, "Adam denominator epsilon"),
    "lambda_l1": (float, 100.0, "weight of the L1 term in the generator loss"),
    "batch_size": (int, 1, "images per step (only 1 supported)"),
    "sample_every": (int, 100, "write a preview triptych every N steps (0 = never)"),
    "checkpoint_every": (int, 100, "write a checkpoint every N steps (0 = final only)"),
    "resize_to": (int, 286, "jitter upscale size (pix2pix setting: 286)"),
    "crop_to": (int, 256, "training crop = network input size (pix2pix setting: 256)"),
    "mirror_prob": (float, 0.5, "probability of a horizontal flip"),
    "resize_method": (str, "nearest", "nearest or bilinear"),
    "pair_order": (str, "map-left", "which half of a combined file is the map"),
    "enc_filters": (tuple, (64, 128, 256, 512, 512, 512, 512, 512),
                    "generator encoder filters (pix2pix setting)"),
    "dec_filters": (tuple, (512, 512, 512, 512, 256, 128, 64),
                    "generator decoder filters (pix2pix setting)"),
    "dropout_layers": (int, 3, "leading decoder levels with dropout"),
    "dropout_rate": (float, 0.5, "decoder dropout rate"),
    "disc_filters": (tuple, (64, 128, 256), "discriminator downsample filters"),
    "disc_extra_filters": (int, 256, "filters of the k3 conv after the downsamples"),
    "disc_deep_filters": (int, 512, "filters of the bias-free k4 conv"),
    "leaky_slope": (float, 0.2, "LeakyReLU negative slope"),
    "bn_epsilon": (float, 1e-5, "batchnorm variance epsilon"),
}


@dataclass
class RunConfig:
    """Everything a training run needs, resolvable to/from flat keys."""

    values: dict = field(default_factory=dict)

    def __post_init__(self):
        resolved = {k: spec[1] for k, spec in CONFIG_SCHEMA.items()}
        for k, v in self.values.items():
            if k not in CONFIG_SCHEMA:
                raise ConfigError(_unknown_key_message(k))
            resolved[k] = v
        self.values = resolved
        self.train  # validate eagerly

    def __getattr__(self, key):
        values = object.__getattribute__(self, "values")
        if key in values:
            return values[key]
        raise AttributeError(key)

    @property
    def train(self) -> TrainConfig:
        v = self.values
        return TrainConfig(lr=v["lr"], beta1=v["beta1"], beta2=v["beta2"],
                           epsilon=v["adam_epsilon"], lambda_l1=v["lambda_l1"],
                           steps=v["steps"], sample_every=v["sample_every"],
                           checkpoint_every=v["checkpoint_every"], seed=v["seed"],
                           batch_size=v["batch_size"])

    @property
    def generator_spec(self) -> GeneratorSpec:
        v = self.values
        return GeneratorSpec(enc_filters=v["enc_filters"], dec_filters=v["dec_filters"],
                             dropout_layers=v["dropout_layers"],
                             dropout_rate=v["dropout_rate"],
                             leaky_slope=v["leaky_slope"], bn_epsilon=v["bn_epsilon"])

    @property
    def discriminator_spec(self) -> DiscriminatorSpec:
        v = self.values
        return DiscriminatorSpec(down_filters=v["disc_filters"],
                                 extra_filters=v["disc_extra_filters"],
                                 deep_filters=v["disc_deep_filters"],
                                 leaky_slope=v["leaky_slope"],
                                 bn_epsilon=v["bn_epsilon"])

    @property
    def jitter_spec(self) -> JitterSpec:
        v = self.values
        return JitterSpec(resize_to=v["resize_to"], crop_to=v["crop_to"],
                          mirror_prob=v["mirror_prob"], method=v["resize_method"])

    def validate_network_sizes(self) -> None:
        s = self.generator_spec.input_size
        if self.values["crop_to"] != s:
            raise ConfigError(
                f"crop_to ({self.values['crop_to']}) must equal the generator "
                f"input size ({s} for {len(self.values['enc_filters'])} encoder levels)")

    def format_flat(self) -> str:
        lines = [f"{k} = {_format_value(self.values[k])}" for k in CONFIG_SCHEMA]
        return "\n".join(lines) + "\n"


def _format_value(v) -> str:
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _unknown_key_message(key: str) -> str:
    close = difflib.get_close_matches(key, CONFIG_SCHEMA.keys(), n=1)
    hint = f"; did you mean {close[0]!r}?" if close else ""
    return (f"unknown config key {key!r}{hint} "
            f"(valid keys: {', '.join(sorted(CONFIG_SCHEMA))})")


def parse_value(key: str, raw: str):
    if key not in CONFIG_SCHEMA:
        raise ConfigError(_unknown_key_message(key))
    typ = CONFIG_SCHEMA[key][0]
    raw = raw.strip()
    try:
        if typ is tuple:
            return tuple(int(x) for x in raw.split(",") if x.strip())
        return typ(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from exc


def parse_flat(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; manifest metadata keys are skipped."""
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key in MANIFEST_KEYS:
            continue
        values[key] = parse_value(key, raw)
    return values


def load_config(path: str | os.PathLike | None, overrides: dict | None = None) -> RunConfig:
    values: dict = {}
    if path is not None:
        values.update(parse_flat(Path(path).read_text(), source=str(path)))
    if overrides:
        values.update(overrides)
    return RunConfig(values)


def write_manifest(path: str | os.PathLike, cfg: RunConfig, *,
                   artifact_version: str, dataset_fingerprint: str,
                   started_at: str, kernel_backend: str, data_dir: str) -> None:
    """Resolved config plus provenance, written once before step 0.

    The file parses back as a config, so re-running against the same data
    reproduces the run.
    """
    meta = [
        "manifest_version = 1",
        f"artifact_version = {artifact_version}",
        f"dataset_fingerprint = {dataset_fingerprint}",
        f"started_at = {started_at}",
        f"kernel_backend = {kernel_backend}",
        f"data_dir = {data_dir}",
    ]
    Path(path).write_text("\n".join(meta) + "\n" + cfg.format_flat())
