"""Run configuration (flat key=value text) and persisted run artifacts
(JSON manifest plus a raw float64 samples block)."""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass

import numpy as np

CONFIG_DEFAULTS: dict[str, object] = {
    # data
    "train_images": "",
    "train_labels": "",
    "test_images": "",
    "test_labels": "",
    "features_csv": "",
    "labels_keep": "0,1,2,3,4,5,6,7",
    "n_train": 1200,
    "n_val": 200,
    "n_test": 2000,
    "n_ood": 2000,
    "ood_seed": 0,
    # architecture
    "arch": "cnn",
    "mlp_widths": "",
    # model
    "v": 0.1,
    "s": 0.1,
    "t": 1.0,
    # sampler
    "method": "smc",
    "n": 10,
    "p": 1,
    "rho": 0.5,
    "eta": 0.05,
    "max_mutation_steps": 20,
    "kernel": "hmc",
    "step_size": 0.0,  # 0 means pilot-tuned
    "leapfrog": 1,
    "mcmc_steps": 80,
    # optimizer
    "max_epochs": 160,
    "batch": 64,
    "lr": 0.01,
    "patience": 10,
    # misc
    "seed": 0,
    "output_dir": "runs",
}

_BOOL_KEYS: set[str] = set()


class ConfigError(ValueError):
    pass


def parse_config_text(text: str) -> dict[str, object]:
    """Parse flat ``key = value`` lines; '#' starts a comment. Unknown keys
    are rejected; missing keys take their documented defaults."""
    cfg = dict(CONFIG_DEFAULTS)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        cfg.update(_coerce(key, value, lineno))
    return cfg


def _coerce(key: str, value: str, lineno: int | None = None) -> dict[str, object]:
    where = "" if lineno is None else f"line {lineno}: "
    if key not in CONFIG_DEFAULTS:
        raise ConfigError(f"{where}unknown config key {key!r}")
    default = CONFIG_DEFAULTS[key]
    try:
        if isinstance(default, bool):
            coerced: object = value.lower() in ("1", "true", "yes")
        elif isinstance(default, int):
            coerced = int(value)
        elif isinstance(default, float):
            coerced = float(value)
        else:
            coerced = value
    except ValueError:
        raise ConfigError(f"{where}bad value {value!r} for key {key!r}") from None
    return {key: coerced}


def load_config(path: str | None, overrides: list[str] = ()) -> dict[str, object]:
    """Config file (optional) plus command-line ``key=value`` overrides."""
    cfg = dict(CONFIG_DEFAULTS)
    if path:
        with open(path) as f:
            cfg = parse_config_text(f.read())
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg.update(_coerce(key.strip(), value.strip()))
    return cfg


@dataclass(frozen=True)
class RunArtifact:
    """One persisted sampler (or MAP) run: manifest dict plus a samples block
    of shape (n, d), stored as little-endian float64, row-major."""

    manifest: dict
    samples: np.ndarray

    def __eq__(self, other):
        return (
            isinstance(other, RunArtifact)
            and self.manifest == other.manifest
            and np.array_equal(self.samples, other.samples)
        )


def _samples_bytes(samples: np.ndarray) -> bytes:
    return np.ascontiguousarray(samples, dtype="<f8").tobytes()


def make_artifact(
    config: dict,
    samples: np.ndarray,
    kind: str,
    log_z: float = 0.0,
    epochs_used: float = 0.0,
    schedule: dict | None = None,
    seed: int = 0,
    timestamp: str | None = None,
) -> RunArtifact:
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    blob = _samples_bytes(samples)
    manifest = {
        "kind": kind,
        "config": {k: config.get(k, v) for k, v in CONFIG_DEFAULTS.items()},
        "seed": seed,
        "log_z": log_z,
        "epochs_used": epochs_used,
        "schedule": schedule or {},
        "n_samples": int(samples.shape[0]),
        "dim": int(samples.shape[1]),
        "timestamp": timestamp or time.strftime("%Y-%m-%dT%H:%M:%S"),
        "samples_sha256": hashlib.sha256(blob).hexdigest(),
    }
    return RunArtifact(manifest=manifest, samples=samples)


def save_artifact(prefix: str, artifact: RunArtifact) -> None:
    """Write ``{prefix}.manifest.json`` and ``{prefix}.samples.bin``."""
    os.makedirs(os.path.dirname(prefix) or ".", exist_ok=True)
    with open(prefix + ".samples.bin", "wb") as f:
        f.write(_samples_bytes(artifact.samples))
    with open(prefix + ".manifest.json", "w") as f:
        json.dump(artifact.manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def load_artifact(prefix: str) -> RunArtifact:
    try:
        with open(prefix + ".manifest.json") as f:
            manifest = json.load(f)
    except FileNotFoundError:
        raise FileNotFoundError(
            f"no artifact at {prefix!r}; run the producing command first"
        ) from None
    with open(prefix + ".samples.bin", "rb") as f:
        blob = f.read()
    digest = hashlib.sha256(blob).hexdigest()
    if digest != manifest["samples_sha256"]:
        raise ValueError(
            f"{prefix}: samples block hash {digest} does not match manifest"
        )
    samples = np.frombuffer(blob, dtype="<f8").reshape(
        manifest["n_samples"], manifest["dim"]
    )
    return RunArtifact(manifest=manifest, samples=samples.astype(float))
