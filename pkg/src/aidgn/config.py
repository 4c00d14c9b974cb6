"""Strict run configuration: JSON with sections task / model / train / loss
/ io. Unknown keys are rejected and every value is validated before any
command does work, so a typo cannot silently change an experiment."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ConfigError
from .loss import AidgnHyper
from .synth import SyntheticSpec
from .train import MODES, TrainConfig

_SECTIONS = ("task", "model", "train", "loss", "io")


@dataclass
class ModelConfig:
    hidden_dims: list[int] = field(default_factory=lambda: [32])
    latent_dim: int | None = None
    activation: str = "softplus"


@dataclass
class IoConfig:
    out_dir: str = "runs/out"
    eval_interval: int = 100
    figures: bool = True


@dataclass
class RunConfig:
    task: SyntheticSpec
    model: ModelConfig
    train: TrainConfig
    loss: AidgnHyper
    mode: str
    io: IoConfig

    def with_seed(self, seed: int) -> "RunConfig":
        """Same configuration with the data and training seeds replaced."""
        from dataclasses import replace

        return RunConfig(
            task=replace(self.task, seed=seed),
            model=self.model,
            train=replace(self.train, seed=seed),
            loss=self.loss,
            mode=self.mode,
            io=self.io,
        )


def _require(cond: bool, key: str, message: str) -> None:
    if not cond:
        raise ConfigError(key, message)


def _check_keys(section: str, given: dict, allowed: set[str]) -> None:
    for key in given:
        if key not in allowed:
            raise ConfigError(f"{section}.{key}", "unknown key")


def _number(raw: dict, section: str, key: str, default, *, low=None, high=None, integer=False):
    value = raw.get(key, default)
    kind = (int,) if integer else (int, float)
    _require(isinstance(value, kind) and not isinstance(value, bool), f"{section}.{key}",
             "must be an integer" if integer else "must be a number")
    if low is not None:
        _require(value > low[0] if low[1] else value >= low[0], f"{section}.{key}",
                 f"must be {'>' if low[1] else '>='} {low[0]}")
    if high is not None:
        _require(value <= high, f"{section}.{key}", f"must be <= {high}")
    return value


def _parse_task(raw: dict) -> SyntheticSpec:
    allowed = {
        "latent_dim", "n_classes", "n_domains", "kappa_gen", "source_means",
        "target_lower", "target_width", "samples_per_class", "observation",
        "violation", "seed",
    }
    _check_keys("task", raw, allowed)
    latent_dim = _number(raw, "task", "latent_dim", 16, low=(2, False), integer=True)
    n_classes = _number(raw, "task", "n_classes", 5, low=(2, False), integer=True)
    n_domains = _number(raw, "task", "n_domains", 3, low=(1, False), integer=True)
    kappa_gen = _number(raw, "task", "kappa_gen", 20.0, low=(0.0, False))
    means = raw.get("source_means", [3.0, 5.0, 8.0])
    _require(isinstance(means, list) and len(means) == n_domains,
             "task.source_means", f"must list one mean per domain ({n_domains})")
    _require(all(isinstance(m, (int, float)) and not isinstance(m, bool) and m > 0 for m in means),
             "task.source_means", "all entries must be > 0")
    target_lower = _number(raw, "task", "target_lower", 10.0, low=(0.0, False))
    target_width = _number(raw, "task", "target_width", 6.0, low=(0.0, True))
    samples = _number(raw, "task", "samples_per_class", 200, low=(1, False), integer=True)
    observation = raw.get("observation", "rotation")
    _require(observation in ("identity", "rotation"), "task.observation",
             "must be 'identity' or 'rotation'")
    violation_raw = raw.get("violation", {"kind": "none"})
    _require(isinstance(violation_raw, dict), "task.violation", "must be an object")
    _check_keys("task.violation", violation_raw, {"kind", "angle"})
    kind = violation_raw.get("kind", "none")
    _require(kind in ("none", "angular_shift"), "task.violation.kind",
             "must be 'none' or 'angular_shift'")
    angle = _number(violation_raw, "task.violation", "angle", 0.0, low=(0.0, False))
    seed = _number(raw, "task", "seed", 0, low=(0, False), integer=True)
    return SyntheticSpec(
        latent_dim=latent_dim,
        n_classes=n_classes,
        n_domains=n_domains,
        kappa_gen=float(kappa_gen),
        source_means=tuple(float(m) for m in means),
        target_lower=float(target_lower),
        target_width=float(target_width),
        samples_per_class=samples,
        observation=observation,
        violation=kind,
        violation_angle=float(angle),
        seed=seed,
    )


def _parse_model(raw: dict) -> ModelConfig:
    _check_keys("model", raw, {"hidden_dims", "latent_dim", "activation"})
    hidden = raw.get("hidden_dims", [32])
    _require(isinstance(hidden, list) and all(isinstance(h, int) and h > 0 for h in hidden),
             "model.hidden_dims", "must be a list of positive integers")
    latent = raw.get("latent_dim")
    if latent is not None:
        _require(isinstance(latent, int) and latent >= 2, "model.latent_dim",
                 "must be an integer >= 2")
    activation = raw.get("activation", "softplus")
    _require(activation in ("softplus", "tanh", "relu", "identity"), "model.activation",
             "must be one of softplus, tanh, relu, identity")
    return ModelConfig(hidden_dims=list(hidden), latent_dim=latent, activation=activation)


def _parse_train(raw: dict, eval_interval: int) -> TrainConfig:
    allowed = {"learning_rate", "iterations", "batch_per_domain", "seed", "val_fraction"}
    _check_keys("train", raw, allowed)
    lr = _number(raw, "train", "learning_rate", 1e-3, low=(0.0, True))
    iters = _number(raw, "train", "iterations", 2000, low=(1, False), integer=True)
    batch = _number(raw, "train", "batch_per_domain", 32, low=(1, False), integer=True)
    seed = _number(raw, "train", "seed", 0, low=(0, False), integer=True)
    frac = _number(raw, "train", "val_fraction", 0.2, low=(0.0, True), high=0.5)
    return TrainConfig(
        learning_rate=float(lr),
        iterations=iters,
        batch_per_domain=batch,
        seed=seed,
        eval_interval=eval_interval,
        val_fraction=float(frac),
    )


def _parse_loss(raw: dict) -> tuple[AidgnHyper, str]:
    allowed = {"mode", "kappa", "gamma_delta", "beta_rw", "eta", "mu_star", "margin",
               "stop_radius_grad"}
    _check_keys("loss", raw, allowed)
    mode = raw.get("mode", "aidgn")
    _require(mode in MODES, "loss.mode", f"must be one of {MODES}")
    kappa = _number(raw, "loss", "kappa", 110.0, low=(0.0, True))
    gamma_delta = _number(raw, "loss", "gamma_delta", 0.001, low=(0.0, False))
    beta_rw = _number(raw, "loss", "beta_rw", 0.275, low=(0.0, False))
    eta = _number(raw, "loss", "eta", 0.04, low=(0.0, False))
    mu_star = _number(raw, "loss", "mu_star", 410.0, low=(0.0, True))
    margin = _number(raw, "loss", "margin", 0.0, low=(0.0, False))
    stop_r = raw.get("stop_radius_grad", False)
    _require(isinstance(stop_r, bool), "loss.stop_radius_grad", "must be a boolean")
    hyper = AidgnHyper(
        kappa=float(kappa),
        gamma_delta=float(gamma_delta),
        beta_rw=float(beta_rw),
        eta=float(eta),
        mu_star=float(mu_star),
        margin=float(margin),
        stop_radius_grad=stop_r,
    )
    return hyper, mode


def _parse_io(raw: dict) -> IoConfig:
    _check_keys("io", raw, {"out_dir", "eval_interval", "figures"})
    out_dir = raw.get("out_dir", "runs/out")
    _require(isinstance(out_dir, str) and out_dir != "", "io.out_dir",
             "must be a nonempty string")
    interval = _number(raw, "io", "eval_interval", 100, low=(1, False), integer=True)
    figures = raw.get("figures", True)
    _require(isinstance(figures, bool), "io.figures", "must be a boolean")
    return IoConfig(out_dir=out_dir, eval_interval=interval, figures=figures)


def parse_config(document: dict) -> RunConfig:
    if not isinstance(document, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    _check_keys("<root>", document, set(_SECTIONS))
    for section in _SECTIONS:
        if section in document and not isinstance(document[section], dict):
            raise ConfigError(section, "must be an object")
    io = _parse_io(document.get("io", {}))
    task = _parse_task(document.get("task", {}))
    model = _parse_model(document.get("model", {}))
    train = _parse_train(document.get("train", {}), io.eval_interval)
    hyper, mode = _parse_loss(document.get("loss", {}))
    return RunConfig(task=task, model=model, train=train, loss=hyper, mode=mode, io=io)


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            document = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("<file>", f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}")
    return parse_config(document)
