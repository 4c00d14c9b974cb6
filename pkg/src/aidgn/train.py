"""Training loop: per-domain minibatches, Adam, stepwise LR halving,
training-domain validation selection, and bit-exact checkpoints."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyDataset,
    EmptyDomain,
    NonFiniteGradient,
)
from .loss import AidgnHyper, batch_objective
from .net import (
    ClassifierHead,
    FeatureExtractor,
    backward_batch,
    cosine_scores_batch,
    forward_batch,
    linear_scores_batch,
)

MODES = ("aidgn", "erm_cosine", "erm_linear")

_INIT_TAG = 101
_BATCH_TAG = 202
_SPLIT_TAG = 303

CHECKPOINT_VERSION = 1


def child_rng(seed: int, tag: int) -> np.random.Generator:
    """Child stream derived from a master seed by a fixed rule."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(tag,))))


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    iterations: int = 2000
    batch_per_domain: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    eval_interval: int = 100
    val_fraction: float = 0.2

    def __post_init__(self):
        if self.learning_rate <= 0 or self.iterations <= 0 or self.batch_per_domain <= 0:
            raise ValueError("learning rate, iterations and batch size must be positive")
        if self.eval_interval <= 0:
            raise ValueError("eval_interval must be positive")


@dataclass
class TrainState:
    extractor: FeatureExtractor
    head: ClassifierHead
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int
    seed: int
    mode: str = "aidgn"

    def params(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.extractor.weights, self.extractor.biases):
            out.extend((w, b))
        out.append(self.head.directions)
        return out

    def copy(self) -> "TrainState":
        return TrainState(
            extractor=self.extractor.copy(),
            head=self.head.copy(),
            m=[a.copy() for a in self.m],
            v=[a.copy() for a in self.v],
            step=self.step,
            seed=self.seed,
            mode=self.mode,
        )


@dataclass
class MetricsRecord:
    step: int
    loss: float
    reg: float
    mu_d: dict[int, float]
    val_acc: float | None = None
    target_acc: float | None = None
    entropy: float | None = None
    wall_s: float | None = None

    def to_json(self, include_wall: bool = True) -> str:
        d = {
            "step": self.step,
            "loss": self.loss,
            "reg": self.reg,
            "mu_d": {str(k): v for k, v in sorted(self.mu_d.items())},
            "val_acc": self.val_acc,
            "target_acc": self.target_acc,
            "entropy": self.entropy,
        }
        if include_wall:
            d["wall_s"] = self.wall_s
        return json.dumps(d)


def init_state(
    input_dim: int,
    hidden_dims: list[int],
    latent_dim: int,
    n_classes: int,
    seed: int,
    activation: str = "softplus",
    mode: str = "aidgn",
) -> TrainState:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    rng = child_rng(seed, _INIT_TAG)
    extractor = FeatureExtractor.random(
        [input_dim, *hidden_dims, latent_dim], rng, activation=activation
    )
    head = ClassifierHead.random(n_classes, latent_dim, rng)
    params = []
    for w, b in zip(extractor.weights, extractor.biases):
        params.extend((w, b))
    params.append(head.directions)
    return TrainState(
        extractor=extractor,
        head=head,
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
        step=0,
        seed=seed,
        mode=mode,
    )


def effective_hyper(hyper: AidgnHyper, mode: str) -> AidgnHyper:
    """ERM modes run the same objective with the norm machinery switched off."""
    if mode == "aidgn":
        return hyper
    return replace(hyper, gamma_delta=0.0, eta=0.0, margin=0.0)


def _erm_linear_objective(latents, labels, head, want_grads=False):
    logits = latents @ head.T
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp_shifted = np.exp(shifted)
    z = exp_shifted.sum(axis=1)
    rows = np.arange(latents.shape[0])
    losses = np.log(z) - shifted[rows, labels]
    total = float(losses.sum())
    if not want_grads:
        return total
    probs = exp_shifted / z[:, None]
    probs[rows, labels] -= 1.0
    return total, probs.T @ latents, probs @ head


def lr_at_step(config: TrainConfig, step: int) -> float:
    """Halve the learning rate after 40% and 80% of total iterations."""
    halvings = int(step > 0.4 * config.iterations) + int(step > 0.8 * config.iterations)
    return config.learning_rate * 0.5**halvings


def train_step(
    state: TrainState,
    batch_by_domain: dict[int, tuple[np.ndarray, np.ndarray]],
    hyper: AidgnHyper,
    config: TrainConfig,
) -> tuple[TrainState, MetricsRecord]:
    """One Adam update over a minibatch containing every source domain."""
    for d, (x, _) in batch_by_domain.items():
        if x.shape[0] == 0:
            raise EmptyDomain(f"domain {d} has no samples in this batch")
    domains = np.concatenate(
        [np.full(x.shape[0], d, dtype=int) for d, (x, _) in sorted(batch_by_domain.items())]
    )
    inputs = np.concatenate([x for _, (x, _) in sorted(batch_by_domain.items())])
    labels = np.concatenate([y for _, (_, y) in sorted(batch_by_domain.items())])

    hy = effective_hyper(hyper, state.mode)
    latents, cache = forward_batch(inputs, state.extractor, want_cache=True)

    if state.mode == "erm_linear":
        total, d_head, d_latents = _erm_linear_objective(
            latents, labels, state.head.directions, want_grads=True
        )
        breakdown = {"loss_sum": total, "reg_sum": 0.0, "mu_d": {}}
    else:
        total, breakdown, d_head, d_latents = batch_objective(
            domains, latents, labels, state.head.directions, hy, want_grads=True
        )

    d_weights, d_biases = backward_batch(d_latents, state.extractor, cache)
    grads = []
    for gw, gb in zip(d_weights, d_biases):
        grads.extend((gw, gb))
    grads.append(d_head)

    for name, g in zip(_param_names(state), grads):
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"step {state.step + 1}: non-finite gradient in {name}")

    state.step += 1
    lr = lr_at_step(config, state.step)
    b1, b2 = config.beta1, config.beta2
    bias1 = 1.0 - b1**state.step
    bias2 = 1.0 - b2**state.step
    for p, m, v, g in zip(state.params(), state.m, state.v, grads):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / bias1) / (np.sqrt(v / bias2) + config.adam_eps)
    if state.mode != "erm_linear":
        state.head.renormalize()

    n = inputs.shape[0]
    record = MetricsRecord(
        step=state.step,
        loss=breakdown["loss_sum"] / n,
        reg=breakdown["reg_sum"] / n,
        mu_d={int(k): float(val) for k, val in breakdown["mu_d"].items()},
    )
    return state, record


def _param_names(state: TrainState) -> list[str]:
    names = []
    for i in range(len(state.extractor.weights)):
        names.extend((f"W{i}", f"b{i}"))
    names.append("head")
    return names


def evaluate(state: TrainState, inputs: np.ndarray, labels: np.ndarray, kappa: float):
    """Accuracy (argmax, first-index tie break) and mean prediction entropy."""
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2 or inputs.shape[0] == 0:
        raise EmptyDataset("evaluation needs at least one sample")
    latents = forward_batch(inputs, state.extractor)
    if state.mode == "erm_linear":
        scores = linear_scores_batch(latents, state.head)
        logits = scores
    else:
        scores = cosine_scores_batch(latents, state.head)
        logits = kappa * scores
    preds = np.argmax(scores, axis=1)
    acc = float(np.mean(preds == np.asarray(labels)))
    shifted = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(shifted)
    p /= p.sum(axis=1, keepdims=True)
    ent = float(np.mean(-np.sum(np.where(p > 0.0, p * np.log(p), 0.0), axis=1)))
    return acc, ent


def split_train_val(x: np.ndarray, y: np.ndarray, frac: float, rng: np.random.Generator):
    """Per-class stratified split; returns (train_x, train_y, val_x, val_y)."""
    val_idx = []
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        perm = rng.permutation(idx.size)
        n_val = int(round(frac * idx.size))
        val_idx.append(idx[perm[:n_val]])
    val_mask = np.zeros(y.size, dtype=bool)
    if val_idx:
        val_mask[np.concatenate(val_idx)] = True
    return x[~val_mask], y[~val_mask], x[val_mask], y[val_mask]


@dataclass
class TrainResult:
    state: TrainState
    history: list[MetricsRecord]
    best_state: TrainState
    best_step: int
    best_val_acc: float
    summary: dict = field(default_factory=dict)


def train(
    train_sets: dict[int, tuple[np.ndarray, np.ndarray]],
    config: TrainConfig,
    hyper: AidgnHyper,
    *,
    mode: str = "aidgn",
    hidden_dims: list[int] | None = None,
    latent_dim: int | None = None,
    activation: str = "softplus",
    val_set: tuple[np.ndarray, np.ndarray] | None = None,
    target_set: tuple[np.ndarray, np.ndarray] | None = None,
) -> TrainResult:
    """Run the full loop over per-domain datasets.

    Validation selection keeps the checkpoint with the highest pooled
    validation accuracy (earlier step wins ties); without a validation set
    the final state is selected.
    """
    if not train_sets:
        raise EmptyDomain("need at least one source domain")
    domains = sorted(train_sets)
    input_dim = train_sets[domains[0]][0].shape[1]
    for d, (x, y) in train_sets.items():
        if x.shape[1] != input_dim:
            raise DimensionMismatch("all domains must share the input dimension")
        if x.shape[0] == 0:
            raise EmptyDomain(f"domain {d} has no training samples")
    n_classes = int(max(int(y.max()) for _, y in train_sets.values())) + 1
    hidden_dims = [32] if hidden_dims is None else hidden_dims
    latent_dim = input_dim if latent_dim is None else latent_dim

    state = init_state(
        input_dim, hidden_dims, latent_dim, n_classes, config.seed, activation, mode
    )
    batch_rng = child_rng(config.seed, _BATCH_TAG)
    kappa = hyper.kappa

    history: list[MetricsRecord] = []
    best_state = state.copy()
    best_step = 0
    best_val = -1.0
    t0 = time.perf_counter()

    for step in range(1, config.iterations + 1):
        batch = {}
        for d in domains:
            x, y = train_sets[d]
            n = x.shape[0]
            take = config.batch_per_domain
            idx = batch_rng.choice(n, size=take, replace=n < take)
            batch[d] = (x[idx], y[idx])
        state, record = train_step(state, batch, hyper, config)

        if step % config.eval_interval == 0 or step == config.iterations:
            if val_set is not None:
                record.val_acc, _ = evaluate(state, val_set[0], val_set[1], kappa)
            if target_set is not None:
                record.target_acc, record.entropy = evaluate(
                    state, target_set[0], target_set[1], kappa
                )
            record.wall_s = time.perf_counter() - t0
            history.append(record)
            if val_set is not None and record.val_acc is not None and record.val_acc > best_val:
                best_val = record.val_acc
                best_step = step
                best_state = state.copy()

    if val_set is None:
        best_state, best_step, best_val = state.copy(), state.step, float("nan")

    summary = {
        "selected_step": best_step,
        "val_acc": best_val,
        "iterations": config.iterations,
        "mode": mode,
    }
    if target_set is not None:
        t_acc, t_ent = evaluate(best_state, target_set[0], target_set[1], kappa)
        summary["target_acc"] = t_acc
        summary["target_entropy"] = t_ent
    return TrainResult(
        state=state,
        history=history,
        best_state=best_state,
        best_step=best_step,
        best_val_acc=best_val,
        summary=summary,
    )


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, state: TrainState) -> None:
    """Versioned binary container; write-then-read is bit-exact."""
    arrays = {}
    for i, (w, b) in enumerate(zip(state.extractor.weights, state.extractor.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    arrays["head"] = state.head.directions
    for i, (m, v) in enumerate(zip(state.m, state.v)):
        arrays[f"adam_m{i}"] = m
        arrays[f"adam_v{i}"] = v
    meta = {
        "version": CHECKPOINT_VERSION,
        "n_layers": len(state.extractor.weights),
        "activation": state.extractor.activation,
        "mode": state.mode,
        "step": state.step,
        "seed": state.seed,
    }
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path) -> TrainState:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        n_layers = meta["n_layers"]
        weights = [data[f"w{i}"] for i in range(n_layers)]
        biases = [data[f"b{i}"] for i in range(n_layers)]
        n_params = 2 * n_layers + 1
        m = [data[f"adam_m{i}"] for i in range(n_params)]
        v = [data[f"adam_v{i}"] for i in range(n_params)]
        return TrainState(
            extractor=FeatureExtractor(weights=weights, biases=biases, activation=meta["activation"]),
            head=ClassifierHead(directions=data["head"]),
            m=m,
            v=v,
            step=meta["step"],
            seed=meta["seed"],
            mode=meta["mode"],
        )
