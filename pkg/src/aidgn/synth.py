"""Synthetic multi-domain data with a shared angular law and shifted radius
laws: directions come from one class-conditional vMF mixture for every
domain, radii are Exponential per source domain and Uniform for the target.
An optional violation mode rotates the target's class centers to break the
shared angular law on purpose."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .distributions import (
    NormLaws,
    VmfMixture,
    VmfParams,
    mixture_posterior_many,
    sample_radii,
    vmf_sample_n,
)
from .errors import RepulsionFailed, UnknownDomainIndex

_TASK_TAG = 11
_DOMAIN_TAG_BASE = 1000
TARGET_DOMAIN = -1

_REPULSION_CAP = 5000
_REPULSION_STEP = 0.1


@dataclass(frozen=True)
class SyntheticSpec:
    latent_dim: int = 16
    n_classes: int = 5
    n_domains: int = 3
    kappa_gen: float = 20.0
    source_means: tuple[float, ...] = (3.0, 5.0, 8.0)
    target_lower: float = 10.0
    target_width: float = 6.0
    samples_per_class: int = 200
    observation: str = "rotation"
    violation: str = "none"
    violation_angle: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.latent_dim < 2 or self.n_classes < 2 or self.n_domains < 1:
            raise ValueError("need latent_dim >= 2, n_classes >= 2, n_domains >= 1")
        if len(self.source_means) != self.n_domains:
            raise ValueError("one source mean per domain required")
        if any(m <= 0 for m in self.source_means):
            raise ValueError("source means must be > 0")
        if self.target_width <= 0 or self.target_lower < 0 or self.kappa_gen < 0:
            raise ValueError("invalid target support or concentration")
        if self.observation not in ("identity", "rotation"):
            raise ValueError("observation must be 'identity' or 'rotation'")
        if self.violation not in ("none", "angular_shift"):
            raise ValueError("violation must be 'none' or 'angular_shift'")

    def norm_laws(self) -> NormLaws:
        return NormLaws(
            source_means=self.source_means,
            target_lower=self.target_lower,
            target_width=self.target_width,
        )


@dataclass(frozen=True)
class Task:
    """Ground-truth mixture, observation map and the violation rotation plane."""

    mixture: VmfMixture
    rotation: np.ndarray | None
    shift_plane: tuple[np.ndarray, np.ndarray]

    def observe(self, z: np.ndarray) -> np.ndarray:
        return z if self.rotation is None else z @ self.rotation.T

    def unobserve(self, x: np.ndarray) -> np.ndarray:
        return x if self.rotation is None else x @ self.rotation


def task_rng(spec: SyntheticSpec) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(entropy=spec.seed, spawn_key=(_TASK_TAG,)))
    )


def domain_rng(spec: SyntheticSpec, domain: int) -> np.random.Generator:
    """Per-domain child stream; the target uses domain = -1."""
    key = _DOMAIN_TAG_BASE + (spec.n_domains if domain == TARGET_DOMAIN else domain)
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(entropy=spec.seed, spawn_key=(key,)))
    )


def _repel_centers(centers: np.ndarray, min_angle: float) -> np.ndarray:
    """Push class centers apart until every pairwise angle reaches min_angle."""
    c = centers.copy()
    min_cos = np.cos(min_angle)
    for _ in range(_REPULSION_CAP):
        gram = c @ c.T
        np.fill_diagonal(gram, -1.0)
        i, j = np.unravel_index(np.argmax(gram), gram.shape)
        if gram[i, j] <= min_cos:
            return c
        diff = c[i] - c[j]
        norm = np.linalg.norm(diff)
        if norm < 1e-12:
            diff = np.zeros_like(c[i])
            diff[0] = 1.0
            norm = 1.0
        diff /= norm
        c[i] = c[i] + _REPULSION_STEP * diff
        c[j] = c[j] - _REPULSION_STEP * diff
        c[i] /= np.linalg.norm(c[i])
        c[j] /= np.linalg.norm(c[j])
    raise RepulsionFailed(
        f"min pairwise angle {min_angle:.4f} not reached in {_REPULSION_CAP} rounds"
    )


def _random_rotation(n: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def make_task(spec: SyntheticSpec, rng: np.random.Generator | None = None) -> Task:
    """Sample class centers (uniform then repelled to min angle pi/(2C)),
    uniform priors, a fixed observation map, and a fixed violation plane."""
    rng = task_rng(spec) if rng is None else rng
    n, c = spec.latent_dim, spec.n_classes
    centers = rng.standard_normal((c, n))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    centers = _repel_centers(centers, np.pi / (2.0 * c))
    mixture = VmfMixture(
        components=tuple(VmfParams(mean_direction=w, concentration=spec.kappa_gen) for w in centers),
        class_priors=np.full(c, 1.0 / c),
    )
    rotation = _random_rotation(n, rng) if spec.observation == "rotation" else None
    # fixed random plane for the angular-shift violation, drawn either way so
    # streams stay aligned between violation settings
    e1 = rng.standard_normal(n)
    e1 /= np.linalg.norm(e1)
    e2 = rng.standard_normal(n)
    e2 -= (e2 @ e1) * e1
    e2 /= np.linalg.norm(e2)
    return Task(mixture=mixture, rotation=rotation, shift_plane=(e1, e2))


def _plane_rotation(task: Task, angle: float) -> np.ndarray:
    e1, e2 = task.shift_plane
    n = e1.size
    outer12 = np.outer(e2, e1) - np.outer(e1, e2)
    proj = np.outer(e1, e1) + np.outer(e2, e2)
    return np.eye(n) + np.sin(angle) * outer12 + (np.cos(angle) - 1.0) * proj


@dataclass(frozen=True)
class Dataset:
    """Observed samples with labels and a per-row domain tag (-1 = target)."""

    inputs: np.ndarray
    labels: np.ndarray
    domains: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.domains is None:
            object.__setattr__(self, "domains", np.zeros(self.labels.size, dtype=int))


def sample_domain(
    task: Task,
    spec: SyntheticSpec,
    which: int,
    count: int,
    rng: np.random.Generator | None = None,
) -> Dataset:
    """Draw `count` labeled observations for source domain `which` in
    [0, N) or the target when `which` is -1."""
    if which != TARGET_DOMAIN and not 0 <= which < spec.n_domains:
        raise UnknownDomainIndex(f"domain {which} not in [0, {spec.n_domains}) or -1")
    rng = domain_rng(spec, which) if rng is None else rng
    mixture = task.mixture
    labels = rng.choice(spec.n_classes, size=count, p=mixture.class_priors)

    directions = np.empty((count, spec.latent_dim))
    centers = mixture.directions()
    if which == TARGET_DOMAIN and spec.violation == "angular_shift":
        centers = centers @ _plane_rotation(task, spec.violation_angle).T
        centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    for cls in range(spec.n_classes):
        idx = np.flatnonzero(labels == cls)
        if idx.size == 0:
            continue
        params = VmfParams(mean_direction=centers[cls], concentration=spec.kappa_gen)
        directions[idx] = vmf_sample_n(params, idx.size, rng)

    domain_arg = None if which == TARGET_DOMAIN else which
    radii = sample_radii(spec.norm_laws(), count, rng, domain=domain_arg)
    latents = radii[:, None] * directions
    return Dataset(
        inputs=task.observe(latents),
        labels=labels,
        domains=np.full(count, which, dtype=int),
    )


def oracle_accuracy(
    task: Task,
    spec: SyntheticSpec,
    which: int,
    count: int,
    rng: np.random.Generator | None = None,
) -> float:
    """Accuracy of the true-mixture posterior over directions; the Bayes
    ceiling for any learned classifier when the shared angular law holds."""
    data = sample_domain(task, spec, which, count, rng=rng)
    latents = task.unobserve(data.inputs)
    units = latents / np.linalg.norm(latents, axis=1, keepdims=True)
    posterior = mixture_posterior_many(units, task.mixture)
    return float(np.mean(np.argmax(posterior, axis=1) == data.labels))


# ---------------------------------------------------------------------------
# Dataset files
# ---------------------------------------------------------------------------

def write_dataset(path, data: Dataset) -> None:
    """Delimited text with 17-significant-digit floats for lossless round trips."""
    n = data.inputs.shape[1]
    header = "domain,label," + ",".join(f"x_{i}" for i in range(n))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for d, y, row in zip(data.domains, data.labels, data.inputs):
            cells = ",".join(f"{v:.17g}" for v in row)
            fh.write(f"{int(d)},{int(y)},{cells}\n")


def read_dataset(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[:2] != ["domain", "label"]:
            raise ValueError(f"{path}: expected header starting with domain,label")
        doms, labels, rows = [], [], []
        for line in fh:
            cells = line.rstrip("\n").split(",")
            doms.append(int(cells[0]))
            labels.append(int(cells[1]))
            rows.append([float(v) for v in cells[2:]])
    return Dataset(
        inputs=np.asarray(rows, dtype=float),
        labels=np.asarray(labels, dtype=int),
        domains=np.asarray(doms, dtype=int),
    )


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()
