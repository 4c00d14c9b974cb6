"""n-dimensional polar reparameterization and its Jacobian.

Convention for n >= 2, with angles (phi_1, ..., phi_{n-1}):

    z_1 = r cos(phi_1)
    z_k = r sin(phi_1) ... sin(phi_{k-1}) cos(phi_k)     for k < n
    z_n = r sin(phi_1) ... sin(phi_{n-1})

phi_1..phi_{n-2} lie in [0, pi], phi_{n-1} in [0, 2*pi). The chart is
singular at r = 0 and wherever a polar sine vanishes; those points raise
instead of silently picking a convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DimensionTooSmall, SingularChart, ZeroVector

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PolarPoint:
    """Radius plus n-1 angular coordinates of a nonzero latent vector."""

    radius: float
    angles: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "angles", np.asarray(self.angles, dtype=float))
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")
        if self.angles.ndim != 1 or self.angles.size < 1:
            raise ValueError("angles must be a vector of length n-1 >= 1")

    @property
    def dim(self) -> int:
        return self.angles.size + 1


def cartesian_to_polar(z) -> PolarPoint:
    """Map a nonzero Cartesian vector to its polar coordinates."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or z.size < 2:
        raise DimensionTooSmall(f"need a vector of dimension >= 2, got shape {z.shape}")
    n = z.size
    # tail[i] = sqrt(z_i^2 + ... + z_{n-1}^2)
    tail = np.sqrt(np.cumsum((z * z)[::-1])[::-1])
    if tail[0] == 0.0:
        raise ZeroVector("polar angles are undefined at the origin")
    angles = np.empty(n - 1)
    for i in range(n - 2):
        angles[i] = np.arctan2(tail[i + 1], z[i])
    last = np.arctan2(z[n - 1], z[n - 2])
    if last < 0.0:
        last += TWO_PI
    angles[n - 2] = last
    return PolarPoint(radius=float(tail[0]), angles=angles)


def polar_to_cartesian(p: PolarPoint) -> np.ndarray:
    """Inverse of :func:`cartesian_to_polar`."""
    angles = p.angles
    n = angles.size + 1
    z = np.empty(n)
    prefix = p.radius
    for k in range(n - 1):
        z[k] = prefix * np.cos(angles[k])
        prefix *= np.sin(angles[k])
    z[n - 1] = prefix
    return z


def l2_normalize(z) -> np.ndarray:
    """Scale a nonzero vector to unit norm; direction is preserved."""
    z = np.asarray(z, dtype=float)
    norm = float(np.linalg.norm(z))
    if norm == 0.0:
        raise ZeroVector("cannot normalize the zero vector")
    return z / norm


def polar_log_abs_det_jacobian(p: PolarPoint, n: int) -> float:
    """log |det J| of the polar-to-Cartesian map at a nonsingular point.

    Equals (n-1) log r + sum_{i=1}^{n-2} (n-1-i) log sin(phi_i).
    """
    if n < 2:
        raise DimensionTooSmall(f"n must be >= 2, got {n}")
    if p.dim != n:
        raise DimensionMismatch(f"point has dimension {p.dim}, expected {n}")
    if p.radius <= 0.0:
        raise SingularChart("Jacobian is singular at radius 0")
    total = (n - 1) * np.log(p.radius)
    for i in range(n - 2):
        s = np.sin(p.angles[i])
        if s <= 0.0:
            raise SingularChart(f"sin(phi_{i + 1}) = {s} is not positive")
        total += (n - 2 - i) * np.log(s)
    return float(total)
