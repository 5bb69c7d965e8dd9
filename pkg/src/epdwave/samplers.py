"""Noisy point clouds on a circle, a torus and a two-torus chain.

Random streams: cloud ``i`` of a batch seeded with ``seed`` draws from
``PCG64(SeedSequence(seed, spawn_key=(i,)))``, so any cloud can be regenerated
on its own and batches are reproducible regardless of execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

SHAPES = ("torus", "double_torus", "circle")


@dataclass(frozen=True)
class SamplerSpec:
    """What to sample.

    ``major_radius`` is the radius of the torus centre circle and
    ``minor_radius`` the tube radius; ``radius`` is only used by the circle.
    ``noise_sd`` is the per-coordinate standard deviation of the additive
    Gaussian noise.
    """

    shape: str = "torus"
    n: int = 200
    noise_sd: float = math.sqrt(0.5)
    seed: int = 0
    major_radius: float = 2.0
    minor_radius: float = 0.5
    radius: float = 1.0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"shape must be one of {SHAPES}, got {self.shape!r}")
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        if min(self.major_radius, self.minor_radius, self.radius) <= 0:
            raise ValueError("radii must be positive")

    @classmethod
    def from_variance(cls, noise_var: float, **kwargs) -> "SamplerSpec":
        if noise_var < 0:
            raise ValueError("noise variance must be nonnegative")
        return cls(noise_sd=math.sqrt(noise_var), **kwargs)


def make_rng(seed: int, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def torus_angles(n: int, R: float, r: float, rng: np.random.Generator):
    """Tube and ring angles distributed uniformly with respect to surface area.

    The area element is ``r (R + r cos theta) dtheta dphi``; ``theta`` is drawn
    by rejection against the envelope ``R + r``.
    """
    thetas = np.empty(0)
    while thetas.size < n:
        m = max(2 * (n - thetas.size), 16)
        cand = rng.uniform(0.0, 2 * math.pi, m)
        acc = rng.uniform(0.0, R + r, m) < R + r * np.cos(cand)
        thetas = np.concatenate([thetas, cand[acc]])
    theta = thetas[:n]
    phi = rng.uniform(0.0, 2 * math.pi, n)
    return theta, phi


def torus_points(theta, phi, R: float, r: float) -> np.ndarray:
    ring = R + r * np.cos(theta)
    return np.column_stack([ring * np.cos(phi), ring * np.sin(phi), r * np.sin(theta)])


def _surface(spec: SamplerSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.shape == "circle":
        a = rng.uniform(0.0, 2 * math.pi, spec.n)
        return spec.radius * np.column_stack([np.cos(a), np.sin(a)])
    R, r = spec.major_radius, spec.minor_radius
    theta, phi = torus_angles(spec.n, R, r, rng)
    pts = torus_points(theta, phi, R, r)
    if spec.shape == "double_torus":
        # two equal-area tori touching at x = R + r; each point picks one with probability 1/2
        second = rng.random(spec.n) < 0.5
        pts[second, 0] += 2 * (R + r)
    return pts


def sample_cloud(spec: SamplerSpec, index: int = 0) -> np.ndarray:
    """Draw one noisy cloud; ``index`` selects the independent substream."""
    rng = make_rng(spec.seed, index)
    pts = _surface(spec, rng)
    if spec.noise_sd > 0:
        pts = pts + rng.normal(0.0, spec.noise_sd, pts.shape)
    return pts


def sample_clouds(spec: SamplerSpec, count: int, start: int = 0) -> list[np.ndarray]:
    return [sample_cloud(spec, i) for i in range(start, start + count)]


def project_to_torus(X, R: float, r: float) -> np.ndarray:
    """Nearest point of the torus surface (used to check the noise model)."""
    X = np.asarray(X, dtype=float)
    rho = np.hypot(X[:, 0], X[:, 1])
    phi = np.arctan2(X[:, 1], X[:, 0])
    theta = np.arctan2(X[:, 2], rho - R)
    return torus_points(theta, phi, R, r)


def with_seed(spec: SamplerSpec, seed: int) -> SamplerSpec:
    return replace(spec, seed=seed)
