"""Log-uniform conductivity and convection velocity fields driven by a uniform sample."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_DECAY = 12.5
_SINGULAR_RADIUS = 1e-12


def grid_centers(nx: int, ny: int | None = None) -> np.ndarray:
    """Kernel centres on a uniform ``nx`` by ``ny`` grid covering the closed unit square."""
    ny = nx if ny is None else ny
    if nx < 1 or ny < 1:
        raise ValueError("grid dimensions must be positive")
    xs = np.linspace(0.0, 1.0, nx) if nx > 1 else np.array([0.5])
    ys = np.linspace(0.0, 1.0, ny) if ny > 1 else np.array([0.5])
    X, Y = np.meshgrid(xs, ys)
    return np.column_stack([X.ravel(), Y.ravel()])


@dataclass(frozen=True)
class Constant:
    """Spatially constant velocity, independent of the sample."""

    a1: float
    a2: float = 0.0

    @property
    def dim(self) -> int:
        return 0


@dataclass(frozen=True, eq=False)
class StreamField:
    """Divergence-free velocity ``(dS/dx2, -dS/dx1)`` of a log-uniform stream function."""

    centers: np.ndarray = field(default_factory=lambda: grid_centers(5))
    decay: float = DEFAULT_DECAY

    @property
    def dim(self) -> int:
        return len(self.centers)


@dataclass(frozen=True, eq=False)
class FieldConfig:
    centers: np.ndarray = field(default_factory=lambda: grid_centers(5))
    decay: float = DEFAULT_DECAY
    velocity: Constant | StreamField = field(default_factory=lambda: Constant(20.0, 0.0))

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float).reshape(-1, 2)
        # an empty centre set gives kappa == 1 and a zero-dimensional sample
        object.__setattr__(self, "centers", c)
        if np.any(c < 0) or np.any(c > 1):
            raise ValueError("kernel centres must lie in the closed unit square")
        if not self.decay > 0:
            raise ValueError("decay must be positive")
        if isinstance(self.velocity, StreamField):
            vc = np.asarray(self.velocity.centers, dtype=float).reshape(-1, 2)
            object.__setattr__(self.velocity, "centers", vc)
            if not self.velocity.decay > 0:
                raise ValueError("velocity decay must be positive")

    @property
    def s_kappa(self) -> int:
        return len(self.centers)

    @property
    def s_a(self) -> int:
        return self.velocity.dim

    @property
    def s(self) -> int:
        return self.s_kappa + self.s_a


def check_sample(cfg: FieldConfig, omega) -> np.ndarray:
    w = np.asarray(omega, dtype=float)
    if w.shape != (cfg.s,):
        raise ValueError(f"sample must have shape ({cfg.s},), got {w.shape}")
    if np.any(w < 0) or np.any(w > 1):
        raise ValueError("sample coordinates must lie in [0, 1]")
    return w


def _kernels(centers: np.ndarray, decay: float, x: np.ndarray):
    diff = x[:, None, :] - centers[None, :, :]
    r = np.sqrt((diff**2).sum(axis=-1))
    return diff, r, np.exp(-decay * r)


def _points(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return x.reshape(-1, 2), single


def log_kappa(cfg: FieldConfig, omega, x) -> np.ndarray:
    pts, single = _points(x)
    w = np.asarray(omega, dtype=float)[: cfg.s_kappa]
    _, _, k = _kernels(cfg.centers, cfg.decay, pts)
    z = k @ w
    return z[0] if single else z


def eval_kappa(cfg: FieldConfig, omega, x):
    """Conductivity ``exp(sum_i w_i exp(-decay |x - c_i|))`` at one point or an (n, 2) array."""
    return np.exp(log_kappa(cfg, omega, x))


def eval_velocity(cfg: FieldConfig, omega, x) -> np.ndarray:
    pts, single = _points(x)
    vel = cfg.velocity
    if isinstance(vel, Constant):
        out = np.tile([float(vel.a1), float(vel.a2)], (len(pts), 1))
    else:
        w = np.asarray(omega, dtype=float)[cfg.s_kappa : cfg.s_kappa + vel.dim]
        diff, r, k = _kernels(vel.centers, vel.decay, pts)
        if np.any(r < _SINGULAR_RADIUS):
            raise ValueError("stream-function gradient is singular at a kernel centre")
        S = np.exp(k @ w)
        # d k_i / d x_j = -decay (x_j - c_ij) / r_i * k_i
        dk = -vel.decay * diff / r[..., None] * k[..., None]
        grad = S[:, None] * np.einsum("pij,i->pj", dk, w)
        out = np.column_stack([grad[:, 1], -grad[:, 0]])
    return out[0] if single else out
