"""Kernel evaluation, plug-in bandwidth rules and local-linear weights.

The same weight system drives the coefficient stages and the residual
covariance smoother, so everything lives here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWindowError, ValidationError

__all__ = [
    "KernelSpec",
    "Bandwidths",
    "EPANECHNIKOV",
    "UNIFORM",
    "kernel_eval",
    "default_bandwidths",
    "local_linear_weights",
    "effective_sample_size",
]


@dataclass(frozen=True)
class KernelSpec:
    """A symmetric, compactly supported second-order kernel.

    ``family`` selects the functional form; ``halfwidth`` is the support
    half-width (1 for the shipped kernels).
    """

    family: str = "epanechnikov"
    halfwidth: float = 1.0

    def __post_init__(self):
        if self.family not in ("epanechnikov", "uniform"):
            raise ValidationError(f"unknown kernel family: {self.family!r}")


EPANECHNIKOV = KernelSpec("epanechnikov")
UNIFORM = KernelSpec("uniform")


@dataclass(frozen=True)
class Bandwidths:
    """Bandwidths for the three smoothing problems, in scaled-time units.

    ``h`` drives the coefficient stages, ``b`` the covariance smoother and
    ``h_star`` the local principal-component step.
    """

    h: float
    b: float
    h_star: float

    def __post_init__(self):
        for name in ("h", "b", "h_star"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ValidationError(f"bandwidth {name}={v} outside (0, 1)")

    def replace(self, **kwargs) -> "Bandwidths":
        values = {"h": self.h, "b": self.b, "h_star": self.h_star}
        values.update(kwargs)
        return Bandwidths(**values)


def kernel_eval(u, spec: KernelSpec = EPANECHNIKOV):
    """Evaluate the kernel at ``u`` (scalar or array).

    The Epanechnikov form is 0.75 * (1 - u^2) on [-1, 1], zero outside;
    the uniform form is 0.5 on [-1, 1].
    """
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) <= spec.halfwidth
    if spec.family == "epanechnikov":
        out = np.where(inside, 0.75 * (1.0 - u * u), 0.0)
    else:
        out = np.where(inside, 0.5, 0.0)
    return out if out.ndim else float(out)


def default_bandwidths(n: int, d: int) -> Bandwidths:
    """Plug-in bandwidth rules.

    h = b = 0.75 * (log d / n)^(1/5) for the coefficient and covariance
    stages; h_star = (2.35 / sqrt(12)) * (sqrt(d) / n)^(1/5) for the local
    principal-component step.
    """
    if n < 2 or d < 2:
        raise ValidationError(f"default_bandwidths needs n >= 2 and d >= 2, got n={n}, d={d}")
    h = 0.75 * (np.log(d) / n) ** 0.2
    h_star = (2.35 / np.sqrt(12.0)) * (np.sqrt(d) / n) ** 0.2
    return Bandwidths(h=h, b=h, h_star=h_star)


def local_linear_weights(grid, tau: float, b: float, spec: KernelSpec = EPANECHNIKOV):
    """Local-linear smoothing weights at evaluation point ``tau``.

    With u_t = (grid_t - tau) / b and s_j = sum_t u_t^j K(u_t), the weight
    of observation t is K(u_t) * s_2 - u_t * K(u_t) * s_1.  The construction
    annihilates the first local moment: sum_t w_t (grid_t - tau) == 0, which
    is what gives local-linear fits automatic boundary correction.
    """
    grid = np.asarray(grid, dtype=float)
    u = (grid - tau) / b
    k = kernel_eval(u, spec)
    support = k > 0.0
    if np.count_nonzero(support) < 2:
        raise DegenerateWindowError(
            f"fewer than 2 observations inside the kernel window at tau={tau}, b={b}"
        )
    s1 = np.sum(u * k)
    s2 = np.sum(u * u * k)
    return k * s2 - (u * k) * s1


def effective_sample_size(grid, tau: float, bandwidth: float, spec: KernelSpec = EPANECHNIKOV) -> float:
    """Kernel-mass effective sample size: sum_t K_h(t) / max_t K_h(t)."""
    grid = np.asarray(grid, dtype=float)
    k = kernel_eval((grid - tau) / bandwidth, spec)
    kmax = k.max()
    if kmax <= 0.0:
        raise DegenerateWindowError(f"empty kernel window at tau={tau}, bandwidth={bandwidth}")
    return float(k.sum() / kmax)
