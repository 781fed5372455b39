"""Blurring kernels over group elements and pose-proxy construction.

A kernel is a symmetric distribution concentrated around the identity,
sampled factor-wise. The proxy of a pose g is ``g composed with eps`` for
``eps ~ kernel``; the delta kernel (no blurring) is allowed and degenerates
the proxy to the pose itself, which freezes the Gibbs chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import StructuralError
from .groups import GroupElement, compose, identity


@dataclass(frozen=True)
class Kernel:
    """Symmetric blurring kernel; one width parameter per group factor.

    ``kind`` is one of ``gaussian`` (widths are standard deviations),
    ``uniform`` (widths are half-widths) or ``delta`` (widths are ignored and
    must be zero).
    """

    kind: str
    widths: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in ("gaussian", "uniform", "delta"):
            raise StructuralError(f"unknown kernel kind {self.kind!r}")
        object.__setattr__(self, "widths", tuple(float(w) for w in self.widths))
        if len(self.widths) == 0:
            raise StructuralError("kernel needs at least one factor")
        if self.kind == "delta":
            if any(w != 0.0 for w in self.widths):
                raise StructuralError("delta kernel must have zero widths")
        elif any(w <= 0.0 for w in self.widths):
            raise StructuralError(f"{self.kind} kernel widths must be positive")

    @property
    def n_factors(self) -> int:
        return len(self.widths)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "widths": list(self.widths)}

    @staticmethod
    def from_dict(d: dict) -> "Kernel":
        return Kernel(d["kind"], tuple(d["widths"]))


def gaussian_kernel(*sigmas: float) -> Kernel:
    return Kernel("gaussian", tuple(sigmas))


def uniform_kernel(*half_widths: float) -> Kernel:
    return Kernel("uniform", tuple(half_widths))


def delta_kernel(n_factors: int = 1) -> Kernel:
    return Kernel("delta", (0.0,) * n_factors)


def sample_kernel(kernel: Kernel, rng: np.random.Generator) -> GroupElement:
    """One independent draw per factor; the delta kernel returns the identity."""
    if kernel.kind == "delta":
        return identity(kernel.n_factors)
    if kernel.kind == "gaussian":
        return GroupElement(tuple(rng.normal(0.0, w) for w in kernel.widths))
    return GroupElement(tuple(rng.uniform(-w, w) for w in kernel.widths))


def sample_kernel_shifts(kernel: Kernel, rngs) -> np.ndarray:
    """Stack one kernel draw per generator into an (n, n_factors) array.

    Each row consumes draws only from its own generator, so results do not
    depend on how chains are scheduled.
    """
    return np.array([sample_kernel(kernel, rng).shifts for rng in rngs])


def kernel_density(kernel: Kernel, eps: GroupElement) -> float:
    """Density of the kernel at ``eps`` (product over factors).

    Symmetric by construction: depends only on the factor-wise absolute
    shifts. The delta kernel is the limit case: infinite at the identity,
    zero elsewhere.
    """
    if eps.n_factors != kernel.n_factors:
        raise StructuralError(
            f"factor count mismatch: kernel {kernel.n_factors} vs element {eps.n_factors}"
        )
    if kernel.kind == "delta":
        return math.inf if all(s == 0.0 for s in eps.shifts) else 0.0
    density = 1.0
    for shift, width in zip(eps.shifts, kernel.widths):
        if kernel.kind == "gaussian":
            density *= math.exp(-0.5 * (shift / width) ** 2) / (width * math.sqrt(2 * math.pi))
        else:
            density *= (1.0 / (2 * width)) if abs(shift) <= width else 0.0
    return density


def make_proxy(g_pose: GroupElement, kernel: Kernel, rng: np.random.Generator) -> GroupElement:
    """Blur the pose: ``proxy = g_pose composed with eps``, ``eps ~ kernel``."""
    if g_pose.n_factors != kernel.n_factors:
        raise StructuralError(
            f"factor count mismatch: pose {g_pose.n_factors} vs kernel {kernel.n_factors}"
        )
    return compose(g_pose, sample_kernel(kernel, rng))
