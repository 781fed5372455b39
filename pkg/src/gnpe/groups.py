"""Translation-group machinery: group elements, parameter/data actions, poses.

The groups handled here are products of 1-D translation factors. A group
element is a tuple of real shifts, one per factor; composition is
component-wise addition. Data transform under a representation, which is one
of:

``CyclicTimeShift``
    Time series on a periodic grid. The action is implemented in the
    transform domain (rfft -> multiply by ``exp(-2i pi f dt)`` -> irfft), so
    fractional shifts are exact for cyclic signals and the round trip
    ``T_g T_{g^-1} x == x`` holds to machine precision. Multi-channel data
    use a factor map sending group factors to per-channel shifts, which is
    how a direct product of absolute and relative shifts acts on two
    channels.

``FrequencyPhaseShift``
    Same phase action applied directly to complex rfft-layout data, with no
    inverse transform.

``Affine1d``
    Scalar data transforming as ``x -> x + scale * dt``. ``scale`` can differ
    from 1 because the representation under which data transform for the
    *posterior* equivariance need not equal the one for the likelihood (the
    Gaussian worked example uses scale 2 for the posterior and 1 for the
    likelihood).

All actions here are volume preserving on parameters, so the log-Jacobian
carried through the API is always 0; it is kept explicit so the contracts
stay correct if a non-translation factor is ever added.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError, StructuralError
from .validation import as_float_array, require_finite


@dataclass(frozen=True)
class GroupElement:
    """Element of a product-of-translations group; ``shifts`` has one entry per factor."""

    shifts: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "shifts", tuple(float(s) for s in self.shifts))
        if len(self.shifts) == 0:
            raise StructuralError("a group element needs at least one factor")

    @property
    def n_factors(self) -> int:
        return len(self.shifts)


@dataclass(frozen=True)
class LogDetJacobian:
    """log |det J_g| of the parameter action; 0 for every pure translation."""

    value: float = 0.0


def identity(n_factors: int = 1) -> GroupElement:
    """The identity element: all-zero shifts."""
    return GroupElement((0.0,) * n_factors)


def compose(g: GroupElement, h: GroupElement) -> GroupElement:
    """Group operation: component-wise sum of shifts."""
    if g.n_factors != h.n_factors:
        raise StructuralError(
            f"factor count mismatch: {g.n_factors} vs {h.n_factors}"
        )
    return GroupElement(tuple(a + b for a, b in zip(g.shifts, h.shifts)))


def inverse(g: GroupElement) -> GroupElement:
    return GroupElement(tuple(-s for s in g.shifts))


def act_on_params(
    g: GroupElement, theta, pose_slots: tuple[int, ...]
) -> tuple[np.ndarray, LogDetJacobian]:
    """Apply ``g`` to a parameter vector.

    Parameters
    ----------
    g : GroupElement
        One shift per factor.
    theta : array_like, shape (d,)
        Full parameter vector.
    pose_slots : tuple of int
        Index of the parameter carrying each factor's pose, in factor order.

    Returns
    -------
    (ndarray, LogDetJacobian)
        Copy of ``theta`` with pose components shifted; all other components
        unchanged. The log-Jacobian is exactly 0.
    """
    theta = as_float_array(theta, "theta", ndim=1)
    if len(pose_slots) != g.n_factors:
        raise StructuralError(
            f"pose_slots has {len(pose_slots)} entries for {g.n_factors} factors"
        )
    out = theta.copy()
    for slot, shift in zip(pose_slots, g.shifts):
        if not 0 <= slot < theta.shape[0]:
            raise StructuralError(f"pose slot {slot} out of range for dim {theta.shape[0]}")
        out[slot] += shift
    return out, LogDetJacobian(0.0)


def pose_of(theta, pose_slots: tuple[int, ...]) -> GroupElement:
    """Extract the pose of ``theta``: the element g with g (standardized theta) = theta."""
    theta = np.asarray(theta, dtype=np.float64)
    return GroupElement(tuple(float(theta[s]) for s in pose_slots))


@dataclass(frozen=True)
class Grid:
    """Uniform sampling grid for time-series representations."""

    n_bins: int
    duration: float
    t_start: float = 0.0
    units: str = "s"

    @property
    def dt(self) -> float:
        return self.duration / self.n_bins

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n_bins)

    @property
    def rfft_freqs(self) -> np.ndarray:
        return np.fft.rfftfreq(self.n_bins, d=self.dt)


def _resolve_factor_map(factor_map, n_factors: int) -> np.ndarray:
    if factor_map is None:
        if n_factors != 1:
            raise StructuralError(
                "a factor map is required when the group has more than one factor"
            )
        return np.ones((1, 1))
    fm = as_float_array(factor_map, "factor_map", ndim=2)
    if fm.shape[1] != n_factors:
        raise StructuralError(
            f"factor map expects {fm.shape[1]} factors, element has {n_factors}"
        )
    return fm


@dataclass(frozen=True)
class CyclicTimeShift:
    """Cyclic translation of real time series on ``grid``.

    ``factor_map`` (n_channels, n_factors) sends group factors to per-channel
    time shifts; ``None`` means a single channel moved by a single factor.

    Aliasing caveat: on an even-length real grid the sampled Nyquist mode
    cannot carry a continuous translation action (a fractional shift of
    ``(-1)^m`` has no real sampled counterpart), so the group properties
    (homomorphism, round trip) hold exactly only on the subspace with zero
    Nyquist coefficient. Integer-bin shifts are exact on every signal. Smooth
    band-limited signals — all the forward models here — sit in the valid
    subspace up to ~1e-6 relative energy.
    """

    grid: Grid
    factor_map: tuple | None = None

    kind = "cyclic-time-shift"

    def channel_shifts(self, g: GroupElement) -> np.ndarray:
        fm = _resolve_factor_map(
            None if self.factor_map is None else np.asarray(self.factor_map),
            g.n_factors,
        )
        return fm @ np.asarray(g.shifts)

    def act(self, g: GroupElement, x) -> np.ndarray:
        x = as_float_array(x, "x")
        require_finite(x, "x")
        shifts = self.channel_shifts(g)
        single = x.ndim == 1
        rows = x[None, :] if single else x
        if rows.shape[-1] != self.grid.n_bins:
            raise StructuralError(
                f"data length {rows.shape[-1]} does not match grid ({self.grid.n_bins} bins)"
            )
        if rows.shape[0] != shifts.shape[0]:
            raise StructuralError(
                f"data has {rows.shape[0]} channels, factor map expects {shifts.shape[0]}"
            )
        if np.all(shifts == 0.0):  # identity acts exactly
            return x.copy()
        freqs = self.grid.rfft_freqs
        phases = np.exp(-2j * np.pi * freqs[None, :] * shifts[:, None])
        out = np.fft.irfft(np.fft.rfft(rows, axis=-1) * phases, n=self.grid.n_bins, axis=-1)
        return out[0] if single else out


@dataclass(frozen=True)
class FrequencyPhaseShift:
    """Phase multiplication ``x -> exp(-2i pi f dt) x`` on rfft-layout complex data."""

    grid: Grid
    factor_map: tuple | None = None

    kind = "frequency-phase-shift"

    def channel_shifts(self, g: GroupElement) -> np.ndarray:
        fm = _resolve_factor_map(
            None if self.factor_map is None else np.asarray(self.factor_map),
            g.n_factors,
        )
        return fm @ np.asarray(g.shifts)

    def act(self, g: GroupElement, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.complex128)
        if not np.all(np.isfinite(x.real)) or not np.all(np.isfinite(x.imag)):
            raise DataError("x contains non-finite entries")
        shifts = self.channel_shifts(g)
        single = x.ndim == 1
        rows = x[None, :] if single else x
        n_freq = self.grid.n_bins // 2 + 1
        if rows.shape[-1] != n_freq:
            raise StructuralError(
                f"data length {rows.shape[-1]} does not match rfft layout ({n_freq} bins)"
            )
        if rows.shape[0] != shifts.shape[0]:
            raise StructuralError(
                f"data has {rows.shape[0]} channels, factor map expects {shifts.shape[0]}"
            )
        if np.all(shifts == 0.0):  # identity acts exactly
            return x.copy()
        freqs = self.grid.rfft_freqs
        out = rows * np.exp(-2j * np.pi * freqs[None, :] * shifts[:, None])
        return out[0] if single else out


@dataclass(frozen=True)
class Affine1d:
    """Scalar data transforming as ``x -> x + scale * dt`` (single factor)."""

    scale: float = 1.0
    grid: Grid | None = field(default=None)

    kind = "affine-1d"

    def act(self, g: GroupElement, x) -> np.ndarray:
        if g.n_factors != 1:
            raise StructuralError("affine-1d representation acts for a single factor only")
        x = as_float_array(x, "x")
        require_finite(x, "x")
        return x + self.scale * g.shifts[0]


DataRepresentation = CyclicTimeShift | FrequencyPhaseShift | Affine1d


def act_on_data(g: GroupElement, x, rep: DataRepresentation) -> np.ndarray:
    """Apply the data representation of ``g`` to ``x``."""
    return rep.act(g, x)


def act_on_data_batch(shifts: np.ndarray, x, rep: DataRepresentation) -> np.ndarray:
    """Transform one observation by many group elements at once.

    ``shifts`` has shape (n, n_factors). Equivalent to stacking
    ``act_on_data(GroupElement(row), x, rep)`` row by row, but shares the
    forward transform of ``x`` across rows; the Gibbs sampler relies on this
    for per-iteration ensemble updates.
    """
    shifts = as_float_array(shifts, "shifts", ndim=2)
    if isinstance(rep, Affine1d):
        if shifts.shape[1] != 1:
            raise StructuralError("affine-1d representation acts for a single factor only")
        x = as_float_array(x, "x")
        require_finite(x, "x")
        return x[None, ...] + rep.scale * shifts[:, 0].reshape((-1,) + (1,) * x.ndim)
    if isinstance(rep, CyclicTimeShift):
        x = as_float_array(x, "x")
        require_finite(x, "x")
        fm = _resolve_factor_map(
            None if rep.factor_map is None else np.asarray(rep.factor_map),
            shifts.shape[1],
        )
        single = x.ndim == 1
        rows = x[None, :] if single else x
        if rows.shape[-1] != rep.grid.n_bins:
            raise StructuralError(
                f"data length {rows.shape[-1]} does not match grid ({rep.grid.n_bins} bins)"
            )
        chan_shifts = shifts @ fm.T  # (n, n_channels)
        freqs = rep.grid.rfft_freqs
        spectrum = np.fft.rfft(rows, axis=-1)  # (C, F)
        phases = np.exp(-2j * np.pi * chan_shifts[:, :, None] * freqs[None, None, :])
        out = np.fft.irfft(spectrum[None, :, :] * phases, n=rep.grid.n_bins, axis=-1)
        return out[:, 0, :] if single else out
    raise StructuralError(f"batched action not implemented for {type(rep).__name__}")


def rep_to_dict(rep: DataRepresentation) -> dict:
    """JSON-friendly description of a representation (for manifests/checkpoints)."""
    if isinstance(rep, Affine1d):
        return {"kind": rep.kind, "scale": rep.scale}
    return {
        "kind": rep.kind,
        "grid": {
            "n_bins": rep.grid.n_bins,
            "duration": rep.grid.duration,
            "t_start": rep.grid.t_start,
            "units": rep.grid.units,
        },
        "factor_map": None if rep.factor_map is None else np.asarray(rep.factor_map).tolist(),
    }
