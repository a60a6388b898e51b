"""Potential families, grid sampling and admissibility checks.

Four families are available:

``constant``
    ``amplitude`` everywhere.
``trig-polynomial``
    ``amplitude * sum_j c_j cos(2 pi m_j . x / L)`` over integer modes ``m_j``.
``gaussian-bump``
    ``amplitude * exp(-|x - center|^2 / (2 width^2))``.
``inverse-power``
    ``amplitude * |x - center|^(-alpha)``, singular at ``center``.

A potential made of several terms is passed as a list of specs; the samples
are summed.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import Grid, norm_omega

FAMILIES = ("constant", "trig-polynomial", "gaussian-bump", "inverse-power")


def admissible_exponent(d: int) -> float:
    """Lebesgue exponent ``max(2, 3d/5)`` of the admissible class."""
    return max(2.0, 3.0 * d / 5.0)


@dataclass(frozen=True)
class PotentialSpec:
    family: str
    amplitude: float = 1.0
    center: tuple | None = None
    width: float = 0.1
    alpha: float = 1.0
    modes: tuple | None = None
    coefficients: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown potential family {self.family!r}")
        if self.center is not None:
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.modes is not None:
            object.__setattr__(self, "modes", tuple(tuple(int(k) for k in m) for m in self.modes))
        if self.coefficients is not None:
            object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if self.family == "gaussian-bump" and not self.width > 0:
            raise ValueError("gaussian width must be positive")
        if self.family == "trig-polynomial":
            if not self.modes:
                raise ValueError("trig-polynomial needs at least one mode")
            if self.coefficients is not None and len(self.coefficients) != len(self.modes):
                raise ValueError("one coefficient per mode expected")

    def validate(self, d: int) -> None:
        """Check the fields that depend on the dimension."""
        if self.family in ("gaussian-bump", "inverse-power"):
            if self.center is None or len(self.center) != d:
                raise ValueError(f"{self.family} needs a center with {d} coordinates")
        if self.family == "trig-polynomial":
            if any(len(m) != d for m in self.modes):
                raise ValueError(f"trig modes must have {d} components")
        if self.family == "inverse-power":
            bound = d / admissible_exponent(d)
            if not 0 < self.alpha < bound:
                raise ValueError(
                    f"inverse-power exponent must lie in (0, {bound:g}) for d={d}, got {self.alpha}"
                )

    def to_dict(self) -> dict:
        out = {"family": self.family, "amplitude": self.amplitude}
        if self.family in ("gaussian-bump", "inverse-power"):
            out["center"] = list(self.center) if self.center is not None else None
        if self.family == "gaussian-bump":
            out["width"] = self.width
        if self.family == "inverse-power":
            out["alpha"] = self.alpha
        if self.family == "trig-polynomial":
            out["modes"] = [list(m) for m in self.modes]
            out["coefficients"] = list(self.coefficients) if self.coefficients is not None else None
            out["seed"] = self.seed
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PotentialSpec":
        known = {"family", "amplitude", "center", "width", "alpha", "modes", "coefficients", "seed"}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown potential keys {sorted(extra)}")
        return cls(**data)


def as_specs(spec) -> list:
    """Normalize a spec, a dict or a list of either into a list of specs."""
    if isinstance(spec, (PotentialSpec, dict)):
        spec = [spec]
    return [s if isinstance(s, PotentialSpec) else PotentialSpec.from_dict(s) for s in spec]


def snap_center(x0, grid: Grid) -> np.ndarray:
    """Move ``x0`` to the nearest node plus ``h/3`` in every coordinate.

    The result keeps a distance ``h/sqrt(3)`` or more from all nodes in 3-D
    (``h*sqrt(2)/3`` in 2-D), so an inverse-power sample stays finite.
    """
    x0 = np.asarray(x0, dtype=float)
    h = grid.h
    idx = np.clip(np.rint(x0 / h), 1, grid.n)
    return idx * h + h / 3.0


@dataclass(frozen=True, eq=False)
class PotentialField:
    grid: Grid
    values: np.ndarray
    specs: tuple = field(default=())

    @property
    def minimum(self) -> float:
        return float(np.min(self.values))

    @property
    def exponent(self) -> float:
        return admissible_exponent(self.grid.d)

    @property
    def norm(self) -> float:
        """Grid L^p norm with ``p = max(2, 3d/5)``."""
        return norm_omega(self.values, self.grid, self.exponent)

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.values).tobytes()).hexdigest()[:16]

    def __add__(self, other: "PotentialField") -> "PotentialField":
        if other.grid.spec != self.grid.spec:
            raise ValueError("fields live on different grids")
        return PotentialField(self.grid, self.values + other.values, self.specs + other.specs)

    def scaled(self, s: float) -> "PotentialField":
        return PotentialField(self.grid, s * self.values, self.specs)


def _trig_coefficients(spec: PotentialSpec) -> np.ndarray:
    if spec.coefficients is not None:
        return np.asarray(spec.coefficients)
    rng = np.random.default_rng(spec.seed)
    return rng.standard_normal(len(spec.modes))


def _sample_one(spec: PotentialSpec, grid: Grid) -> np.ndarray:
    spec.validate(grid.d)
    pts = grid.points
    if spec.family == "constant":
        return np.full(grid.size, float(spec.amplitude))
    if spec.family == "trig-polynomial":
        k = 2.0 * np.pi / grid.L * np.asarray(spec.modes, dtype=float)
        return spec.amplitude * (np.cos(pts @ k.T) @ _trig_coefficients(spec))
    r2 = np.sum((pts - np.asarray(spec.center)) ** 2, axis=1)
    if spec.family == "gaussian-bump":
        return spec.amplitude * np.exp(-r2 / (2.0 * spec.width ** 2))
    # inverse-power
    if np.min(r2) <= (1e-9 * grid.h) ** 2:
        raise ValueError("inverse-power center coincides with a grid node; use snap_center")
    return spec.amplitude * r2 ** (-0.5 * spec.alpha)


def sample(spec, grid: Grid) -> PotentialField:
    """Sample one spec (or a list of specs, summed) on the interior nodes."""
    specs = as_specs(spec)
    values = np.zeros(grid.size)
    for s in specs:
        values = values + _sample_one(s, grid)
    if not np.all(np.isfinite(values)):
        raise ValueError("potential samples are not finite")
    values.setflags(write=False)
    return PotentialField(grid=grid, values=values, specs=tuple(specs))


def from_values(values, grid: Grid) -> PotentialField:
    values = np.array(values, dtype=float).ravel()
    if values.shape != (grid.size,):
        raise ValueError(f"expected {grid.size} samples, got {values.size}")
    values.setflags(write=False)
    return PotentialField(grid=grid, values=values)


@dataclass(frozen=True)
class AdmissibilityReport:
    lower_bound_ok: bool
    norm_ok: bool
    minimum: float
    norm: float
    exponent: float
    c0: float
    M: float

    @property
    def passed(self) -> bool:
        return self.lower_bound_ok and self.norm_ok


def class_check(field: PotentialField, c0: float, M: float, d: int | None = None) -> AdmissibilityReport:
    """Check ``q >= -c0`` on the nodes and ``||q||_p <= M``."""
    if d is not None and d != field.grid.d:
        raise ValueError(f"field is {field.grid.d}-dimensional, not {d}")
    norm = field.norm
    return AdmissibilityReport(
        lower_bound_ok=field.minimum >= -c0,
        norm_ok=norm <= M,
        minimum=field.minimum,
        norm=norm,
        exponent=field.exponent,
        c0=float(c0),
        M=float(M),
    )


def sum_fields(fields: Sequence[PotentialField]) -> PotentialField:
    out = fields[0]
    for f in fields[1:]:
        out = out + f
    return out
