"""Uniform tensor grids on the box (0, L)^d and their boundary quadrature.

Interior nodes sit at ``h * (i + 1)`` along every axis, ``i = 0 .. n-1``, with
``h = L / (n + 1)``; the wall nodes (Dirichlet ghosts) are never stored.
Flat node indices follow C (lexicographic) order of the ``(n,) * d`` array.

The boundary mesh keeps one node per interior tangential position on each of
the ``2 d`` faces.  Edge and corner nodes are left out, so the boundary
quadrature undershoots ``|Gamma|`` by O(h).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Box side ``L``, dimension ``d`` and interior nodes per axis ``n``."""

    d: int
    L: float
    n: int

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.d}")
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"need at least 3 interior nodes per axis, got {self.n}")
        if not self.L > 0:
            raise ValueError(f"side length must be positive, got {self.L}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "L", float(self.L))

    @property
    def h(self) -> float:
        return self.L / (self.n + 1)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "GridSpec":
        return cls(d=int(data["d"]), L=float(data["L"]), n=int(data["n"]))


@dataclass(frozen=True, eq=False)
class Grid:
    spec: GridSpec
    axis: np.ndarray

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def L(self) -> float:
        return self.spec.L

    @property
    def h(self) -> float:
        return self.spec.h

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n ** self.d

    @property
    def volume(self) -> float:
        return self.L ** self.d

    @property
    def diameter(self) -> float:
        return self.L * np.sqrt(self.d)

    @property
    def center(self) -> np.ndarray:
        return np.full(self.d, 0.5 * self.L)

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(n**d, d)``, lexicographic order."""
        mesh = np.meshgrid(*([self.axis] * self.d), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        pts.setflags(write=False)
        return pts

    def coords(self) -> list:
        """Per-axis coordinate arrays broadcast to ``shape`` (``indexing='ij'``)."""
        return np.meshgrid(*([self.axis] * self.d), indexing="ij")

    def digest(self) -> str:
        payload = json.dumps(self.spec.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


def build_grid(spec: GridSpec) -> Grid:
    axis = spec.h * np.arange(1, spec.n + 1, dtype=float)
    axis.setflags(write=False)
    return Grid(spec=spec, axis=axis)


@dataclass(frozen=True, eq=False)
class BoundaryMesh:
    """Boundary nodes of the box grid.

    Attributes
    ----------
    points : (M, d) array
        Node positions on Gamma.
    normals : (M, d) array
        Outward unit normals (``-e_a`` on the face ``x_a = 0``, ``+e_a`` on
        ``x_a = L``).
    weights : (M,) array
        Quadrature weights, all equal to ``h**(d-1)``.
    first, second : (M,) int arrays
        Flat indices of the first and second interior nodes met when walking
        inward along the normal.  Finite-difference traces read these.
    face : (M,) int array
        Face id ``2 * axis + side`` with side 0 at ``x_a = 0``.
    """

    grid: Grid
    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    first: np.ndarray
    second: np.ndarray
    face: np.ndarray

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def area(self) -> float:
        return float(np.sum(self.weights))


def boundary_mesh(grid: Grid) -> BoundaryMesh:
    d, n, h, L = grid.d, grid.n, grid.h, grid.L
    idx = np.arange(grid.size).reshape(grid.shape)
    tangential = np.meshgrid(*([grid.axis] * (d - 1)), indexing="ij")
    tangential = [t.ravel() for t in tangential]
    m = n ** (d - 1)

    points, normals, first, second, face = [], [], [], [], []
    for a in range(d):
        others = [b for b in range(d) if b != a]
        for side in (0, 1):
            pos = np.empty((m, d))
            for b, t in zip(others, tangential):
                pos[:, b] = t
            pos[:, a] = 0.0 if side == 0 else L
            nu = np.zeros((m, d))
            nu[:, a] = -1.0 if side == 0 else 1.0
            near, next_ = (0, 1) if side == 0 else (n - 1, n - 2)
            first.append(np.take(idx, near, axis=a).ravel())
            second.append(np.take(idx, next_, axis=a).ravel())
            points.append(pos)
            normals.append(nu)
            face.append(np.full(m, 2 * a + side))

    arrays = dict(
        points=np.concatenate(points),
        normals=np.concatenate(normals),
        weights=np.full(2 * d * m, h ** (d - 1)),
        first=np.concatenate(first),
        second=np.concatenate(second),
        face=np.concatenate(face),
    )
    for arr in arrays.values():
        arr.setflags(write=False)
    return BoundaryMesh(grid=grid, **arrays)


def _check_size(u, expected: int, what: str):
    if u.shape[0] != expected:
        raise ValueError(f"{what} has {u.shape[0]} entries, expected {expected}")


def inner_omega(u, v, grid: Grid):
    """``h**d * sum(u * conj(v))`` over interior nodes.

    Either argument may carry a trailing column axis; the pairing is then
    taken column by column.
    """
    u = np.asarray(u)
    v = np.asarray(v)
    _check_size(u, grid.size, "u")
    _check_size(v, grid.size, "v")
    return grid.h ** grid.d * np.sum(u * np.conj(v), axis=0)


def norm_omega(u, grid: Grid, p: float = 2.0) -> float:
    u = np.asarray(u)
    _check_size(u, grid.size, "u")
    return float((grid.h ** grid.d * np.sum(np.abs(u) ** p)) ** (1.0 / p))


def inner_gamma(f, g, mesh: BoundaryMesh):
    """``sum(w * f * conj(g))`` over boundary nodes (column-wise for 2-D input)."""
    f = np.asarray(f)
    g = np.asarray(g)
    _check_size(f, mesh.size, "f")
    _check_size(g, mesh.size, "g")
    w = mesh.weights.reshape((-1,) + (1,) * (max(f.ndim, g.ndim) - 1))
    return np.sum(w * f * np.conj(g), axis=0)


def norm_gamma(g, mesh: BoundaryMesh, p: float = 2.0) -> float:
    if p < 1:
        raise ValueError("exponent must be >= 1")
    g = np.asarray(g)
    _check_size(g, mesh.size, "g")
    return float(np.sum(mesh.weights * np.abs(g) ** p) ** (1.0 / p))
