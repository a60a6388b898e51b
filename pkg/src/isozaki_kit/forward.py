"""Discrete Dirichlet operator, eigenpairs and boundary spectral data.

The operator is the standard ``2d + 1`` point finite-difference ``-Laplace``
with zero values on the wall nodes, plus ``diag(q)``.  Eigenfunctions are
normalized in the grid ``L^2(Omega)`` pairing ``h**d * sum(u * conj(v))``.

Normal traces
-------------
Two one-sided formulas are offered, both written for the outward normal and
a wall value ``g`` (zero for eigenfunctions):

``"flux"`` (default)
    ``(g - u_1) / h``.  This is the boundary term produced by summation by
    parts of the discrete Laplacian, so discrete Green identities hold to
    roundoff.  It is still second-order accurate for Dirichlet eigenfunctions
    because their second normal derivative vanishes on the wall.
``"three_point"``
    ``(3 g - 4 u_1 + u_2) / (2 h)``.  Second order for any smooth ``u``.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field as dc_field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import Grid, GridSpec, BoundaryMesh, boundary_mesh, build_grid, inner_gamma
from .potential import PotentialField

TRACE_SCHEMES = ("flux", "three_point")
DENSE_LIMIT = 6000
MAGIC = b"BSD1"


class EigensolverError(RuntimeError):
    """The eigensolver did not reach the requested residual."""


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    grid: Grid
    matrix: sp.csr_matrix
    field: PotentialField | None = None

    @property
    def size(self) -> int:
        return self.grid.size

    def gershgorin_lower(self) -> float:
        A = self.matrix
        diag = A.diagonal()
        off = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(diag)
        return float(np.min(diag - off))

    def shifted(self, z) -> sp.csc_matrix:
        """``A - z I`` in CSC format (complex when ``z`` is complex)."""
        eye = sp.identity(self.size, dtype=np.result_type(self.matrix.dtype, type(z)), format="csr")
        return (self.matrix - z * eye).tocsc()


def laplacian_1d(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n, 2.0)
    off = np.full(n - 1, -1.0)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / h ** 2


def assemble(grid: Grid, field: PotentialField | None = None) -> DiscreteOperator:
    """Assemble ``-Laplace_h + diag(q)`` as a sparse symmetric matrix."""
    n, d = grid.n, grid.d
    T = laplacian_1d(n, grid.h)
    eye = sp.identity(n, format="csr")
    A = sp.csr_matrix((grid.size, grid.size))
    for a in range(d):
        factors = [eye] * d
        factors[a] = T
        term = factors[0]
        for f in factors[1:]:
            term = sp.kron(term, f, format="csr")
        A = A + term
    if field is not None:
        if field.grid.spec != grid.spec:
            raise ValueError("potential was sampled on a different grid")
        A = A + sp.diags(field.values, format="csr")
    A = sp.csr_matrix(A)
    A.sort_indices()
    return DiscreteOperator(grid=grid, matrix=A, field=field)


def neumann_trace(u, grid: Grid, mesh: BoundaryMesh | None = None, boundary_values=None,
                  scheme: str = "flux"):
    """Outward normal derivative of a grid field on the boundary mesh.

    Parameters
    ----------
    u : (N,) or (N, K) array
        Interior values; extra columns are traced independently.
    boundary_values : (M,) array, optional
        Wall values ``g``; zero when omitted.
    scheme : {"flux", "three_point"}
    """
    if scheme not in TRACE_SCHEMES:
        raise ValueError(f"unknown trace scheme {scheme!r}")
    if grid.n < 3:
        raise ValueError("trace stencil needs at least 3 interior nodes")
    mesh = mesh if mesh is not None else boundary_mesh(grid)
    u = np.asarray(u)
    if u.shape[0] != grid.size:
        raise ValueError(f"field has {u.shape[0]} entries, expected {grid.size}")
    u1 = u[mesh.first]
    g = 0.0
    if boundary_values is not None:
        g = np.asarray(boundary_values)
        if g.shape[0] != mesh.size:
            raise ValueError("boundary values do not match the mesh")
        if u.ndim == 2 and g.ndim == 1:
            g = g[:, None]
    h = grid.h
    if scheme == "flux":
        return (g - u1) / h
    return (3.0 * g - 4.0 * u1 + u[mesh.second]) / (2.0 * h)


def _phase_signs(traces: np.ndarray) -> np.ndarray:
    """Sign making the first near-largest trace entry positive, per row."""
    mag = np.abs(traces)
    top = mag.max(axis=1, keepdims=True)
    j = np.argmax(mag >= (1.0 - 1e-6) * top, axis=1)
    s = np.sign(traces[np.arange(len(traces)), j])
    s[s == 0] = 1.0
    return s


def eigs(op: DiscreteOperator, K: int, dense_limit: int = DENSE_LIMIT, tol: float = 1e-8,
         mesh: BoundaryMesh | None = None, scheme: str = "flux"):
    """Lowest ``K`` eigenpairs of the operator.

    Returns
    -------
    eigenvalues : (K,) array, ascending
    eigenfunctions : (N, K) array, orthonormal for ``inner_omega``, signed so
        that the first near-largest entry of each boundary trace is positive.

    Raises
    ------
    EigensolverError
        When the scaled residual ``max_k ||A phi - lambda phi|| / ||A||``
        exceeds ``tol``.
    """
    grid = op.grid
    N = op.size
    K = int(K)
    if not 1 <= K <= N:
        raise ValueError(f"K must lie in [1, {N}], got {K}")
    A = op.matrix
    if N <= dense_limit:
        if K < N:
            w, V = sla.eigh(A.toarray(), subset_by_index=[0, K - 1], driver="evr")
        else:
            w, V = sla.eigh(A.toarray(), driver="evd")
    else:
        sigma = op.gershgorin_lower() - 1.0
        v0 = np.ones(N) / np.sqrt(N)
        try:
            w, V = spla.eigsh(A.tocsc(), k=K, sigma=sigma, which="LM", v0=v0, tol=1e-12)
        except spla.ArpackNoConvergence as exc:
            raise EigensolverError(f"shift-invert Lanczos did not converge: {exc}") from exc
        order = np.argsort(w, kind="stable")
        w, V = w[order], V[:, order]

    scale = max(abs(op.gershgorin_lower()), float(np.max(np.abs(A).sum(axis=1))), 1.0)
    resid = np.linalg.norm(A @ V - V * w, axis=0) / scale
    if resid.max() > tol:
        raise EigensolverError(f"eigen residual {resid.max():.3e} exceeds {tol:.1e}")

    V = V / grid.h ** (grid.d / 2.0)
    traces = neumann_trace(V, grid, mesh, scheme=scheme).T
    V = V * _phase_signs(traces)[None, :]
    return w, V


@dataclass(frozen=True, eq=False)
class BoundarySpectralData:
    """Eigenvalues ``lam`` (K,) and boundary traces ``traces`` (K, M)."""

    grid: Grid
    eigenvalues: np.ndarray
    traces: np.ndarray
    eigenfunctions: np.ndarray | None = None
    field: PotentialField | None = None
    meta: dict = dc_field(default_factory=dict)

    @property
    def K(self) -> int:
        return len(self.eigenvalues)

    @cached_property
    def mesh(self) -> BoundaryMesh:
        return boundary_mesh(self.grid)

    def truncated(self, K: int) -> "BoundarySpectralData":
        if not 1 <= K <= self.K:
            raise ValueError(f"cannot truncate {self.K} pairs to {K}")
        phi = None if self.eigenfunctions is None else self.eigenfunctions[:, :K]
        return replace(self, eigenvalues=self.eigenvalues[:K], traces=self.traces[:K], eigenfunctions=phi)

    def trace_norms(self) -> np.ndarray:
        w = self.grid.h ** (self.grid.d - 1)
        return np.sqrt(w * np.sum(np.abs(self.traces) ** 2, axis=1))


def make_bsd(grid: Grid, field: PotentialField | None, K: int | None = None,
             scheme: str = "flux", keep_eigenfunctions: bool = True,
             dense_limit: int = DENSE_LIMIT) -> BoundarySpectralData:
    """Compute the lowest ``K`` eigenpairs and their boundary traces.

    ``K=None`` requests the whole discrete spectrum.
    """
    from . import __version__

    op = assemble(grid, field)
    K = grid.size if K is None else int(K)
    mesh = boundary_mesh(grid)
    w, V = eigs(op, K, dense_limit=dense_limit, mesh=mesh, scheme=scheme)
    traces = np.ascontiguousarray(neumann_trace(V, grid, mesh, scheme=scheme).T)
    meta = {
        "grid": grid.spec.to_dict(),
        "grid_hash": grid.digest(),
        "potential": [s.to_dict() for s in field.specs] if field is not None else [],
        "potential_hash": field.digest() if field is not None else None,
        "trace_scheme": scheme,
        "version": __version__,
    }
    return BoundarySpectralData(grid=grid, eigenvalues=w, traces=traces,
                                eigenfunctions=V if keep_eigenfunctions else None,
                                field=field, meta=meta)


def _clusters(lam: np.ndarray, rtol: float) -> list:
    groups, start = [], 0
    for k in range(1, len(lam) + 1):
        if k == len(lam) or abs(lam[k] - lam[k - 1]) > rtol * max(1.0, abs(lam[k])):
            groups.append(np.arange(start, k))
            start = k
    return groups


def align_bsd(bsd1: BoundarySpectralData, bsd2: BoundarySpectralData,
              rotate_clusters: bool = False, cluster_rtol: float = 1e-8) -> BoundarySpectralData:
    """Re-sign (and optionally rotate) the traces of ``bsd2`` to match ``bsd1``.

    Each ``psi_{2,k}`` is negated when its boundary pairing with ``psi_{1,k}``
    is negative.  With ``rotate_clusters`` the traces inside every numerically
    degenerate cluster of ``bsd2`` are first rotated by the orthogonal matrix
    that best fits ``bsd1`` on the same index range.
    """
    if bsd1.K != bsd2.K:
        raise ValueError(f"K mismatch: {bsd1.K} vs {bsd2.K}")
    if bsd1.grid.spec != bsd2.grid.spec:
        raise ValueError("BSDs live on different grids")
    P1, P2 = bsd1.traces, bsd2.traces.copy()
    V2 = None if bsd2.eigenfunctions is None else bsd2.eigenfunctions.copy()
    if rotate_clusters:
        for idx in _clusters(bsd2.eigenvalues, cluster_rtol):
            if len(idx) < 2:
                continue
            U, _, Wt = np.linalg.svd(P1[idx] @ P2[idx].T)
            R = U @ Wt
            P2[idx] = R @ P2[idx]
            if V2 is not None:
                V2[:, idx] = V2[:, idx] @ R.T
    s = np.sign(np.sum(P1 * P2, axis=1))
    s[s == 0] = 1.0
    P2 *= s[:, None]
    if V2 is not None:
        V2 *= s[None, :]
    return replace(bsd2, traces=P2, eigenfunctions=V2)


def write_bsd(bsd: BoundarySpectralData, path) -> None:
    """Write the binary record and its ``.json`` metadata sidecar."""
    path = Path(path)
    g = bsd.grid.spec
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIdI", g.d, g.n, g.L, bsd.K))
        fh.write(np.asarray(bsd.eigenvalues, dtype="<f8").tobytes())
        fh.write(np.asarray(bsd.traces, dtype="<f8").tobytes())
    with open(str(path) + ".json", "w") as fh:
        json.dump(bsd.meta, fh, indent=2, sort_keys=True)


def read_bsd(path) -> BoundarySpectralData:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path} is not a BSD1 file")
    d, n, L, K = struct.unpack_from("<IIdI", raw, 4)
    grid = build_grid(GridSpec(d=d, L=L, n=n))
    M = 2 * d * n ** (d - 1)
    off = 4 + struct.calcsize("<IIdI")
    expected = off + 8 * K * (1 + M)
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    lam = np.frombuffer(raw, dtype="<f8", count=K, offset=off).astype(float)
    traces = np.frombuffer(raw, dtype="<f8", count=K * M, offset=off + 8 * K).astype(float).reshape(K, M)
    sidecar = Path(str(path) + ".json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return BoundarySpectralData(grid=grid, eigenvalues=lam, traces=traces, meta=meta)


def boundary_pairing(bsd: BoundarySpectralData, g) -> np.ndarray:
    """``<g, psi_k>_Gamma`` for every stored trace."""
    return inner_gamma(np.asarray(g)[:, None], bsd.traces.T, boundary_mesh(bsd.grid))
