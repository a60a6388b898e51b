"""Fourier samples of ``q_1 - q_2`` from boundary spectral data, and inversion.

Conventions
-----------
``qhat(xi) = int exp(-i xi.x) q(x) dx`` for the zero extension of ``q`` and
``||q||_{H^-1}^2 = (2 pi)^-d int (1 + |xi|^2)^-1 |qhat(xi)|^2 dxi``, which
reduces to ``||q||_{L^2}^2`` when the weight is dropped.

Frequencies live on the lattice ``dxi * Z^d`` with ``dxi = pi / L`` by
default, restricted to the ball ``|xi| <= r_max``.
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .forward import BoundarySpectralData, assemble
from .geometry import Grid, GridSpec, build_grid, norm_omega
from .probe import make_probe
from .scattering import isozaki_S, series_S_diff

METHODS = ("series", "direct")


def estimate_lambda(bsd1: BoundarySpectralData, bsd2: BoundarySpectralData,
                    tail_start: int | None = None) -> float:
    """Tail maximum ``max_{k >= N0} |lam_{1,k} - lam_{2,k}|``; ``N0 = K // 2`` by default."""
    K = min(bsd1.K, bsd2.K)
    n0 = K // 2 if tail_start is None else int(tail_start)
    if not 0 <= n0 < K:
        raise ValueError(f"tail start {n0} must lie in [0, {K})")
    gaps = np.abs(bsd1.eigenvalues[n0:K] - bsd2.eigenvalues[n0:K])
    return float(np.max(gaps))


def hypothesis_sum(bsd1: BoundarySpectralData, bsd2: BoundarySpectralData) -> np.ndarray:
    """Partial sums of ``||psi_{1,k} - psi_{2,k}||^2_{L^2(Gamma)}``."""
    K = min(bsd1.K, bsd2.K)
    w = bsd1.mesh.weights
    inc = np.sum(w * np.abs(bsd1.traces[:K] - bsd2.traces[:K]) ** 2, axis=1)
    return np.cumsum(inc)


def frequency_grid(d: int, L: float, r_max: float, dxi: float | None = None) -> np.ndarray:
    """Lattice points ``dxi * m`` with ``|dxi * m| <= r_max``, lexicographic order."""
    dxi = np.pi / L if dxi is None else float(dxi)
    m = int(np.floor(r_max / dxi + 1e-9))
    axis = np.arange(-m, m + 1) * dxi
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    pts = np.stack([c.ravel() for c in mesh], axis=1)
    keep = np.linalg.norm(pts, axis=1) <= r_max * (1 + 1e-12)
    return pts[keep]


def tau_cap(h: float) -> float:
    """Largest probe ``tau`` the grid resolves: ``pi / (2 h)``."""
    return np.pi / (2.0 * h)


def default_tau(xi, h: float) -> float:
    nx = float(np.linalg.norm(xi))
    return float(max(min(64.0 * max(1.0, nx), tau_cap(h)), 1.0, nx))


@dataclass(frozen=True, eq=False)
class FourierSamples:
    xi: np.ndarray
    values: np.ndarray
    tau: np.ndarray
    method: str
    grid: GridSpec
    Lam: float | None = None
    dxi: float | None = None
    r_max: float | None = None

    @property
    def size(self) -> int:
        return len(self.values)

    def hermitian_defect(self) -> float:
        """Largest ``|qhat(-xi) - conj(qhat(xi))|`` over pairs present in the set."""
        key = {tuple(np.round(x, 9)): v for x, v in zip(self.xi, self.values)}
        worst = 0.0
        for x, v in zip(self.xi, self.values):
            other = key.get(tuple(np.round(-x, 9) + 0.0))
            if other is not None:
                worst = max(worst, abs(other - np.conj(v)))
        return worst

    def write_csv(self, path) -> None:
        path = Path(path)
        d = self.xi.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"xi_{a}" for a in range(d)] + ["re", "im", "tau", "method"])
            for x, v, t in zip(self.xi, self.values, self.tau):
                w.writerow([_fmt(c) for c in x] + [_fmt(v.real), _fmt(v.imag), _fmt(t), self.method])
        meta = {"grid": self.grid.to_dict(), "Lam": self.Lam, "dxi": self.dxi, "r_max": self.r_max}
        with open(str(path) + ".json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)

    @classmethod
    def read_csv(cls, path) -> "FourierSamples":
        path = Path(path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        d = sum(1 for c in header if c.startswith("xi_"))
        arr = np.array([[float(c) for c in r[: d + 3]] for r in body]).reshape(-1, d + 3)
        method = body[0][d + 3] if body else "series"
        meta = json.loads(Path(str(path) + ".json").read_text())
        return cls(xi=arr[:, :d], values=arr[:, d] + 1j * arr[:, d + 1], tau=arr[:, d + 2], method=method,
                   grid=GridSpec.from_dict(meta["grid"]), Lam=meta.get("Lam"), dxi=meta.get("dxi"),
                   r_max=meta.get("r_max"))


def _fmt(x) -> str:
    return "%.17g" % float(x)


def _half_space(xi: np.ndarray) -> bool:
    """True for the representative of ``{xi, -xi}``: first nonzero entry positive."""
    nz = np.flatnonzero(xi)
    return nz.size == 0 or xi[nz[0]] > 0


def _sample_one(xi, tau, bsd1, bsd2, ops, method, K, centered, extrapolate):
    grid = bsd1.grid
    origin = grid.center if centered else None

    def raw(t):
        probe = make_probe(xi, t, origin=origin)
        if method == "series":
            val = series_S_diff(bsd1, bsd2, probe, K)
        else:
            val = isozaki_S(ops[0], probe).S - isozaki_S(ops[1], probe).S
        if centered:
            val *= np.exp(-1j * (np.asarray(xi) @ grid.center))
        return complex(val)

    val = raw(tau)
    if extrapolate:
        val = 2.0 * val - raw(0.5 * tau)
    return val


def fourier_sample(bsd1: BoundarySpectralData, bsd2: BoundarySpectralData, xi_grid, tau=None,
                   K: int | None = None, method: str = "series", ops=None, symmetrize: bool = True,
                   centered: bool = True, extrapolate: bool = False, workers: int = 1,
                   Lam: float | None = None, dxi: float | None = None,
                   r_max: float | None = None) -> FourierSamples:
    """Estimate ``qhat_1 - qhat_2`` at every frequency of ``xi_grid``.

    Parameters
    ----------
    tau : float, array or None
        Probe size per frequency.  ``None`` picks ``64 max(1, |xi|)`` capped
        at :func:`tau_cap`.
    method : {"series", "direct"}
        ``"series"`` sums the spectral series over ``K`` aligned pairs.
        ``"direct"`` solves the two scattering problems; it needs ``ops`` or
        potentials attached to the BSDs.
    symmetrize : bool
        Evaluate one frequency of each pair ``{xi, -xi}`` and fill the other
        by conjugation (real part only at ``xi = 0``).
    centered : bool
        Put the probe origin at the box center.
    extrapolate : bool
        Richardson step ``2 S(tau) - S(tau / 2)``.
    workers : int
        Thread count; results do not depend on it.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    grid = bsd1.grid
    xi_grid = np.atleast_2d(np.asarray(xi_grid, dtype=float))
    if xi_grid.shape[1] != grid.d:
        raise ValueError("frequency dimension does not match the grid")
    m = len(xi_grid)
    if tau is None:
        taus = np.array([default_tau(x, grid.h) for x in xi_grid])
    else:
        taus = np.broadcast_to(np.asarray(tau, dtype=float), (m,)).copy()
    if method == "direct" and ops is None:
        if bsd1.field is None or bsd2.field is None:
            raise ValueError("direct sampling needs operators or BSDs carrying their potentials")
        ops = (assemble(grid, bsd1.field), assemble(grid, bsd2.field))

    todo = [i for i in range(m) if not symmetrize or _half_space(xi_grid[i])]
    args = [(xi_grid[i], taus[i], bsd1, bsd2, ops, method, K, centered, extrapolate) for i in todo]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            vals = list(ex.map(lambda a: _sample_one(*a), args))
    else:
        vals = [_sample_one(*a) for a in args]

    values = np.full(m, np.nan + 0j)
    for i, v in zip(todo, vals):
        values[i] = v
    if symmetrize:
        index = {tuple(np.round(x, 9)): i for i, x in enumerate(xi_grid)}
        for i in range(m):
            x = xi_grid[i]
            if not np.any(x):
                values[i] = values[i].real
            elif not _half_space(x):
                j = index.get(tuple(np.round(-x, 9) + 0.0))
                if j is None:
                    values[i] = _sample_one(x, taus[i], bsd1, bsd2, ops, method, K, centered, extrapolate)
                else:
                    values[i] = np.conj(values[j])
                    taus[i] = taus[j]
    return FourierSamples(xi=xi_grid, values=values, tau=taus, method=method, grid=grid.spec,
                          Lam=Lam, dxi=dxi, r_max=r_max)


def choose_cutoff(Lam: float, d: int, calibration: float = 1.0, r_max: float | None = None,
                  denominator: float | None = None) -> float:
    """``r = calibration * Lam^(-2 / (denominator + 2))`` with ``denominator = d`` by default.

    ``Lam = 0`` means perfect data and returns ``r_max``.
    """
    if Lam < 0:
        raise ValueError("Lam must be non-negative")
    if Lam == 0:
        if r_max is None:
            raise ValueError("Lam = 0 needs r_max")
        return float(r_max)
    den = d if denominator is None else denominator
    return float(calibration * Lam ** (-2.0 / (den + 2.0)))


def invert(samples: FourierSamples, r: float, grid: Grid, return_residue: bool = False):
    """Low-pass inverse transform on the interior nodes.

    ``q(x) = (2 pi)^-d dxi^d sum_{|xi| < r} qhat(xi) exp(i xi.x)``; the real
    part is returned.  With ``return_residue`` the relative size of the
    discarded imaginary part comes back as well.
    """
    dxi = samples.dxi if samples.dxi is not None else np.pi / grid.L
    if samples.r_max is not None and r > samples.r_max * (1 + 1e-12):
        raise ValueError(f"cutoff {r:g} exceeds the sampled radius {samples.r_max:g}")
    if samples.r_max is None and samples.size:
        covered = float(np.max(np.linalg.norm(samples.xi, axis=1)))
        if r > covered + dxi:
            raise ValueError(f"cutoff {r:g} exceeds the sampled radius {covered:g}")
    keep = np.linalg.norm(samples.xi, axis=1) < r
    xi, val = samples.xi[keep], samples.values[keep]
    out = np.zeros(grid.size, dtype=complex)
    pts = grid.points
    for start in range(0, len(xi), 256):
        blk = slice(start, start + 256)
        out += np.exp(1j * (pts @ xi[blk].T)) @ val[blk]
    out *= (dxi / (2.0 * np.pi)) ** grid.d
    real = out.real.copy()
    if not return_residue:
        return real
    denom = np.linalg.norm(out)
    residue = float(np.linalg.norm(out.imag) / denom) if denom > 0 else 0.0
    return real, residue


def _cell_transform(grid: Grid, freqs: np.ndarray) -> np.ndarray:
    """``int_{cell_i} exp(-i xi x) dx`` for the cells tiling ``[0, L]`` around each node.

    Interior cells have width ``h``; the two end cells reach the walls and
    have width ``1.5 h``.
    """
    h, L = grid.h, grid.L
    x = np.asarray(grid.axis)
    lo = x - 0.5 * h
    hi = x + 0.5 * h
    lo[0], hi[-1] = 0.0, L
    xi = freqs[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        E = (np.exp(-1j * xi * lo) - np.exp(-1j * xi * hi)) / (1j * xi)
    zero = freqs == 0
    E[zero] = (hi - lo)[None, :]
    return E


def fourier_transform(values, grid: Grid, freqs) -> np.ndarray:
    """``qhat`` of the piecewise-constant zero extension on the tensor grid ``freqs^d``."""
    Q = np.asarray(values, dtype=float).reshape(grid.shape)
    E = _cell_transform(grid, np.asarray(freqs, dtype=float))
    if grid.d == 2:
        return E @ Q @ E.T
    T = np.tensordot(E, Q, axes=([1], [2]))  # (f3, n0, n1)
    return np.stack([E @ T[k] @ E.T for k in range(len(freqs))], axis=2)


def h_minus1_norm(values, grid: Grid, dxi: float | None = None, R: float | None = None,
                  return_tail: bool = False):
    """``H^-1`` norm of the zero-extended grid field.

    The frequency integral runs over the box ``|xi_a| <= R`` (default
    ``pi / h``) with spacing ``dxi`` (default ``pi / (4 L)``).  With
    ``return_tail`` the bound ``||q||_{L^2}^2 / R^2`` on the omitted part of
    the squared norm is returned as well.
    """
    dxi = np.pi / (4.0 * grid.L) if dxi is None else float(dxi)
    R = np.pi / grid.h if R is None else float(R)
    m = int(np.floor(R / dxi))
    freqs = np.arange(-m, m + 1) * dxi
    d = grid.d
    Q = np.asarray(values, dtype=float).reshape(grid.shape)
    E = _cell_transform(grid, freqs)
    f2 = freqs ** 2
    if d == 2:
        qh = E @ Q @ E.T
        wgt = 1.0 / (1.0 + f2[:, None] + f2[None, :])
        total = float(np.sum(wgt * np.abs(qh) ** 2))
    else:
        T = np.tensordot(E, Q, axes=([1], [2]))
        base = f2[:, None] + f2[None, :]
        total = 0.0
        for k in range(len(freqs)):
            qh = E @ T[k] @ E.T
            total += float(np.sum(np.abs(qh) ** 2 / (1.0 + base + f2[k])))
    sq = total * (dxi / (2.0 * np.pi)) ** d
    norm = float(np.sqrt(sq))
    if not return_tail:
        return norm
    tail = norm_omega(values, grid) ** 2 / R ** 2
    return norm, float(tail)


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    r: float
    Lam: float
    values: np.ndarray
    grid: GridSpec
    imag_residue: float
    h1_error: float | None = None
    l2_error: float | None = None
    extra: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "Lam": self.Lam,
            "grid": self.grid.to_dict(),
            "imag_residue": self.imag_residue,
            "h1_error": self.h1_error,
            "l2_error": self.l2_error,
            "values": [float(v) for v in self.values],
            **self.extra,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def reconstruct(samples: FourierSamples, Lam: float, calibration: float = 1.0, truth=None,
                r: float | None = None) -> ReconstructionResult:
    """Choose the cutoff from ``Lam``, invert, and score against ``truth`` when given."""
    grid = build_grid(samples.grid)
    r_max = samples.r_max
    if r_max is None:
        r_max = float(np.max(np.linalg.norm(samples.xi, axis=1)))
    if r is None:
        r = min(choose_cutoff(Lam, grid.d, calibration, r_max=r_max), r_max)
    values, residue = invert(samples, r, grid, return_residue=True)
    h1 = l2 = None
    if truth is not None:
        diff = values - np.asarray(truth, dtype=float)
        h1 = h_minus1_norm(diff, grid)
        l2 = norm_omega(diff, grid)
    return ReconstructionResult(r=float(r), Lam=float(Lam), values=values, grid=samples.grid,
                                imag_residue=residue, h1_error=h1, l2_error=l2)
