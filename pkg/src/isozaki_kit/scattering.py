"""Probe-driven Dirichlet problems and the boundary functional ``S``.

For a probe ``f = f^{+/-}`` and a spectral parameter ``z`` off the spectrum,
``u = f + v`` where the remainder ``v`` vanishes on the wall and solves::

    (A_q - z) v = -(q + lam_f - z) f        on interior nodes.

``lam_f`` is the energy attached to ``f``.  With ``dispersion="grid"`` (the
default) it is the grid-matched value :meth:`IsozakiProbe.discrete_lambda`,
and ``z`` defaults to the same number, so ``v`` is identically zero when
``q = 0``.  ``dispersion="continuum"`` uses ``(tau +/- i)^2`` instead.

The normal derivative of ``u`` is ``nu . grad f`` (exact) plus the flux trace
of ``v``.  With this split the discrete Green identity::

    S_1 - S_2 = <(q_1 u_1 - q_2 u_2), f^->_Omega

holds to roundoff, and ``S`` agrees with the spectral series built from flux
traces up to O(h^2).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .forward import BoundarySpectralData, DiscreteOperator, neumann_trace
from .geometry import boundary_mesh, inner_gamma, inner_omega, norm_gamma, norm_omega
from .probe import IsozakiProbe, eval_f, normal_derivative_f

RESIDUAL_TOL = 1e-10


class ScatteringError(RuntimeError):
    """A shifted system could not be solved to the residual contract."""


@dataclass(frozen=True, eq=False)
class ScatteringSolution:
    u: np.ndarray
    v: np.ndarray
    dn: np.ndarray
    z: complex
    lam_f: complex
    probe: IsozakiProbe
    sign: int
    residual: float


@dataclass(frozen=True, eq=False)
class IsozakiValue:
    S: complex
    probe: IsozakiProbe
    potential_hash: str | None


def _potential(op: DiscreteOperator) -> np.ndarray:
    return np.zeros(op.size) if op.field is None else op.field.values


def check_resolvent_set(op: DiscreteOperator, z: complex) -> None:
    z = complex(z)
    if z.imag == 0.0 and not z.real < op.gershgorin_lower():
        raise ScatteringError(
            f"real z={z.real:g} is not below the Gershgorin bound {op.gershgorin_lower():g}"
        )


def _condition_estimate(M: sp.csc_matrix, lu) -> float:
    try:
        inv = spla.LinearOperator(M.shape, matvec=lu.solve, rmatvec=lambda x: lu.solve(x, trans="H"),
                                  dtype=M.dtype)
        return float(spla.norm(M, 1) * spla.onenormest(inv))
    except Exception:  # the estimate is diagnostic only
        return float("inf")


def solve_shifted(op: DiscreteOperator, z: complex, rhs: np.ndarray) -> tuple:
    """Solve ``(A - z) x = rhs`` and return ``(x, relative residual)``.

    A sparse LU factorization is tried first and GMRES with an incomplete LU
    preconditioner second; both are checked against ``RESIDUAL_TOL``.
    """
    rhs = np.asarray(rhs, dtype=complex)
    rnorm = np.linalg.norm(rhs, axis=0)
    if np.all(rnorm == 0.0):
        return np.zeros_like(rhs), 0.0
    check_resolvent_set(op, z)
    M = op.shifted(complex(z))
    lu = None
    try:
        lu = spla.splu(M)
        x = lu.solve(rhs)
    except RuntimeError:
        x = None
    resid = _residual(M, x, rhs, rnorm) if x is not None else np.inf
    if resid > RESIDUAL_TOL:
        ilu = spla.spilu(M, drop_tol=1e-6)
        pre = spla.LinearOperator(M.shape, matvec=ilu.solve, dtype=complex)
        cols = rhs[:, None] if rhs.ndim == 1 else rhs
        sols = []
        for b in cols.T:
            xb, _ = spla.gmres(M, b, M=pre, rtol=1e-13, atol=0.0, restart=200, maxiter=50)
            sols.append(xb)
        x = np.stack(sols, axis=1).reshape(rhs.shape)
        resid = _residual(M, x, rhs, rnorm)
    if resid > RESIDUAL_TOL:
        cond = _condition_estimate(M, lu) if lu is not None else float("inf")
        raise ScatteringError(
            f"relative residual {resid:.2e} at z={complex(z):g}; condition estimate {cond:.2e}"
        )
    return x, resid


def _residual(M, x, rhs, rnorm) -> float:
    r = np.linalg.norm(M @ x - rhs, axis=0) / np.where(rnorm == 0, 1.0, rnorm)
    return float(np.max(r))


def probe_energy(op: DiscreteOperator, probe: IsozakiProbe, sign: int, dispersion: str) -> complex:
    if dispersion == "grid":
        return probe.discrete_lambda(sign, op.grid.h)
    if dispersion == "continuum":
        return probe.lam(sign)
    raise ValueError(f"unknown dispersion {dispersion!r}")


def solve_u(op: DiscreteOperator, probe: IsozakiProbe, sign: int = 1, z: complex | None = None,
            dispersion: str = "grid", scheme: str = "flux") -> ScatteringSolution:
    """Solve the Dirichlet problem with boundary data ``f^{sign}``.

    Parameters
    ----------
    z : complex, optional
        Spectral parameter; defaults to the probe energy.
    scheme : {"flux", "three_point"}
        ``"flux"`` adds the flux trace of ``v`` to the exact derivative of
        ``f``.  ``"three_point"`` applies the one-sided 3-point formula to
        ``u`` with wall values ``f``.
    """
    grid = op.grid
    mesh = boundary_mesh(grid)
    lam_f = probe_energy(op, probe, sign, dispersion)
    z = lam_f if z is None else complex(z)
    f_int = eval_f(probe, sign, grid.points)
    # the full stencil maps the plane wave to its grid symbol times itself
    sym = probe.discrete_lambda(sign, grid.h)
    rhs = -(_potential(op) + sym - z) * f_int
    v, resid = solve_shifted(op, z, rhs)
    u = f_int + v
    f_b = eval_f(probe, sign, mesh.points)
    if scheme == "flux":
        dn = normal_derivative_f(probe, sign, mesh.points, mesh.normals) + neumann_trace(v, grid, mesh)
    else:
        dn = neumann_trace(u, grid, mesh, boundary_values=f_b, scheme=scheme)
    return ScatteringSolution(u=u, v=v, dn=dn, z=z, lam_f=lam_f, probe=probe, sign=int(np.sign(sign)),
                              residual=resid)


def isozaki_S(op: DiscreteOperator, probe: IsozakiProbe, dispersion: str = "grid",
              scheme: str = "flux") -> IsozakiValue:
    """``S = <d_nu u^+, f^->_Gamma`` with ``u^+`` solved at ``z = lam^+``."""
    mesh = boundary_mesh(op.grid)
    sol = solve_u(op, probe, +1, dispersion=dispersion, scheme=scheme)
    S = complex(inner_gamma(sol.dn, eval_f(probe, -1, mesh.points), mesh))
    digest = op.field.digest() if op.field is not None else None
    return IsozakiValue(S=S, probe=probe, potential_hash=digest)


def remainder_pairing(op: DiscreteOperator, sol: ScatteringSolution) -> complex:
    """``<q v^+, f^->_Omega``; tends to zero as ``tau`` grows."""
    fm = eval_f(sol.probe, -1, op.grid.points)
    return complex(inner_omega(_potential(op) * sol.v, fm, op.grid))


def boundary_pairings(bsd: BoundarySpectralData, probe: IsozakiProbe, K: int | None = None) -> tuple:
    """``(<f^+, psi_k>_Gamma, <f^-, psi_k>_Gamma)`` for ``k < K``."""
    K = bsd.K if K is None else int(K)
    mesh = bsd.mesh
    P = bsd.traces[:K]
    w = mesh.weights
    fp = eval_f(probe, +1, mesh.points)
    fm = eval_f(probe, -1, mesh.points)
    return P @ (w * fp), P @ (w * fm)


def _guard(denom: np.ndarray) -> None:
    if np.any(np.abs(denom) < 1e-12):
        raise ZeroDivisionError("spectral parameter within 1e-12 of an eigenvalue")


def series_neumann_diff(bsd: BoundarySpectralData, probe: IsozakiProbe, lam: complex, mu: complex,
                        K: int | None = None, sign: int = 1) -> np.ndarray:
    """``(mu - lam) sum_k <f, psi_k> psi_k / ((lam - lam_k)(mu - lam_k))``.

    Approximates ``d_nu u_lam - d_nu u_mu`` for the probe ``f^{sign}``.
    """
    K = bsd.K if K is None else int(K)
    if K > bsd.K:
        raise ValueError(f"K={K} exceeds the {bsd.K} stored pairs")
    if lam == mu:
        return np.zeros(bsd.mesh.size, dtype=complex)
    lk = bsd.eigenvalues[:K]
    d1, d2 = lam - lk, mu - lk
    _guard(d1)
    _guard(d2)
    mesh = bsd.mesh
    f = eval_f(probe, sign, mesh.points)
    coef = bsd.traces[:K] @ (mesh.weights * f)
    return (mu - lam) * ((coef / (d1 * d2)) @ bsd.traces[:K])


def series_terms(bsd1: BoundarySpectralData, bsd2: BoundarySpectralData, probe: IsozakiProbe,
                 K: int | None = None, z: complex | None = None) -> tuple:
    """Per-index terms ``(A_k, B_k, C_k)`` of the spectral series for ``S_1 - S_2``.

    ``z`` defaults to the grid-matched ``lam^+``.  The traces must be aligned.
    """
    if bsd1.grid.spec != bsd2.grid.spec:
        raise ValueError("BSDs live on different grids")
    K = min(bsd1.K, bsd2.K) if K is None else int(K)
    if K > min(bsd1.K, bsd2.K):
        raise ValueError(f"K={K} exceeds the stored pairs")
    z = probe.discrete_lambda(+1, bsd1.grid.h) if z is None else complex(z)
    l1, l2 = bsd1.eigenvalues[:K], bsd2.eigenvalues[:K]
    _guard(z - l1)
    _guard(z - l2)
    mesh = bsd1.mesh
    w = mesh.weights
    fp = eval_f(probe, +1, mesh.points)
    fm = eval_f(probe, -1, mesh.points)
    P1, P2 = bsd1.traces[:K], bsd2.traces[:K]
    D = P1 - P2
    p2, m1, m2 = P2 @ (w * fp), P1 @ (w * fm), P2 @ (w * fm)
    pd, md = D @ (w * fp), D @ (w * fm)
    A = pd * np.conj(m1) / (z - l1)
    B = p2 * np.conj(md) / (z - l1)
    C = (l1 - l2) / ((z - l1) * (z - l2)) * p2 * np.conj(m2)
    return A, B, C


def series_S_diff(bsd1: BoundarySpectralData, bsd2: BoundarySpectralData, probe: IsozakiProbe,
                  K: int | None = None, z: complex | None = None) -> complex:
    """Spectral-series value of ``S_1 - S_2`` truncated at ``K`` pairs."""
    A, B, C = series_terms(bsd1, bsd2, probe, K, z)
    return complex(np.sum(A + B + C))


def duality_coeff(op: DiscreteOperator, probe: IsozakiProbe, sign: int, z: complex | None,
                  bsd: BoundarySpectralData, k: int) -> tuple:
    """``(<u_z, phi_k>_Omega, <f, psi_k>_Gamma / (z - lam_k))``."""
    if bsd.eigenfunctions is None:
        raise ValueError("BSD was built without eigenfunctions")
    sol = solve_u(op, probe, sign, z)
    mesh = bsd.mesh
    f = eval_f(probe, sign, mesh.points)
    lhs = complex(inner_omega(sol.u, bsd.eigenfunctions[:, k], op.grid))
    rhs = complex(inner_gamma(f, bsd.traces[k], mesh)) / (sol.z - bsd.eigenvalues[k])
    return lhs, rhs


def parseval_gap(op: DiscreteOperator, probe: IsozakiProbe, sign: int, z: complex | None,
                 bsd: BoundarySpectralData) -> float:
    """Relative gap between ``sum_k |<f, psi_k>/(z - lam_k)|^2`` and ``||u_z||^2``."""
    sol = solve_u(op, probe, sign, z)
    mesh = bsd.mesh
    f = eval_f(probe, sign, mesh.points)
    coef = (bsd.traces @ (mesh.weights * f)) / (sol.z - bsd.eigenvalues)
    total = float(np.sum(np.abs(coef) ** 2))
    ref = norm_omega(sol.u, op.grid) ** 2
    return abs(total - ref) / ref


def neumann_flattening(op1: DiscreteOperator, op2: DiscreteOperator, probe: IsozakiProbe, mus,
                       p: float | None = None) -> np.ndarray:
    """``||d_nu u_{1,mu} - d_nu u_{2,mu}||_{L^p(Gamma)}`` for each real ``mu``.

    Both problems use the boundary data ``f^+``.  ``p`` defaults to
    ``2d/(d+2)``.
    """
    grid = op1.grid
    if op2.grid.spec != grid.spec:
        raise ValueError("operators live on different grids")
    d = grid.d
    p = 2.0 * d / (d + 2.0) if p is None else p
    mesh = boundary_mesh(grid)
    out = []
    for mu in mus:
        s1 = solve_u(op1, probe, +1, z=mu)
        s2 = solve_u(op2, probe, +1, z=mu)
        out.append(norm_gamma(s1.dn - s2.dn, mesh, p))
    return np.array(out)
