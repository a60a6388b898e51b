"""Complex exponential probes ``f^{+/-}(x) = exp(i (tau +/- i) eta^{+/-} . x)``.

For a frequency ``xi``, a unit vector ``eta`` orthogonal to ``xi`` and
``tau >= max(1, |xi|)``::

    beta     = sqrt(1 - |xi|^2 / (4 tau^2))
    eta^{+/-} = beta * eta -/+ xi / (2 tau)
    lam^{+/-} = (tau +/- i)^2

Both ``eta^{+/-}`` are real unit vectors, so ``f^{+/-}`` solves
``(-Laplace - lam^{+/-}) f = 0`` and ``f^+ * conj(f^-) = exp(-i xi.x + xi.x/tau)``.

A probe may carry an ``origin`` ``c``; the exponentials are then evaluated at
``x - c``.  Shifting the origin to the middle of the box halves the largest
``|xi . (x - c)|`` and with it the ``exp(xi.x/tau)`` bias.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Grid


def choose_eta(xi) -> np.ndarray:
    """Unit vector orthogonal to ``xi``.

    ``e_1`` when ``xi = 0``; otherwise the normalized projection onto
    ``xi``'s orthogonal complement of the first standard basis vector that is
    not parallel to ``xi``.
    """
    xi = np.asarray(xi, dtype=float)
    d = xi.size
    nx = np.linalg.norm(xi)
    if nx == 0.0:
        return np.eye(d)[0]
    for e in np.eye(d):
        if abs(e @ xi) < (1.0 - 1e-12) * nx:
            eta = e - (e @ xi) / nx ** 2 * xi
            # second pass removes what cancellation left along xi
            eta = eta - (eta @ xi) / nx ** 2 * xi
            return eta / np.linalg.norm(eta)
    raise AssertionError("unreachable for d >= 2")


@dataclass(frozen=True, eq=False)
class IsozakiProbe:
    xi: np.ndarray
    tau: float
    eta: np.ndarray
    origin: np.ndarray | None = None

    @property
    def d(self) -> int:
        return self.xi.size

    @property
    def beta(self) -> float:
        s = float(np.linalg.norm(self.xi)) / (2.0 * self.tau)
        return float(np.sqrt((1.0 - s) * (1.0 + s)))

    @property
    def eta_plus(self) -> np.ndarray:
        return self.beta * self.eta - self.xi / (2.0 * self.tau)

    @property
    def eta_minus(self) -> np.ndarray:
        return self.beta * self.eta + self.xi / (2.0 * self.tau)

    @property
    def lam_plus(self) -> complex:
        return complex(self.tau + 1j) ** 2

    @property
    def lam_minus(self) -> complex:
        return complex(self.tau - 1j) ** 2

    def lam(self, sign: int) -> complex:
        return self.lam_plus if _sign(sign) > 0 else self.lam_minus

    def wavevector(self, sign: int) -> np.ndarray:
        """Complex wavevector ``(tau +/- i) eta^{+/-}``."""
        if _sign(sign) > 0:
            return (self.tau + 1j) * self.eta_plus
        return (self.tau - 1j) * self.eta_minus

    def discrete_lambda(self, sign: int, h: float) -> complex:
        """Grid-matched spectral parameter for ``f^{+/-}``.

        ``conj(symbol(k^{-/+}))`` with the 1-D second-difference symbol
        summed over axes.  It tends to ``lam^{+/-}`` as ``h tau -> 0`` and
        makes the discrete Green identity between ``f^+`` and ``f^-`` exact.
        """
        return complex(np.conj(discrete_symbol(self.wavevector(-_sign(sign)), h)))

    def with_tau(self, tau: float) -> "IsozakiProbe":
        return make_probe(self.xi, tau, eta=self.eta, origin=self.origin)


def _sign(sign) -> int:
    if sign in (1, "+", +1.0):
        return 1
    if sign in (-1, "-", -1.0):
        return -1
    raise ValueError(f"sign must be +1 or -1, got {sign!r}")


def make_probe(xi, tau: float, eta=None, origin=None) -> IsozakiProbe:
    """Build a probe, choosing ``eta`` by :func:`choose_eta` unless given."""
    xi = np.array(xi, dtype=float).ravel()
    if xi.size not in (2, 3):
        raise ValueError("frequency must have 2 or 3 components")
    tau = float(tau)
    nx = float(np.linalg.norm(xi))
    if tau < max(1.0, nx):
        raise ValueError(f"tau={tau} must be at least max(1, |xi|)={max(1.0, nx)}")
    eta = choose_eta(xi) if eta is None else np.array(eta, dtype=float).ravel()
    if abs(np.linalg.norm(eta) - 1.0) > 1e-12 or abs(eta @ xi) > 1e-12 * max(1.0, nx):
        raise ValueError("eta must be a unit vector orthogonal to xi")
    if origin is not None:
        origin = np.array(origin, dtype=float).ravel()
        origin.setflags(write=False)
    xi.setflags(write=False)
    eta.setflags(write=False)
    return IsozakiProbe(xi=xi, tau=tau, eta=eta, origin=origin)


def _shift(probe: IsozakiProbe, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x if probe.origin is None else x - probe.origin


def eval_f(probe: IsozakiProbe, sign: int, x) -> np.ndarray:
    """``f^{+/-}`` at points ``x`` of shape ``(..., d)``."""
    return np.exp(1j * (_shift(probe, x) @ probe.wavevector(sign)))


def normal_derivative_f(probe: IsozakiProbe, sign: int, x, normals) -> np.ndarray:
    """Exact ``nu . grad f^{+/-}`` at boundary points."""
    k = probe.wavevector(sign)
    return 1j * (np.asarray(normals) @ k) * eval_f(probe, sign, x)


def discrete_symbol(k, h: float) -> complex:
    """``sum_a (4/h^2) sin^2(k_a h / 2)``: the eigenvalue of ``-Laplace_h`` on ``exp(i k.x)``."""
    k = np.asarray(k)
    return complex(np.sum(4.0 / h ** 2 * np.sin(0.5 * h * k) ** 2))


def product_defect(probe: IsozakiProbe, grid: Grid) -> float:
    """``max_x |f^+ conj(f^-) - exp(-i xi.x)|`` over the interior nodes."""
    x = _shift(probe, grid.points)
    # one exponential for the product keeps the xi = 0 case exact
    prod = np.exp(1j * (x @ (probe.wavevector(+1) - np.conj(probe.wavevector(-1)))))
    target = np.exp(-1j * (x @ probe.xi))
    return float(np.max(np.abs(prod - target)))


def tau_schedule(tau0: float, count: int) -> np.ndarray:
    """Geometric schedule ``tau0 * 2**j``, ``j = 0 .. count-1``."""
    return float(tau0) * 2.0 ** np.arange(count)
