"""The cusp counterexample field on {0 < x1, x2 < 1, 0 < x3 < x2^gamma}.

    v = (0, -(s+1) x3 x2^s, x2^{s+1})

Inner integrals over x1 and x3 are done in closed form; the remaining
x2-integral is either evaluated exactly or with graded Gauss quadrature.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InadmissibleExponentError(ValueError):
    pass


def admissible_window(gamma: float) -> tuple[float, float]:
    """Open interval of exponents s for which the counterexample applies."""
    up = -(gamma + 1) / 2
    low = max(up - (gamma - 1), up - 1)
    return low, up


def check_admissible(gamma: float, s: float) -> None:
    if gamma <= 1:
        raise InadmissibleExponentError(f"gamma must exceed 1, got {gamma}")
    lo, up = admissible_window(gamma)
    if not lo < s < up:
        raise InadmissibleExponentError(f"s = {s} outside ({lo}, {up}) for gamma = {gamma}")


@dataclass(frozen=True)
class CuspField:
    gamma: float
    s: float

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, float)
        x2, x3 = X[..., 1], X[..., 2]
        s = self.s
        return np.stack([np.zeros_like(x2), -(s + 1) * x3 * x2 ** s, x2 ** (s + 1)], -1)

    def gradient(self, X) -> np.ndarray:
        """Dv[j, k] = d v_j / d x_k."""
        X = np.asarray(X, float)
        x2, x3 = X[..., 1], X[..., 2]
        s = self.s
        D = np.zeros(X.shape[:-1] + (3, 3))
        D[..., 1, 1] = -s * (s + 1) * x3 * x2 ** (s - 1)
        D[..., 1, 2] = -(s + 1) * x2 ** s
        D[..., 2, 1] = (s + 1) * x2 ** s
        return D

    def strain(self, X) -> np.ndarray:
        D = self.gradient(X)
        return 0.5 * (D + np.swapaxes(D, -1, -2))

    def divergence(self, X) -> np.ndarray:
        return np.trace(self.gradient(X), axis1=-2, axis2=-1)

    def trace_free_strain(self, X) -> np.ndarray:
        return self.strain(X) - self.divergence(X)[..., None, None] / 3 * np.eye(3)

    # x2-densities after integrating x1 over (0,1) and x3 over (0, x2^gamma)
    def density_grad(self, x2):
        g, s = self.gamma, self.s
        return s ** 2 * (s + 1) ** 2 * x2 ** (2 * s - 2 + 3 * g) / 3 + 2 * (s + 1) ** 2 * x2 ** (2 * s + g)

    def density_strain(self, x2):
        g, s = self.gamma, self.s
        return s ** 2 * (s + 1) ** 2 * x2 ** (2 * s - 2 + 3 * g) / 3

    def density_div(self, x2):
        return self.density_strain(x2)

    def density_l(self, x2):
        g, s = self.gamma, self.s
        return 2 * s ** 2 * (s + 1) ** 2 * x2 ** (2 * s - 2 + 3 * g) / 9


@dataclass(frozen=True)
class CuspParams:
    gamma: float
    s: float
    eps: tuple = (1e-2, 1e-3, 1e-4)

    def __post_init__(self):
        if not self.gamma > 1:
            raise InadmissibleExponentError(f"gamma must exceed 1, got {self.gamma}")
        if any(not e > 0 for e in self.eps):
            raise ValueError("truncation levels must be positive")

    @property
    def admissible(self) -> bool:
        lo, up = admissible_window(self.gamma)
        return lo < self.s < up

    @property
    def exponents(self) -> dict:
        """x2-exponents of the leading densities of ||Dv||^2 and ||l(v)||^2."""
        g, s = self.gamma, self.s
        return {"grad": 2 * s + g, "l": 2 * s - 2 + 3 * g,
                "lhs_diverges": bool(2 * s + g <= -1), "rhs_converges": bool(s > (1 - 3 * g) / 2)}


def cusp_field(gamma: float = 2.0, s: float = -2.0) -> CuspField:
    """Closed-form field; any real s is accepted (s = -1 gives v = (0, 0, 1))."""
    if not gamma > 1:
        raise InadmissibleExponentError(f"gamma must exceed 1, got {gamma}")
    return CuspField(float(gamma), float(s))


def power_integral(p: float, a: float, b: float) -> float:
    """int_a^b x^p dx."""
    if abs(p + 1) < 1e-14:
        return float(np.log(b / a))
    return float((b ** (p + 1) - a ** (p + 1)) / (p + 1))


def graded_integral(f, a: float, b: float, ratio: float = 0.5, order: int = 12) -> float:
    """Gauss-Legendre on geometrically graded panels [a, b] accumulating at a."""
    edges = [b]
    while edges[-1] * ratio > a:
        edges.append(edges[-1] * ratio)
    edges.append(a)
    edges = np.array(edges[::-1])
    g, w = np.polynomial.legendre.leggauss(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    x = 0.5 * (hi - lo) * g[None] + 0.5 * (hi + lo)
    return float(np.sum(0.5 * (hi - lo) * w[None] * f(x)))


@dataclass
class CuspNorms:
    eps: float
    grad2: float            # ||Dv||^2 on {x2 > eps}
    l2: float               # ||l(v)||^2 on {x2 > eps}
    strain2: float
    div2: float
    v2_Q: float             # ||v||^2 on the fixed cube Q
    lhs: float              # ||Dv||^2 + ||v||^2_Q
    rhs: float              # ||l(v)||^2 + ||v||^2_Q
    lhs_quad: float
    rhs_quad: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs


def q_cube(gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Fixed cube Q = (1/4, 3/4)^2 x (0, (3/4) 4^{-gamma}) inside the cusp."""
    return np.array([0.25, 0.25, 0.0]), np.array([0.75, 0.75, 0.75 * 0.25 ** gamma])


def v_norm_Q(field: CuspField) -> float:
    s = field.s
    lo, hi = q_cube(field.gamma)
    a = hi[2]
    w1 = hi[0] - lo[0]
    # |v|^2 = (s+1)^2 x3^2 x2^{2s} + x2^{2s+2}
    return w1 * ((s + 1) ** 2 * a ** 3 / 3 * power_integral(2 * s, 0.25, 0.75)
                 + a * power_integral(2 * s + 2, 0.25, 0.75))


def cusp_truncated_norms(gamma: float, s: float, eps: float) -> CuspNorms:
    if not eps > 0:
        raise ValueError(f"truncation level must be positive, got {eps}")
    if eps >= 1:
        raise ValueError("truncation level must be below 1")
    f = cusp_field(gamma, s)
    g = gamma
    c = s ** 2 * (s + 1) ** 2
    e1 = 2 * s - 2 + 3 * g
    grad = c / 3 * power_integral(e1, eps, 1.0) + 2 * (s + 1) ** 2 * power_integral(2 * s + g, eps, 1.0)
    strain = c / 3 * power_integral(e1, eps, 1.0)
    l2 = 2 * c / 9 * power_integral(e1, eps, 1.0)
    vq = v_norm_Q(f)
    gq = graded_integral(f.density_grad, eps, 1.0)
    lq = graded_integral(f.density_l, eps, 1.0)
    return CuspNorms(eps=eps, grad2=grad, l2=l2, strain2=strain, div2=strain, v2_Q=vq,
                     lhs=grad + vq, rhs=l2 + vq, lhs_quad=gq + vq, rhs_quad=lq + vq)


def cusp_slope(gamma: float, s: float, eps_list) -> dict:
    """Growth of ||Dv||^2 as eps -> 0.  The slope is d log ||Dv||^2 / d log(1/eps),
    predicted to be -(2s + gamma + 1) whenever that is positive."""
    eps = np.asarray(sorted(eps_list, reverse=True), float)
    lhs = np.array([cusp_truncated_norms(gamma, s, e).grad2 for e in eps])
    # no power law to fit when the gradient vanishes (s = -1)
    slope = float(np.polyfit(np.log(1 / eps), np.log(lhs), 1)[0]) if np.all(lhs > 0) else float("nan")
    return {"eps": eps.tolist(), "grad2": lhs.tolist(), "slope": slope,
            "predicted": -(2 * s + gamma + 1)}


def halving_growth(gamma: float, s: float, eps: float) -> float:
    return cusp_truncated_norms(gamma, s, eps / 2).lhs / cusp_truncated_norms(gamma, s, eps).lhs


def strain_identity_residual(D: np.ndarray, w: np.ndarray) -> float:
    """| int |l|^2 - int |eps|^2 + (1/n) int div^2 | / int |eps|^2 for
    gradients D (N, n, n) with quadrature weights w."""
    n = D.shape[-1]
    S = 0.5 * (D + np.swapaxes(D, -1, -2))
    tr = np.trace(D, axis1=-2, axis2=-1)
    Lm = S - tr[:, None, None] / n * np.eye(n)
    a = np.sum(w * (Lm ** 2).sum((1, 2)))
    b = np.sum(w * (S ** 2).sum((1, 2)))
    c = np.sum(w * tr ** 2)
    return float(abs(a - b + c / n) / max(b, 1e-300))
