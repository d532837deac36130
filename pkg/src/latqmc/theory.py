"""Weight derivation and error bounds for tailored lattice rules.

The chain implemented here: a coefficient decay model (b_j, p0) plus a
rate-tuning parameter delta fix the exponent lambda; lambda fixes the
kernel constant theta(lambda) = 2*zeta(2*lambda) / (2*pi^2)^lambda; those
fix product-and-order-dependent (POD) weights

    gamma_u = Gamma_|u| * prod_{j in u} gamma_j,
    Gamma_l = (l!)^(2/(1+lambda)),
    gamma_j = (b_j / sqrt(theta(lambda)))^(2/(1+lambda)),

which drive both the CBC construction and the a-priori root-mean-square
error bound.  All subset sums are evaluated by an O(s^2) order-grouped
recursion over elementary symmetric polynomials, never by enumeration.

Order factors are stored in log space: (l!)^(2/(1+lambda)) leaves the
double range near l ~ 150, while every consumer only ever needs
consecutive-order ratios, which stay modest for all s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import DimensionMismatchError, DomainError, WeightOverflowError

__all__ = [
    "DecayModel",
    "PodWeights",
    "ConvergenceModel",
    "theta",
    "choose_lambda",
    "pod_weights",
    "weight_sum",
    "norm_bound",
    "rms_error_bound",
    "predicted_rate",
]


# --- zeta and theta -------------------------------------------------------------

# Bernoulli numbers B_2..B_14; B_14 only feeds the asserted tail bound.
_BERNOULLI = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
)
_ZETA_N = 16


def _zeta_em(a: float) -> float:
    """zeta(a) for a > 1 by Euler-Maclaurin around N=16.

    With six correction terms the first omitted term is below 1e-16 of the
    result for a in (1, 2]; the bound is asserted, not assumed.
    """
    n = _ZETA_N
    total = sum(k ** -a for k in range(1, n))
    total += n ** (1.0 - a) / (a - 1.0)
    total += 0.5 * n ** -a
    rising = a  # a(a+1)...(a+2j-2), built incrementally
    fact = 1.0  # (2j)!
    power = n ** (-a - 1.0)
    term = 0.0
    for j, b2j in enumerate(_BERNOULLI, start=1):
        fact *= (2 * j - 1) * (2 * j)
        term = b2j / fact * rising * power
        if j == len(_BERNOULLI):
            break  # last entry bounds the tail only
        total += term
        rising *= (a + 2 * j - 1) * (a + 2 * j)
        power /= n * n
    if abs(term) > 1e-13 * abs(total):
        raise ArithmeticError(f"zeta tail bound violated at a = {a}")
    return total


def theta(lam: float) -> float:
    """Kernel constant 2*zeta(2*lambda) / (2*pi^2)^lambda for lambda in (1/2, 1].

    theta(1) = 1/6; theta grows without bound as lambda -> 1/2 where the
    zeta argument hits its pole.
    """
    if not 0.5 < lam <= 1.0:
        raise DomainError(f"lambda must lie in (1/2, 1], got {lam}")
    return 2.0 * _zeta_em(2.0 * lam) / (2.0 * math.pi**2) ** lam


def choose_lambda(p0: float, delta: float) -> float:
    """Exponent lambda for a decay class p0 and rate margin delta.

    Returns 1/(2 - 2*delta) when p0 <= 2/3 (the delta-tuned choice) and
    p0/(2 - p0) otherwise; either way the result satisfies the admissible
    window p0/(2-p0) <= lambda < 1.
    """
    if not 0.0 < p0 < 1.0:
        raise DomainError(f"p0 must lie in (0, 1), got {p0}")
    if not 0.0 < delta < 0.5:
        raise DomainError(f"delta must lie in (0, 1/2), got {delta}")
    lam = 1.0 / (2.0 - 2.0 * delta) if p0 <= 2.0 / 3.0 else p0 / (2.0 - p0)
    return lam


def predicted_rate(p0: float, delta: float) -> float:
    """Theoretical root-mean-square convergence exponent min(1/p0 - 1/2, 1 - delta)."""
    if not 0.0 < p0 < 1.0:
        raise DomainError(f"p0 must lie in (0, 1), got {p0}")
    if not 0.0 < delta < 0.5:
        raise DomainError(f"delta must lie in (0, 1/2), got {delta}")
    return min(1.0 / p0 - 0.5, 1.0 - delta)


# --- decay model ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DecayModel:
    """Coefficient decay data: b_j >= 0 for j = 1..s, a summability
    exponent p0 in (0, 1), and the coefficient lower bound a_min that b_j
    is already scaled by (1 when not applicable)."""

    b: np.ndarray
    p0: float
    a_min: float = 1.0

    def __post_init__(self) -> None:
        b = np.asarray(self.b, dtype=float)
        object.__setattr__(self, "b", b)
        if b.ndim != 1 or b.size < 1:
            raise DomainError("b must be a nonempty 1-d sequence")
        if np.any(b < 0.0) or not np.all(np.isfinite(b)):
            raise DomainError("decay terms b_j must be finite and >= 0")
        if not 0.0 < self.p0 < 1.0:
            raise DomainError(f"p0 must lie in (0, 1), got {self.p0}")
        if not self.a_min > 0.0:
            raise DomainError(f"a_min must be positive, got {self.a_min}")

    @property
    def s(self) -> int:
        return int(self.b.size)

    @property
    def p0_sum(self) -> float:
        """sum_j b_j^p0 over the truncated range (reported, must be finite)."""
        return float(np.sum(self.b**self.p0))

    @classmethod
    def from_terms(cls, term, s: int, p0: float, a_min: float = 1.0):
        """Build from a callable j -> b_j, evaluated at j = 1..s."""
        return cls(b=np.array([float(term(j)) for j in range(1, s + 1)]), p0=p0, a_min=a_min)


# --- POD weights -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PodWeights:
    """POD weights gamma_u = Gamma_|u| * prod_{j in u} gamma_j.

    dim_factors holds gamma_1..gamma_s; log_order_factors holds
    ln(Gamma_0)..ln(Gamma_s) with Gamma_0 = 1.  Order factors are kept in
    log space so the type stays usable far beyond the factorial overflow
    point; `order_factors` exposes them linearly.
    """

    dim_factors: np.ndarray
    log_order_factors: np.ndarray

    def __post_init__(self) -> None:
        g = np.asarray(self.dim_factors, dtype=float)
        lg = np.asarray(self.log_order_factors, dtype=float)
        object.__setattr__(self, "dim_factors", g)
        object.__setattr__(self, "log_order_factors", lg)
        if g.ndim != 1 or g.size < 1:
            raise DomainError("dim_factors must be a nonempty 1-d sequence")
        if lg.shape != (g.size + 1,):
            raise DimensionMismatchError(
                f"log_order_factors must have length s+1 = {g.size + 1}"
            )
        if np.any(g < 0.0) or not np.all(np.isfinite(g)):
            raise DomainError("dimension factors must be finite and >= 0")
        if not np.all(np.isfinite(lg)) or lg[0] != 0.0:
            raise DomainError("log order factors must be finite with Gamma_0 = 1")

    @property
    def s(self) -> int:
        return int(self.dim_factors.size)

    @property
    def order_factors(self) -> np.ndarray:
        return np.exp(self.log_order_factors)

    def order_ratios(self) -> np.ndarray:
        """Gamma_l / Gamma_{l-1} for l = 1..s; never overflows."""
        return np.exp(np.diff(self.log_order_factors))

    def subset_weight(self, u) -> float:
        """gamma_u for a subset u of 1-based coordinate indices."""
        u = sorted(set(int(j) for j in u))
        if any(j < 1 or j > self.s for j in u):
            raise DomainError(f"subset {u} outside 1..{self.s}")
        log_g = self.log_order_factors[len(u)]
        prod = 1.0
        for j in u:
            prod *= self.dim_factors[j - 1]
        return float(math.exp(log_g) * prod)

    @classmethod
    def product(cls, gammas):
        """Product weights: Gamma_l = 1 for every order."""
        g = np.asarray(gammas, dtype=float)
        return cls(dim_factors=g, log_order_factors=np.zeros(g.size + 1))


def pod_weights(decay: DecayModel, lam: float) -> PodWeights:
    """POD weights tailored to a decay model at exponent lambda."""
    th = theta(lam)
    expo = 2.0 / (1.0 + lam)
    dims = (decay.b / math.sqrt(th)) ** expo
    orders = expo * gammaln(np.arange(decay.s + 1) + 1.0)
    return PodWeights(dim_factors=dims, log_order_factors=orders)


# --- subset sums (order-grouped, O(s^2)) -------------------------------------------


def _order_grouped_sum(dim_terms: np.ndarray, log_order_terms: np.ndarray) -> np.ndarray:
    """T_l = exp(log_order_terms[l]) * e_l(dim_terms) for l = 0..s.

    e_l is the elementary symmetric polynomial; the order factor is folded
    into the recursion through consecutive ratios so no huge intermediate
    is ever formed.
    """
    s = dim_terms.size
    ratio = np.exp(np.diff(log_order_terms))
    t = np.zeros(s + 1)
    t[0] = 1.0
    # overflow is detected on the result, not warned about per-step
    with np.errstate(over="ignore"):
        for j in range(s):
            t[1:] = t[1:] + (dim_terms[j] * ratio) * t[:-1]
    if not np.all(np.isfinite(t)):
        raise WeightOverflowError("order-grouped accumulation left the float range")
    return t


def weight_sum(weights: PodWeights, lam: float, s: int | None = None,
               theta_value: float | None = None) -> float:
    """sum over nonempty u of gamma_u^lambda * theta(lambda)^|u|.

    Exact rewriting as sum_l Gamma_l^lambda theta^l e_l(gamma_1^lambda ...)
    evaluated by the order-grouped recursion.  `theta_value` substitutes a
    different per-coordinate constant (the n=1 worst-case error uses 1/6).
    """
    s = weights.s if s is None else int(s)
    if not 1 <= s <= weights.s:
        raise DimensionMismatchError(f"s must be in [1, {weights.s}], got {s}")
    th = theta(lam) if theta_value is None else float(theta_value)
    dim_terms = th * weights.dim_factors[:s] ** lam
    log_orders = lam * weights.log_order_factors[: s + 1]
    t = _order_grouped_sum(dim_terms, log_orders)
    total = float(np.sum(t[1:]))
    if not math.isfinite(total):
        raise WeightOverflowError("weight sum exceeded the float range")
    return total


def norm_bound(decay: DecayModel, weights: PodWeights, kappa_norm: float,
               g_norm: float) -> float:
    """A-priori norm bound

        (kappa_norm * g_norm / a_min) * sqrt(sum_u (|u|!)^2 prod b_j^2 / gamma_u)

    with the empty subset contributing 1.  Order factor (l!)^2 / Gamma_l and
    dimension factor b_j^2 / gamma_j ride the same order-grouped recursion.
    """
    s = weights.s
    if decay.s < s:
        raise DimensionMismatchError(
            f"decay model covers {decay.s} dimensions, weights need {s}"
        )
    b = decay.b[:s]
    g = weights.dim_factors
    bad = (g == 0.0) & (b > 0.0)
    if np.any(bad):
        j = int(np.argmax(bad)) + 1
        raise ZeroDivisionError(f"gamma_{j} = 0 with b_{j} > 0 in the norm bound")
    dim_terms = np.zeros(s)
    nz = g > 0.0
    dim_terms[nz] = b[nz] ** 2 / g[nz]
    orders = np.arange(s + 1, dtype=float)
    log_orders = 2.0 * gammaln(orders + 1.0) - weights.log_order_factors
    t = _order_grouped_sum(dim_terms, log_orders)
    total = float(np.sum(t))  # includes the empty-set 1
    if not math.isfinite(total):
        raise WeightOverflowError("norm-bound sum exceeded the float range")
    return kappa_norm * g_norm / decay.a_min * math.sqrt(total)


def rms_error_bound(weights: PodWeights, lam: float, n: int, s: int,
                    norm: float) -> float:
    """Shift-averaged a-priori bound ((2/n) * weight_sum)^(1/(2*lambda)) * norm."""
    if n < 1 or (n & (n - 1)) != 0:
        raise DomainError(f"n must be a power of two >= 1, got {n}")
    base = (2.0 / n) * weight_sum(weights, lam, s)
    return base ** (1.0 / (2.0 * lam)) * norm


# --- reporting --------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceModel:
    """Derived convergence parameters, recorded for reporting.

    rate is the predicted root-mean-square exponent; lambda is checked
    against the admissible window for the given p0.
    """

    p0: float
    delta: float
    lam: float
    rate: float = field(default=float("nan"))

    def __post_init__(self) -> None:
        if not 0.0 < self.p0 < 1.0:
            raise DomainError(f"p0 must lie in (0, 1), got {self.p0}")
        if not 0.0 < self.delta < 0.5:
            raise DomainError(f"delta must lie in (0, 1/2), got {self.delta}")
        if not 0.5 < self.lam <= 1.0:
            raise DomainError(f"lambda must lie in (1/2, 1], got {self.lam}")
        low = self.p0 / (2.0 - self.p0)
        if not (low <= self.lam < 1.0 or self.lam == 1.0):
            raise DomainError(
                f"lambda = {self.lam} outside the admissible window [{low}, 1]"
            )
        if math.isnan(self.rate):
            object.__setattr__(self, "rate", predicted_rate(self.p0, self.delta))

    @classmethod
    def derive(cls, p0: float, delta: float, lam: float | None = None):
        lam = choose_lambda(p0, delta) if lam is None else float(lam)
        return cls(p0=p0, delta=delta, lam=lam)

    def summary(self) -> str:
        return (
            f"p0={self.p0!r} delta={self.delta!r} lambda={self.lam!r} "
            f"predicted_rate={self.rate!r}"
        )
