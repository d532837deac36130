"""1D diffusion solves on (0,1) with parametric coefficient fields.

Piecewise-linear finite elements on a uniform mesh of M = 1/h cells with
homogeneous Dirichlet values at both ends.  The diffusion coefficient enters
through one midpoint sample per element, which turns assembly into a single
matrix product over a whole batch of parameter vectors and preserves second
order accuracy of nodal functionals.  Every system is tridiagonal and is
eliminated directly, vectorised across the batch.

Two coefficient models are provided: the affine-uniform field
``a(x, y) = a0 + sum_j y_j * A * j**-theta * sin(j*pi*x)`` with parameters
``y_j`` in [-1/2, 1/2], and the lognormal field
``a(x, y) = a0 * exp(sum_j y_j * sqrt(mu_j) * xi_j(x))`` with eigenvalues
``mu_j = A**2 * j**(-2*theta)`` and L2-orthonormal ``xi_j = sqrt(2)*sin(j*pi*x)``.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field as _dc_field
from functools import lru_cache

import numpy as np

from .errors import DimensionMismatchError, DomainError, EllipticityError
from .theory import DecayModel

_SQRT2 = math.sqrt(2.0)


class SolveCounter:
    """Thread-safe tally of elimination solves and of mesh-cell work.

    ``count`` is the number of tridiagonal solves performed; ``work`` weights
    each solve by the cell count M of its mesh, so a study comparing meshes
    accumulates a resolution-aware cost.  Final values are independent of the
    order in which concurrent callers report.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.count = 0
        self.work = 0

    def add(self, solves: int, cells: int) -> None:
        with self._lock:
            self.count += int(solves)
            self.work += int(solves) * int(cells)

    def reset(self) -> None:
        with self._lock:
            self.count = 0
            self.work = 0


def _default_p0(theta: float) -> float:
    # halfway between the summability limit 1/theta and 1, kept below 1
    return min((1.0 / theta + 1.0) / 2.0, 1.0 - 1e-9)


@dataclass(frozen=True, eq=False)
class UniformField:
    """Affine coefficient a0 + sum_j y_j psi_j with psi_j = A j^-theta sin(j pi x).

    Parameters y_j range over [-1/2, 1/2].  Construction fails unless the
    field is uniformly elliptic, i.e. a_min = a0 - (A/2) sum_j j^-theta > 0.
    ``p0`` is the summability exponent used by the weight theory; any value
    in (1/theta, 1] is valid and the default sits halfway up that window.
    """

    a0: float
    amplitude: float
    theta: float
    s: int
    p0: float | None = None
    a_min: float = _dc_field(init=False)
    a_max: float = _dc_field(init=False)

    def __post_init__(self) -> None:
        if not (self.a0 > 0.0 and self.amplitude > 0.0):
            raise DomainError("a0 and amplitude must be positive")
        if not self.theta > 1.0:
            raise DomainError(f"decay exponent theta must exceed 1, got {self.theta}")
        if self.s < 1:
            raise DomainError(f"truncation dimension must be >= 1, got {self.s}")
        if self.p0 is None:
            object.__setattr__(self, "p0", _default_p0(self.theta))
        if not 1.0 / self.theta < self.p0 < 1.0:
            raise DomainError(f"p0 must lie in (1/theta, 1), got {self.p0}")
        j = np.arange(1, self.s + 1, dtype=float)
        half_sum = 0.5 * self.amplitude * float(np.sum(j ** -self.theta))
        object.__setattr__(self, "a_min", self.a0 - half_sum)
        object.__setattr__(self, "a_max", self.a0 + half_sum)
        if not self.a_min > 0.0:
            raise EllipticityError(
                f"field is not uniformly elliptic: a_min = {self.a_min!r} <= 0"
            )

    def sup_norms(self) -> np.ndarray:
        """Sup norms of the fluctuation profiles: A * j**-theta."""
        j = np.arange(1, self.s + 1, dtype=float)
        return self.amplitude * j ** -self.theta

    def decay_model(self) -> DecayModel:
        return DecayModel(self.sup_norms() / self.a_min, self.p0, a_min=self.a_min)


@dataclass(frozen=True, eq=False)
class LognormalField:
    """Lognormal coefficient a0 exp(sum_j y_j sqrt(mu_j) xi_j), y_j Gaussian.

    Eigenvalues mu_j = A^2 j^(-2 theta) are positive and non-increasing; the
    profiles xi_j = sqrt(2) sin(j pi x) are orthonormal in L2(0,1).
    """

    a0: float
    amplitude: float
    theta: float
    s: int
    p0: float | None = None

    def __post_init__(self) -> None:
        if not (self.a0 > 0.0 and self.amplitude > 0.0):
            raise DomainError("a0 and amplitude must be positive")
        if not self.theta > 1.0:
            raise DomainError(f"decay exponent theta must exceed 1, got {self.theta}")
        if self.s < 1:
            raise DomainError(f"truncation dimension must be >= 1, got {self.s}")
        if self.p0 is None:
            object.__setattr__(self, "p0", _default_p0(self.theta))
        if not 1.0 / self.theta < self.p0 < 1.0:
            raise DomainError(f"p0 must lie in (1/theta, 1), got {self.p0}")

    def eigenvalues(self) -> np.ndarray:
        j = np.arange(1, self.s + 1, dtype=float)
        return self.amplitude**2 * j ** (-2.0 * self.theta)

    def decay_model(self) -> DecayModel:
        # Sup-norm heuristic: the field has no uniform lower bound, so the
        # weight recipe is fed sqrt(mu_j) * ||xi_j||_inf with unit prefactor.
        return DecayModel(np.sqrt(self.eigenvalues()) * _SQRT2, self.p0, a_min=1.0)


@lru_cache(maxsize=None)
def _midpoint_profiles(field, M: int) -> np.ndarray:
    """Rows j = 1..s of the fluctuation profiles sampled at element midpoints."""
    mids = (np.arange(M, dtype=float) + 0.5) / M
    j = np.arange(1, field.s + 1, dtype=float)[:, None]
    table = field.amplitude * j ** -field.theta * np.sin(np.pi * j * mids)
    if isinstance(field, LognormalField):
        table *= _SQRT2
    table.setflags(write=False)
    return table


def _cell_count(h: float) -> int:
    M = int(round(1.0 / h))
    if M < 2 or M & (M - 1) or M * h != 1.0:
        raise DomainError(f"mesh width must be 1/M with M >= 2 a power of two, got {h!r}")
    return M


def _coefficient_midpoints(field, Y: np.ndarray, M: int) -> np.ndarray:
    """Coefficient samples at element midpoints for each parameter row of Y."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise DimensionMismatchError("parameter block must be two-dimensional")
    if Y.shape[1] > field.s:
        raise DimensionMismatchError(
            f"parameter rows have {Y.shape[1]} entries, field truncation is {field.s}"
        )
    table = _midpoint_profiles(field, M)[: Y.shape[1]]
    if isinstance(field, UniformField):
        if Y.size and float(np.abs(Y).max()) > 0.5:
            raise DomainError("uniform parameters must lie in [-1/2, 1/2]")
        return field.a0 + Y @ table
    return field.a0 * np.exp(Y @ table)


def _check_ellipticity(amid: np.ndarray, M: int) -> None:
    if amid.size == 0 or float(amid.min()) > 0.0:
        return
    row, elem = np.unravel_index(int(np.argmin(amid)), amid.shape)
    raise EllipticityError(
        f"coefficient sample {amid[row, elem]!r} <= 0 at element midpoint "
        f"x = {(elem + 0.5) / M} (batch row {row})"
    )


def _load_vector(kappa_nodal: np.ndarray, h: float) -> np.ndarray:
    # exact integral of piecewise-linear kappa against interior hat functions
    k = kappa_nodal
    return h * (k[:-2] + 4.0 * k[1:-1] + k[2:]) / 6.0


def _thomas(diag: np.ndarray, off: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Direct tridiagonal elimination, vectorised over any leading batch axes."""
    d = np.array(diag, dtype=float, copy=True)
    r = np.array(np.broadcast_to(rhs, d.shape), dtype=float, copy=True)
    n = d.shape[-1]
    for i in range(1, n):
        w = off[..., i - 1] / d[..., i - 1]
        d[..., i] = d[..., i] - w * off[..., i - 1]
        r[..., i] = r[..., i] - w * r[..., i - 1]
    u = np.empty_like(d)
    u[..., n - 1] = r[..., n - 1] / d[..., n - 1]
    for i in range(n - 2, -1, -1):
        u[..., i] = (r[..., i] - off[..., i] * u[..., i + 1]) / d[..., i]
    return u


def _nodal_values(data, M: int) -> np.ndarray:
    """Nodal samples on the (M+1)-point mesh for scalar, callable, or array data.

    Array data given on a different uniform mesh is interpolated linearly.
    """
    x = np.linspace(0.0, 1.0, M + 1)
    if data is None:
        return np.ones(M + 1)
    if callable(data):
        try:
            vals = np.asarray(data(x), dtype=float)
        except (TypeError, ValueError):
            vals = None
        if vals is None or vals.shape != x.shape:
            vals = np.array([float(data(float(xi))) for xi in x])
        return vals
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 0:
        return np.full(M + 1, float(arr))
    if arr.ndim == 1 and arr.size == M + 1:
        return arr.astype(float)
    if arr.ndim == 1 and arr.size >= 2:
        return np.interp(x, np.linspace(0.0, 1.0, arr.size), arr)
    raise DomainError("nodal data must be a scalar, a callable, or a 1D array")


@dataclass(frozen=True, eq=False)
class FemSystem:
    """Assembled and eliminated tridiagonal Galerkin system on one mesh.

    ``values`` holds the nodal solution including the zero boundary entries.
    The interior stiffness bands ``diag``/``off``, the load vector, and the
    per-element coefficient samples are retained so residual checks and
    parametric-derivative solves can reuse the assembled data.
    """

    h: float
    values: np.ndarray
    coef_mid: np.ndarray
    diag: np.ndarray
    off: np.ndarray
    load: np.ndarray

    @property
    def cells(self) -> int:
        return self.coef_mid.size

    def residual(self) -> float:
        """Relative max-norm residual of the interior system."""
        u = self.values[1:-1]
        r = self.diag * u - self.load
        if self.off.size:
            r[:-1] += self.off * u[1:]
            r[1:] += self.off * u[:-1]
        scale = float(np.abs(self.load).max()) or 1.0
        return float(np.abs(r).max()) / scale

    def h1_seminorm(self) -> float:
        """L2 norm of the broken gradient of the nodal interpolant."""
        d = np.diff(self.values)
        return math.sqrt(float(d @ d) / self.h)


def eval_coefficient(field, x, y):
    """Coefficient value a(x, y); x may be a scalar or an array in (0,1)."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise DimensionMismatchError("y must be one-dimensional")
    if y.size > field.s:
        raise DimensionMismatchError(
            f"y has {y.size} entries, field truncation is {field.s}"
        )
    xs = np.asarray(x, dtype=float)
    j = np.arange(1, y.size + 1, dtype=float)
    profiles = field.amplitude * j ** -field.theta * np.sin(np.pi * np.multiply.outer(xs, j))
    if isinstance(field, UniformField):
        if y.size and float(np.abs(y).max()) > 0.5:
            raise DomainError("uniform parameters must lie in [-1/2, 1/2]")
        out = field.a0 + profiles @ y
    else:
        out = field.a0 * np.exp(_SQRT2 * (profiles @ y))
    return float(out) if xs.ndim == 0 else out


def solve_block(field, Y, h: float, kappa=1.0, counter: SolveCounter | None = None) -> np.ndarray:
    """Galerkin solve for every parameter row of Y; returns nodal values (B, M+1)."""
    M = _cell_count(h)
    amid = _coefficient_midpoints(field, Y, M)
    _check_ellipticity(amid, M)
    load = _load_vector(_nodal_values(kappa, M), h)
    diag = (amid[:, :-1] + amid[:, 1:]) / h
    off = -amid[:, 1:-1] / h
    out = np.zeros((amid.shape[0], M + 1))
    out[:, 1:-1] = _thomas(diag, off, load)
    if counter is not None:
        counter.add(amid.shape[0], M)
    return out


def solve(field, y, h: float, kappa=1.0, counter: SolveCounter | None = None) -> FemSystem:
    """Galerkin solve at a single parameter vector, returning the full system."""
    M = _cell_count(h)
    amid2 = _coefficient_midpoints(field, np.asarray(y, dtype=float)[None, :], M)
    _check_ellipticity(amid2, M)
    amid = amid2[0]
    load = _load_vector(_nodal_values(kappa, M), h)
    diag = (amid[:-1] + amid[1:]) / h
    off = -amid[1:-1] / h
    values = np.zeros(M + 1)
    values[1:-1] = _thomas(diag, off, load)
    if counter is not None:
        counter.add(1, M)
    return FemSystem(h=h, values=values, coef_mid=amid, diag=diag, off=off, load=load)


def solve_first_derivative(
    field, y, h: float, j: int, base: FemSystem, counter: SolveCounter | None = None
) -> FemSystem:
    """Solve for the derivative of the solution in parameter direction j (1-based).

    The derivative satisfies the same bilinear form as the base solution with
    right-hand side -int psi_j u' w', assembled with the same one-midpoint
    rule per element, so the result is the exact derivative of the discrete
    parameter-to-solution map.
    """
    if not isinstance(field, UniformField):
        raise DomainError("parametric derivative solves are defined for UniformField only")
    if not 1 <= j <= field.s:
        raise IndexError(f"direction {j} outside 1..{field.s}")
    M = _cell_count(h)
    if base.cells != M:
        raise DimensionMismatchError("base solution mesh does not match h")
    psi_mid = _midpoint_profiles(field, M)[j - 1]
    flux = psi_mid * (np.diff(base.values) / h)
    rhs = flux[1:] - flux[:-1]
    values = np.zeros(M + 1)
    values[1:-1] = _thomas(base.diag, base.off, rhs)
    if counter is not None:
        counter.add(1, M)
    return FemSystem(
        h=h, values=values, coef_mid=base.coef_mid, diag=base.diag, off=base.off, load=rhs
    )


class Functional:
    """Linear functional G(v) = int_0^1 v g dx for piecewise-linear v.

    The representer g may be a scalar, a callable, or nodal data on a uniform
    mesh of [0,1]; it is interpolated onto the mesh of the argument and the
    product of the two piecewise-linear functions is integrated exactly.
    """

    def __init__(self, g=1.0) -> None:
        self._g = g
        self._weights: dict[int, np.ndarray] = {}

    def nodal_on(self, M: int) -> np.ndarray:
        return _nodal_values(self._g, M)

    def weights_on(self, M: int) -> np.ndarray:
        """Nodal weights w with w . v = G(v) for every piecewise-linear v."""
        w = self._weights.get(M)
        if w is None:
            g = self.nodal_on(M)
            h = 1.0 / M
            w = np.empty(M + 1)
            w[1:-1] = h * (g[:-2] + 4.0 * g[1:-1] + g[2:]) / 6.0
            w[0] = h * (2.0 * g[0] + g[1]) / 6.0
            w[-1] = h * (g[-2] + 2.0 * g[-1]) / 6.0
            w.setflags(write=False)
            self._weights[M] = w
        return w

    def __call__(self, values) -> np.ndarray | float:
        values = np.asarray(values, dtype=float)
        return values @ self.weights_on(values.shape[-1] - 1)


def qoi(system: FemSystem, functional: Functional) -> float:
    """Functional of the solution, exact for the piecewise-linear pair."""
    return float(functional(system.values))


def dual_energy_norm(data, M: int) -> float:
    """Discrete dual norm of the load data over the mesh space on M cells.

    Computed as sqrt(f . w) where w solves the unit-coefficient system with
    load vector f; equals the H^-1(0,1) norm restricted to mesh functions.
    """
    if M < 2:
        raise DomainError("dual norm needs at least two cells")
    h = 1.0 / M
    f = _load_vector(_nodal_values(data, M), h)
    ones = np.ones(M)
    diag = (ones[:-1] + ones[1:]) / h
    off = -ones[1:-1] / h
    w = _thomas(diag, off, f)
    return math.sqrt(float(f @ w))
