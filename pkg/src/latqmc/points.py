"""Rank-1 lattice points, random shifts, distribution maps, digital nets.

The i-th node of a rank-1 lattice rule with n points and generating vector
z is frac(i*z/n), indexed i = 0..n-1 (0-based throughout).  Randomized
estimators add shift vectors modulo 1; shifts come from a counter-based
stream so that any single shift can be regenerated in isolation from
(seed, shift index, component index) alone.

Point coordinates for n a power of two are exact dyadic rationals, so all
point generation below is exact in double precision; only the shift
addition rounds.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc as _erfc

from .errors import ConfigError, DimensionMismatchError, DomainError

__all__ = [
    "LatticeRule",
    "ShiftSet",
    "GeneratingMatrices",
    "lattice_point",
    "generate_block",
    "map_uniform",
    "map_lognormal",
    "inv_normal_cdf",
    "random_uniform",
    "draw_shifts",
    "shift_row",
    "derive_seed",
    "digital_point",
    "digital_block",
    "read_vector_file",
    "write_vector_file",
    "read_matrix_file",
    "write_matrix_file",
]


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class LatticeRule:
    """Rank-1 lattice rule: n points, generating vector z.

    n must be a power of two (n = 1 allowed).  For n >= 2 every component
    of z must be odd and in [1, n-1]; for n = 1 components are 0.
    """

    n: int
    z: tuple[int, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.n, int) or not _is_power_of_two(self.n):
            raise DomainError(f"n must be a power of two >= 1, got {self.n}")
        z = tuple(int(c) for c in self.z)
        object.__setattr__(self, "z", z)
        if len(z) < 1:
            raise DomainError("generating vector must have at least one component")
        for j, c in enumerate(z, start=1):
            if self.n == 1:
                if c != 0:
                    raise DomainError(f"n=1 requires z_j = 0, got z_{j} = {c}")
            elif not (1 <= c <= self.n - 1) or c % 2 == 0:
                raise DomainError(
                    f"z_{j} = {c} not an odd integer in [1, {self.n - 1}]"
                )

    @property
    def s(self) -> int:
        return len(self.z)


@dataclass(frozen=True)
class ShiftSet:
    """r shift vectors in [0,1)^s, regenerable from the seed alone."""

    seed: int
    shifts: np.ndarray  # (r, s)

    @property
    def r(self) -> int:
        return self.shifts.shape[0]

    @property
    def s(self) -> int:
        return self.shifts.shape[1]


# --- counter-based uniform stream -------------------------------------------
#
# splitmix64 finalizer chained over (seed, row, component).  Each output is a
# pure function of those three integers; 53-bit mantissa.

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_SEED_TWEAK = np.uint64(0x853C49E6748FEA9B)


def _mix64(x: np.ndarray) -> np.ndarray:
    # wraparound multiplication is the point; numpy warns on 0-d operands
    with np.errstate(over="ignore"):
        x = x ^ (x >> np.uint64(30))
        x = x * np.uint64(0xBF58476D1CE4E5B9)
        x = x ^ (x >> np.uint64(27))
        x = x * np.uint64(0x94D049BB133111EB)
        return x ^ (x >> np.uint64(31))


def _seed_state(seed: int) -> np.ndarray:
    # 0-d uint64 array: keeps all following arithmetic in silently-wrapping
    # array ops (numpy warns on scalar overflow).
    return _mix64(np.asarray(np.uint64(int(seed) & _MASK64)) ^ _SEED_TWEAK)


def random_uniform(seed: int, count: int, dim: int) -> np.ndarray:
    """(count, dim) matrix of uniforms in [0,1); entry (k, j) depends only
    on (seed, k, j)."""
    if count < 0 or dim < 1:
        raise DomainError(f"invalid stream shape ({count}, {dim})")
    with np.errstate(over="ignore"):
        k = np.arange(count, dtype=np.uint64)[:, None]
        j = np.arange(dim, dtype=np.uint64)[None, :]
        h = _mix64(_seed_state(seed) + k * _GOLDEN)
        h = _mix64(h + j * _GOLDEN)
    return (h >> np.uint64(11)) * 2.0**-53


def draw_shifts(r: int, s: int, seed: int) -> ShiftSet:
    """Draw r shift vectors in [0,1)^s from the counter-based stream."""
    if r < 1:
        raise DomainError(f"need at least one shift, got r = {r}")
    return ShiftSet(seed=int(seed), shifts=random_uniform(seed, r, s))


def shift_row(seed: int, k: int, s: int) -> np.ndarray:
    """Shift number k of the stream, regenerated without its siblings."""
    k = int(k)
    if k < 0:
        raise DomainError(f"shift index must be >= 0, got {k}")
    with np.errstate(over="ignore"):
        h = _mix64(_seed_state(seed) + np.asarray(np.uint64(k)) * _GOLDEN)
        j = np.arange(s, dtype=np.uint64)
        h = _mix64(h + j * _GOLDEN)
    return (h >> np.uint64(11)) * 2.0**-53


def derive_seed(seed: int, index: int) -> int:
    """Pure 64-bit sub-seed for stream `index` (levels, study rows, ...)."""
    with np.errstate(over="ignore"):
        idx = np.asarray(np.uint64(int(index) & _MASK64))
        h = _mix64(_seed_state(seed) + idx * _GOLDEN)
        return int(_mix64(h ^ _GOLDEN))


# --- lattice point generation ------------------------------------------------


def _check_shift(shift: np.ndarray | None, s: int) -> np.ndarray | None:
    if shift is None:
        return None
    shift = np.asarray(shift, dtype=float)
    if shift.shape != (s,):
        raise DimensionMismatchError(
            f"shift has shape {shift.shape}, rule dimension is {s}"
        )
    if np.any(shift < 0.0) or np.any(shift >= 1.0):
        raise DomainError("shift components must lie in [0, 1)")
    return shift


def lattice_point(rule: LatticeRule, i: int, shift=None) -> np.ndarray:
    """Point i of the (optionally shifted) rule: frac(i*z/n + shift)."""
    if not 0 <= i < rule.n:
        raise IndexError(f"point index {i} outside [0, {rule.n})")
    shift = _check_shift(shift, rule.s)
    z = np.asarray(rule.z, dtype=np.int64)
    t = ((i * z) % rule.n) / float(rule.n)  # exact: i*z < 2^40, n = 2^m
    if shift is not None:
        t = t + shift
        t = np.where(t >= 1.0, t - 1.0, t)
    return t


def generate_block(rule: LatticeRule, shift=None) -> np.ndarray:
    """All n points of the rule as an (n, s) matrix.

    Row i equals ``lattice_point(rule, i, shift)`` bit for bit: the same
    mod-n-first evaluation is used, so shifting a precomputed unshifted
    block reproduces the shifted block exactly.
    """
    shift = _check_shift(shift, rule.s)
    i = np.arange(rule.n, dtype=np.int64)[:, None]
    z = np.asarray(rule.z, dtype=np.int64)[None, :]
    t = ((i * z) % rule.n) / float(rule.n)
    if shift is not None:
        t = t + shift
        t = np.where(t >= 1.0, t - 1.0, t)
    return t


# --- distribution maps --------------------------------------------------------


def map_uniform(t: np.ndarray) -> np.ndarray:
    """Shift [0,1)^s points to the centered cube [-1/2, 1/2)^s."""
    return np.asarray(t, dtype=float) - 0.5


# Rational initializer for the inverse normal CDF (central/tail split at
# 0.02425), refined below by one Halley step on erfc.
_INC_A = (
    -3.969683028665376e01,
    2.209460984245205e02,
    -2.759285104469687e02,
    1.383577518672690e02,
    -3.066479806614716e01,
    2.506628277459239e00,
)
_INC_B = (
    -5.447609879822406e01,
    1.615858368580409e02,
    -1.556989798598866e02,
    6.680131188771972e01,
    -1.328068155288572e01,
)
_INC_C = (
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e00,
    -2.549732539343734e00,
    4.374664141464968e00,
    2.938163982698783e00,
)
_INC_D = (
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e00,
    3.754408661907416e00,
)
_INC_SPLIT = 0.02425


def _inv_normal_initial(w: np.ndarray) -> np.ndarray:
    a, b, c, d = _INC_A, _INC_B, _INC_C, _INC_D
    x = np.empty_like(w)

    lo = w < _INC_SPLIT
    hi = w > 1.0 - _INC_SPLIT
    mid = ~(lo | hi)

    if np.any(mid):
        p = w[mid] - 0.5
        r = p * p
        num = ((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]
        den = ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
        x[mid] = p * num / den
    if np.any(lo):
        q = np.sqrt(-2.0 * np.log(w[lo]))
        num = ((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]
        den = (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        x[lo] = num / den
    if np.any(hi):
        q = np.sqrt(-2.0 * np.log(1.0 - w[hi]))
        num = ((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]
        den = (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        x[hi] = -num / den
    return x


_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def inv_normal_cdf(w):
    """Inverse of the standard normal CDF.

    Parameters
    ----------
    w : float or array_like
        Probabilities, all strictly inside (0, 1).

    Returns
    -------
    float or ndarray
        x with Phi(x) = w; the residual |Phi(result) - w| is below 1e-12
        over the whole open interval.

    Notes
    -----
    A rational approximation supplies roughly nine digits; one Halley
    update against Phi evaluated through erfc pushes the residual to the
    rounding level of w or of its complement, whichever tail the input
    sits in.  The update is skipped beyond |x| > 37,
    where exp(x^2/2) would overflow and the initializer's relative error
    already leaves an absolute residual far below the contract.
    """
    arr = np.asarray(w, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise DomainError("inverse normal CDF requires values strictly in (0, 1)")

    x = _inv_normal_initial(arr)
    safe = np.abs(x) < 37.0
    if np.any(safe):
        xs = x[safe]
        ws = arr[safe]
        # Residual Phi(x) - w through whichever tail is small: for w > 1/2
        # the form (1-w) - Q(x) with Q the upper-tail probability avoids the
        # cancellation around 1 that would floor the accuracy at ulp(1).
        # 1-w is exact for w in [1/2, 1).
        err = np.where(
            ws > 0.5,
            (1.0 - ws) - 0.5 * _erfc(xs / _SQRT2),
            0.5 * _erfc(-xs / _SQRT2) - ws,
        )
        u = err * _SQRT_2PI * np.exp(0.5 * xs * xs)
        x[safe] = xs - u / (1.0 + 0.5 * xs * u)
    return float(x[0]) if scalar else x


def map_lognormal(t: np.ndarray) -> np.ndarray:
    """Map [0,1)^s points through the inverse normal CDF componentwise.

    Component value 0 (an unshifted lattice point, or an exact wrap) has
    no preimage and is rejected; callers on the lognormal path must supply
    a nonzero shift.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0) or np.any(t >= 1.0):
        raise DomainError(
            "lognormal map needs components strictly in (0, 1); "
            "supply a nonzero shift"
        )
    return inv_normal_cdf(t)


# --- digital nets --------------------------------------------------------------


@dataclass(frozen=True)
class GeneratingMatrices:
    """Column-encoded binary generating matrices of a base-2 digital net.

    ``columns[j][k]`` is column k of the matrix for dimension j, encoded as
    an unsigned integer below 2^precision whose most significant bit (bit
    precision-1) is the first output bit after the binary point: a point
    component is (XOR of the columns selected by the index bits) / 2^precision.
    """

    m: int
    precision: int
    columns: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if not 1 <= self.m <= 32:
            raise DomainError(f"m must be in [1, 32], got {self.m}")
        if not self.m <= self.precision <= 64:
            raise DomainError(
                f"precision must be in [m, 64], got {self.precision}"
            )
        cols = tuple(tuple(int(c) for c in row) for row in self.columns)
        object.__setattr__(self, "columns", cols)
        if len(cols) < 1:
            raise DomainError("need at least one dimension of columns")
        for j, row in enumerate(cols, start=1):
            if len(row) != self.m:
                raise DimensionMismatchError(
                    f"dimension {j} has {len(row)} columns, expected {self.m}"
                )
            for c in row:
                if not 0 <= c < (1 << self.precision):
                    raise DomainError(
                        f"column value {c} outside [0, 2^{self.precision})"
                    )

    @property
    def s(self) -> int:
        return len(self.columns)

    @classmethod
    def identity(cls, s: int, m: int, precision: int | None = None):
        """Identity matrices: column k = 2^(precision-1-k).  The resulting
        net is the radical-inverse (van der Corput) sequence in every
        dimension."""
        p = m if precision is None else precision
        row = tuple(1 << (p - 1 - k) for k in range(m))
        return cls(m=m, precision=p, columns=tuple(row for _ in range(s)))


def digital_point(mats: GeneratingMatrices, i: int) -> np.ndarray:
    """Point i of the digital net, directly from the index bits of i."""
    if not 0 <= i < (1 << mats.m):
        raise IndexError(f"point index {i} outside [0, 2^{mats.m})")
    scale = 2.0 ** -mats.precision
    out = np.empty(mats.s)
    for j, row in enumerate(mats.columns):
        c = 0
        for b in range(mats.m):
            if (i >> b) & 1:
                c ^= row[b]
        out[j] = c * scale
    return out


def digital_block(mats: GeneratingMatrices, count: int) -> np.ndarray:
    """First `count` points of the net as a (count, s) matrix."""
    if not 0 <= count <= (1 << mats.m):
        raise DomainError(f"count must be in [0, 2^{mats.m}], got {count}")
    i = np.arange(count, dtype=np.uint64)
    cols = np.asarray(mats.columns, dtype=np.uint64)  # (s, m)
    acc = np.zeros((count, mats.s), dtype=np.uint64)
    for b in range(mats.m):
        bit = (i >> np.uint64(b)) & np.uint64(1)
        acc ^= bit[:, None] * cols[None, :, b]
    return acc * 2.0 ** -mats.precision


# --- file formats ---------------------------------------------------------------


def _write_atomic(path: str, text: str) -> None:
    # temp file in the target directory, then rename: readers never see a
    # partial file.
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _data_lines(path: str):
    with open(path) as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line


def write_vector_file(path: str, z) -> None:
    """Write a generating vector: one unsigned decimal per line, ASCII."""
    _write_atomic(path, "".join(f"{int(c)}\n" for c in z))


def read_vector_file(path: str) -> tuple[int, ...]:
    """Read a generating vector file (# comments allowed, n not stored)."""
    out = []
    for lineno, line in _data_lines(path):
        try:
            value = int(line)
        except ValueError:
            raise ConfigError(
                f"{path}:{lineno}: expected an unsigned integer, got {line!r}"
            ) from None
        if value < 0:
            raise ConfigError(f"{path}:{lineno}: negative component {value}")
        out.append(value)
    if not out:
        raise ConfigError(f"{path}: no vector components found")
    return tuple(out)


def write_matrix_file(path: str, mats: GeneratingMatrices) -> None:
    """Write generating matrices: header 's m p', then one dimension per
    line as m unsigned column integers."""
    lines = [f"{mats.s} {mats.m} {mats.precision}\n"]
    for row in mats.columns:
        lines.append(" ".join(str(c) for c in row) + "\n")
    _write_atomic(path, "".join(lines))


def read_matrix_file(path: str) -> GeneratingMatrices:
    """Read a generating-matrix file written by `write_matrix_file`."""
    rows = list(_data_lines(path))
    if not rows:
        raise ConfigError(f"{path}: empty matrix file")
    lineno, header = rows[0]
    parts = header.split()
    if len(parts) != 3:
        raise ConfigError(f"{path}:{lineno}: header must be 's m p'")
    try:
        s, m, p = (int(v) for v in parts)
    except ValueError:
        raise ConfigError(f"{path}:{lineno}: non-integer header field") from None
    if len(rows) - 1 != s:
        raise ConfigError(
            f"{path}: header promises {s} dimensions, found {len(rows) - 1}"
        )
    columns = []
    for lineno, line in rows[1:]:
        fields = line.split()
        if len(fields) != m:
            raise ConfigError(
                f"{path}:{lineno}: expected {m} columns, got {len(fields)}"
            )
        try:
            columns.append(tuple(int(v) for v in fields))
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: non-integer column") from None
    try:
        return GeneratingMatrices(m=m, precision=p, columns=tuple(columns))
    except (DomainError, DimensionMismatchError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
