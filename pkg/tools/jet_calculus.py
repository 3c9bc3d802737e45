"""
Spray Metrizer - Jet Calculus
=============================

Forward-mode derivative propagation with truncated multivariate Taylor
series ("jets") in the 2n phase coordinates (x^1..x^n, y^1..y^n).

A Jet stores, for every multi-index beta with |beta| <= k, the normalized
coefficient d^beta f / beta! at the expansion point. Coefficients are dense
and ordered by graded-lex rank, so the first C(m+d, d) entries are exactly
the coefficients of total degree <= d. An optional trailing batch axis lets
one jet carry many expansion points at once.

Key Concepts Implemented:
- **Product rule**: sparse convolution table per (m, k), applied with scipy.sparse
- **Chain rule**: univariate composition f(a0 + d) = sum f^(j)(a0) d^j / j!
- **Exact order-0 parts**: every value is computed with the same numpy call a
  plain-real evaluation would use

Author: Alfred Munga
License: MIT
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import sparse

from tools.errors import DomainError, OrderError

logger = logging.getLogger(__name__)

# Expression-level sprays need order 3 on G; generator-built sprays carry one
# derivative of g inside G and therefore reach order 4 on g.
MAX_ORDER = 4


# ============================================================================
# Multi-index tables
# ============================================================================

@dataclass(frozen=True)
class MultiIndexTable:
    """
    Precomputed indexing data for jets in m variables truncated at order k.

    Attributes:
        m: Variable count
        order: Truncation order
        indices: Multi-indices in graded-lex order
        rank: Multi-index -> position
        degree: Total degree per position
        factorial: beta! per position
        left, right, target: Pair table with indices[left] + indices[right] = indices[target]
        product: Sparse (size x pairs) summation matrix for the pair table
    """
    m: int
    order: int
    indices: Tuple[Tuple[int, ...], ...]
    rank: Dict[Tuple[int, ...], int]
    degree: np.ndarray
    factorial: np.ndarray
    left: np.ndarray
    right: np.ndarray
    target: np.ndarray
    product: sparse.csr_matrix
    division_steps: Tuple[Tuple[np.ndarray, np.ndarray, sparse.csr_matrix], ...]

    @property
    def size(self) -> int:
        return len(self.indices)

    def size_upto(self, order: int) -> int:
        return math.comb(self.m + order, order)


def _monomials(m: int, degree: int) -> List[Tuple[int, ...]]:
    out = []
    for combo in combinations_with_replacement(range(m), degree):
        beta = [0] * m
        for slot in combo:
            beta[slot] += 1
        out.append(tuple(beta))
    return out


@lru_cache(maxsize=None)
def multi_index_table(m: int, order: int) -> MultiIndexTable:
    """Build (once per (m, order)) the indexing and product tables."""
    if order < 0 or order > MAX_ORDER:
        raise OrderError(f"Jet order must lie in [0, {MAX_ORDER}], got {order}")

    indices: List[Tuple[int, ...]] = []
    for d in range(order + 1):
        indices.extend(_monomials(m, d))
    rank = {beta: i for i, beta in enumerate(indices)}
    degree = np.array([sum(beta) for beta in indices], dtype=int)
    factorial = np.array(
        [math.prod(math.factorial(b) for b in beta) for beta in indices], dtype=float
    )
    upto = [math.comb(m + d, d) for d in range(order + 1)]

    left, right, target = [], [], []
    for a, alpha in enumerate(indices):
        # graded ordering: admissible partners are a prefix
        for b in range(upto[order - degree[a]]):
            beta = indices[b]
            left.append(a)
            right.append(b)
            target.append(rank[tuple(p + q for p, q in zip(alpha, beta))])
    left_arr = np.array(left, dtype=int)
    right_arr = np.array(right, dtype=int)
    target_arr = np.array(target, dtype=int)
    pairs = len(left_arr)
    product = sparse.csr_matrix(
        (np.ones(pairs), (target_arr, np.arange(pairs))), shape=(len(indices), pairs)
    )

    steps = []
    for d in range(1, order + 1):
        selected = np.flatnonzero((degree[target_arr] == d) & (right_arr != 0))
        rows = np.flatnonzero(degree == d)
        matrix = sparse.csr_matrix(
            (np.ones(len(selected)), (target_arr[selected], np.arange(len(selected)))),
            shape=(len(indices), len(selected)),
        )
        steps.append((rows, selected, matrix))

    logger.debug(f"Built jet tables m={m} k={order}: {len(indices)} coefficients, {pairs} pairs")
    return MultiIndexTable(
        m=m, order=order, indices=tuple(indices), rank=rank, degree=degree,
        factorial=factorial, left=left_arr, right=right_arr, target=target_arr,
        product=product, division_steps=tuple(steps),
    )


@lru_cache(maxsize=None)
def _derivative_map(m: int, order: int, slot: int) -> Tuple[np.ndarray, np.ndarray]:
    source = multi_index_table(m, order)
    lower = multi_index_table(m, order - 1)
    src, factor = [], []
    for beta in lower.indices:
        raised = list(beta)
        raised[slot] += 1
        src.append(source.rank[tuple(raised)])
        factor.append(beta[slot] + 1)
    return np.array(src, dtype=int), np.array(factor, dtype=float)


@lru_cache(maxsize=None)
def _tensor_index(m: int, order: int, degree: int) -> Tuple[np.ndarray, np.ndarray]:
    """Rank and beta! for every ordered slot tuple of the given length."""
    table = multi_index_table(m, order)
    shape = (m,) * degree
    ranks = np.zeros(shape, dtype=int)
    factors = np.zeros(shape, dtype=float)
    for slots in np.ndindex(*shape):
        beta = [0] * m
        for s in slots:
            beta[s] += 1
        key = tuple(beta)
        ranks[slots] = table.rank[key]
        factors[slots] = table.factorial[table.rank[key]]
    return ranks, factors


def _batch_reshape(vector: np.ndarray, batch_ndim: int) -> np.ndarray:
    return vector.reshape(vector.shape + (1,) * batch_ndim)


# ============================================================================
# Jet
# ============================================================================

class Jet:
    """
    Truncated Taylor expansion of a scalar function of m variables.

    Attributes:
        m: Variable count (2n for phase-space jets)
        order: Truncation order k
        coefficients: Array of shape (C(m+k, k),) + batch_shape holding d^beta f / beta!

    Example:
        >>> y1 = lift_point([0.0], [3.0], 2)[1]
        >>> extract_partial(y1 * y1, (0, 1))
        6.0
    """

    __slots__ = ("m", "order", "coefficients")
    __array_ufunc__ = None

    def __init__(self, m: int, order: int, coefficients: np.ndarray):
        self.m = m
        self.order = order
        self.coefficients = coefficients

    # ------------------------------------------------------------------
    # Construction and inspection
    # ------------------------------------------------------------------

    @classmethod
    def constant(cls, m: int, order: int, value, batch_shape: Tuple[int, ...] = ()) -> "Jet":
        table = multi_index_table(m, order)
        coefficients = np.zeros((table.size,) + tuple(batch_shape))
        coefficients[0] = value
        return cls(m, order, coefficients)

    @property
    def table(self) -> MultiIndexTable:
        return multi_index_table(self.m, self.order)

    @property
    def value(self):
        return self.coefficients[0]

    @property
    def batch_shape(self) -> Tuple[int, ...]:
        return self.coefficients.shape[1:]

    def gradient(self) -> np.ndarray:
        """First partials, shape (m,) + batch_shape."""
        if self.order < 1:
            raise OrderError("Gradient requires order >= 1")
        return self.coefficients[1:1 + self.m]

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise OrderError(f"Cannot raise order {self.order} to {order}")
        if order == self.order:
            return self
        size = math.comb(self.m + order, order)
        return Jet(self.m, order, self.coefficients[:size])

    def derivative(self, slot: int) -> "Jet":
        """Partial derivative in one variable, as a jet of order k - 1."""
        if self.order < 1:
            raise OrderError("Cannot differentiate an order-0 jet")
        src, factor = _derivative_map(self.m, self.order, slot)
        scaled = self.coefficients[src] * _batch_reshape(factor, len(self.batch_shape))
        return Jet(self.m, self.order - 1, scaled)

    def _align(self, other: "Jet") -> Tuple["Jet", "Jet"]:
        if other.m != self.m:
            raise ValueError(f"Jet variable counts differ: {self.m} vs {other.m}")
        order = min(self.order, other.order)
        return self.truncate(order), other.truncate(order)

    def _with(self, coefficients: np.ndarray) -> "Jet":
        return Jet(self.m, self.order, coefficients)

    # ------------------------------------------------------------------
    # Ring operations
    # ------------------------------------------------------------------

    def __neg__(self) -> "Jet":
        return self._with(-self.coefficients)

    def __pos__(self) -> "Jet":
        return self

    def __add__(self, other) -> "Jet":
        if isinstance(other, Jet):
            a, b = self._align(other)
            return a._with(a.coefficients + b.coefficients)
        coefficients = np.array(self.coefficients, dtype=float, copy=True)
        coefficients[0] = coefficients[0] + other
        return self._with(coefficients)

    __radd__ = __add__

    def __sub__(self, other) -> "Jet":
        if isinstance(other, Jet):
            a, b = self._align(other)
            return a._with(a.coefficients - b.coefficients)
        coefficients = np.array(self.coefficients, dtype=float, copy=True)
        coefficients[0] = coefficients[0] - other
        return self._with(coefficients)

    def __rsub__(self, other) -> "Jet":
        coefficients = -self.coefficients
        coefficients[0] = other - self.coefficients[0]
        return self._with(coefficients)

    def __mul__(self, other) -> "Jet":
        if isinstance(other, Jet):
            a, b = self._align(other)
            return a._with(_convolve(a.table, a.coefficients, b.coefficients))
        return self._with(self.coefficients * other)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Jet":
        if isinstance(other, Jet):
            a, b = self._align(other)
            return a._with(_divide(a.table, a.coefficients, b.coefficients))
        bad = np.asarray(other) == 0
        if np.any(bad):
            raise DomainError("division by zero", np.flatnonzero(np.atleast_1d(bad)))
        return self._with(self.coefficients / other)

    def __rtruediv__(self, other) -> "Jet":
        numerator = Jet.constant(self.m, self.order, other, self.batch_shape)
        return numerator / self

    def __pow__(self, exponent) -> "Jet":
        return self.power(float(exponent))

    # ------------------------------------------------------------------
    # Elementary functions
    # ------------------------------------------------------------------

    def _compose(self, derivatives: Sequence) -> "Jet":
        """f(self) given f^(j)(value) for j = 0..order."""
        out = np.zeros_like(self.coefficients, dtype=float)
        out[0] = derivatives[0]
        if self.order == 0:
            return self._with(out)
        increment = np.array(self.coefficients, dtype=float, copy=True)
        increment[0] = 0.0
        power = increment
        for j in range(1, self.order + 1):
            out = out + (derivatives[j] / math.factorial(j)) * power
            if j < self.order:
                power = _convolve(self.table, power, increment)
        out[0] = derivatives[0]
        return self._with(out)

    def exp(self) -> "Jet":
        with np.errstate(over="ignore"):
            e = np.exp(self.value)
        bad = ~np.isfinite(e)
        if np.any(bad):
            raise DomainError("exp overflow", np.flatnonzero(np.atleast_1d(bad)))
        return self._compose([e] * (self.order + 1))

    def ln(self) -> "Jet":
        a0 = self.value
        bad = np.asarray(a0) <= 0
        if np.any(bad):
            raise DomainError("ln of non-positive value", np.flatnonzero(np.atleast_1d(bad)))
        derivatives = [np.log(a0)]
        for j in range(1, self.order + 1):
            derivatives.append((-1) ** (j - 1) * math.factorial(j - 1) / a0 ** j)
        return self._compose(derivatives)

    def power(self, p: float) -> "Jet":
        a0 = self.value
        arr = np.asarray(a0)
        bad = np.zeros(arr.shape, dtype=bool)
        if not float(p).is_integer():
            bad |= arr < 0
        if p < 0:
            bad |= arr == 0
        derivatives = [None] * (self.order + 1)
        falling = 1.0
        for j in range(1, self.order + 1):
            falling *= p - (j - 1)
            if falling != 0 and p - j < 0:
                bad |= arr == 0
        if np.any(bad):
            raise DomainError(f"power {p} outside domain", np.flatnonzero(np.atleast_1d(bad)))
        derivatives[0] = np.power(a0, p)
        falling = 1.0
        for j in range(1, self.order + 1):
            falling *= p - (j - 1)
            derivatives[j] = 0.0 if falling == 0 else falling * np.power(a0, p - j)
        return self._compose(derivatives)

    def sqrt(self) -> "Jet":
        a0 = self.value
        arr = np.asarray(a0)
        bad = arr < 0
        if self.order > 0:
            bad = bad | (arr == 0)
        if np.any(bad):
            raise DomainError("sqrt outside domain", np.flatnonzero(np.atleast_1d(bad)))
        derivatives = [np.sqrt(a0)]
        falling = 1.0
        for j in range(1, self.order + 1):
            falling *= 0.5 - (j - 1)
            derivatives.append(falling * np.power(a0, 0.5 - j))
        return self._compose(derivatives)

    def sin(self) -> "Jet":
        s, c = np.sin(self.value), np.cos(self.value)
        cycle = [s, c, -s, -c]
        return self._compose([cycle[j % 4] for j in range(self.order + 1)])

    def cos(self) -> "Jet":
        s, c = np.sin(self.value), np.cos(self.value)
        cycle = [c, -s, -c, s]
        return self._compose([cycle[j % 4] for j in range(self.order + 1)])

    def abs(self) -> "Jet":
        """|f| with the sign frozen from the order-0 part."""
        a0 = np.asarray(self.value)
        if self.order > 0 and np.any(a0 == 0):
            raise DomainError("abs is not differentiable at 0", np.flatnonzero(np.atleast_1d(a0 == 0)))
        sign = np.where(a0 < 0, -1.0, 1.0)
        out = self.coefficients * sign
        out[0] = np.abs(self.value)
        return self._with(out)

    __abs__ = abs

    def __repr__(self) -> str:
        return f"Jet(m={self.m}, order={self.order}, value={self.value!r})"


def _convolve(table: MultiIndexTable, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    products = a[table.left] * b[table.right]
    batch = products.shape[1:]
    summed = table.product @ products.reshape(products.shape[0], -1)
    return np.asarray(summed).reshape((table.size,) + batch)


def _divide(table: MultiIndexTable, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    b0 = b[0]
    bad = np.asarray(b0) == 0
    if np.any(bad):
        raise DomainError("division by zero", np.flatnonzero(np.atleast_1d(bad)))
    a, b = np.broadcast_arrays(a, b)
    q = np.zeros(a.shape, dtype=float)
    q[0] = a[0] / b0
    batch = a.shape[1:]
    for rows, selected, matrix in table.division_steps:
        terms = q[table.left[selected]] * b[table.right[selected]]
        summed = matrix @ terms.reshape(len(selected), -1)
        summed = np.asarray(summed).reshape((table.size,) + batch)
        q[rows] = (a[rows] - summed[rows]) / b0
    return q


# ============================================================================
# Seeds and extraction
# ============================================================================

def lift_point(x: Sequence[float], y: Sequence[float], order: int) -> List[Jet]:
    """
    Seed jets for the 2n phase coordinates.

    Args:
        x: Base coordinates, shape (n,) or (batch, n)
        y: Fiber coordinates, same shape as x
        order: Truncation order

    Returns:
        List [x1..xn, y1..yn] of jets whose value is the coordinate and whose
        first-order coefficient is 1 in their own slot
    """
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    if xs.shape != ys.shape:
        raise ValueError(f"x and y shapes differ: {xs.shape} vs {ys.shape}")
    n = xs.shape[-1]
    m = 2 * n
    table = multi_index_table(m, order)
    values = np.concatenate([xs, ys], axis=-1)
    batch = values.shape[:-1]
    seeds = []
    for slot in range(m):
        coefficients = np.zeros((table.size,) + batch)
        coefficients[0] = values[..., slot]
        if order >= 1:
            coefficients[1 + slot] = 1.0
        seeds.append(Jet(m, order, coefficients))
    return seeds


def extract_partial(jet: Jet, beta: Sequence[int]):
    """
    True partial derivative d^beta f = beta! * coefficient(beta).

    Raises:
        OrderError: |beta| exceeds the jet's order
    """
    key = tuple(int(b) for b in beta)
    if len(key) != jet.m:
        raise ValueError(f"Multi-index length {len(key)} != {jet.m}")
    if sum(key) > jet.order:
        raise OrderError(f"Partial of order {sum(key)} requested from order-{jet.order} jet")
    table = jet.table
    position = table.rank[key]
    return table.factorial[position] * jet.coefficients[position]


def derivative_tensors(jets: Sequence[Jet], upto: int) -> List[np.ndarray]:
    """
    Stack values and partial-derivative tensors of several jets.

    Returns:
        [D0, D1, ..., D_upto] with D_d of shape batch_shape + (len(jets),) + (m,) * d,
        D_d[..., i, a, b, ...] = d^d f_i / dz_a dz_b ...
    """
    if not jets:
        raise ValueError("No jets given")
    order = min(j.order for j in jets)
    if upto > order:
        raise OrderError(f"Tensors up to order {upto} requested from order-{order} jets")
    m = jets[0].m
    stacked = np.stack([j.truncate(order).coefficients for j in jets])
    stacked = np.moveaxis(stacked, (0, 1), (-2, -1))
    tensors = [stacked[..., 0]]
    for d in range(1, upto + 1):
        ranks, factors = _tensor_index(m, order, d)
        tensors.append(stacked[..., ranks] * factors)
    return tensors
