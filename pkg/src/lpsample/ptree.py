"""Array-backed weighted binary trees for p-norm index sampling.

A vector tree stores ``|x_i|**p`` at its leaves together with ``sign(x_i)``,
and every internal node holds the sum of its two children, so the root equals
``sum_i |x_i|**p``.  Sampling an index with probability ``|x_i|**p / root``,
updating one entry, and reading an entry or the root are all O(log n).

The matrix variant keeps one vector tree per column plus a top-level tree
over the column p-norm powers, giving two-level (column, row) sampling.

Trees are single-writer: concurrent sampling and queries are safe only while
no update runs; nothing here synchronizes internally.  Parallel experiment
code should give each worker its own copy (or read-only shared access) and a
per-worker random stream.
"""

from __future__ import annotations

import math
import struct

import numpy as np

__all__ = [
    "EmptyDistributionError",
    "TreeAuditError",
    "WeightedVectorTree",
    "WeightedMatrixTree",
    "build_vector_tree",
    "build_matrix_tree",
]


class EmptyDistributionError(ValueError):
    """Sampling was requested from a tree whose total weight is zero."""


class TreeAuditError(RuntimeError):
    """An internal node disagrees with the sum of its children."""


def _capacity_for(n: int) -> int:
    return 1 if n <= 1 else 1 << (n - 1).bit_length()


def _check_exponent(p: float) -> float:
    p = float(p)
    if not math.isfinite(p) or p < 1.0:
        raise ValueError(f"exponent p must be finite and >= 1, got {p}")
    return p


def _magnitudes(values: np.ndarray, p: float) -> np.ndarray:
    if p == 1.0:
        return np.abs(values)
    if p == 2.0:
        return values * values
    return np.abs(values) ** p


class WeightedVectorTree:
    """Complete binary tree over ``|x_i|**p`` with signs, padded to a power of two.

    Entry indices are 0-based.  Leaves live at array offsets
    ``capacity - 1 .. capacity - 1 + n``; padding leaves are zero and can
    never be sampled.  ``last_op_visits`` records the number of tree nodes
    touched by the most recent sample or update, for cost-accounting tests.
    """

    __slots__ = ("_p", "_n", "_capacity", "_depth", "_nodes", "_signs", "last_op_visits")

    def __init__(self, values, p: float):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError("expected a one-dimensional sequence of values")
        if values.size == 0:
            raise ValueError("cannot build a tree over an empty vector")
        if not np.all(np.isfinite(values)):
            raise ValueError("input values must all be finite")
        p = _check_exponent(p)
        # sign(-0.0) is -0.0 in numpy, which casts to int8 zero as required
        signs = np.sign(values).astype(np.int8)
        mags = _magnitudes(values, p)
        if not np.all(np.isfinite(mags)):
            raise ValueError("|value|**p overflows for some entry")
        # |value|**p can underflow to zero; such entries carry zero weight
        signs[mags == 0.0] = 0
        self._init_storage(mags, signs, p)

    @classmethod
    def _from_magnitudes(cls, magnitudes, signs, p: float) -> "WeightedVectorTree":
        """Build directly from ``|x_i|**p`` leaves (internal and test use)."""
        magnitudes = np.asarray(magnitudes, dtype=np.float64)
        signs = np.asarray(signs, dtype=np.int8)
        if magnitudes.ndim != 1 or magnitudes.size == 0:
            raise ValueError("expected a non-empty one-dimensional magnitude array")
        if magnitudes.shape != signs.shape:
            raise ValueError("magnitudes and signs must have matching length")
        if not np.all(np.isfinite(magnitudes)) or np.any(magnitudes < 0):
            raise ValueError("leaf magnitudes must be finite and nonnegative")
        if np.any((signs == 0) != (magnitudes == 0.0)):
            raise ValueError("sign must be zero exactly where the magnitude is zero")
        tree = cls.__new__(cls)
        tree._init_storage(magnitudes.copy(), signs.copy(), _check_exponent(p))
        return tree

    def _init_storage(self, magnitudes: np.ndarray, signs: np.ndarray, p: float) -> None:
        n = magnitudes.size
        capacity = _capacity_for(n)
        self._p = p
        self._n = n
        self._capacity = capacity
        self._depth = capacity.bit_length() - 1
        self._nodes = np.zeros(2 * capacity - 1, dtype=np.float64)
        self._nodes[capacity - 1 : capacity - 1 + n] = magnitudes
        self._signs = signs
        self.last_op_visits = 0
        self.rebuild()

    # -- read access ---------------------------------------------------------

    @property
    def p(self) -> float:
        return self._p

    def __len__(self) -> int:
        return self._n

    @property
    def leaf_magnitudes(self) -> np.ndarray:
        """View of the n leaf values ``|x_i|**p`` (do not mutate)."""
        return self._nodes[self._capacity - 1 : self._capacity - 1 + self._n]

    @property
    def leaf_signs(self) -> np.ndarray:
        """View of the n entry signs in {-1, 0, +1} (do not mutate)."""
        return self._signs

    def query_pnorm_power(self) -> float:
        """Root value, equal to the p-th power of the p-norm of the vector."""
        return float(self._nodes[0])

    def query_entry(self, i: int) -> float:
        """Signed entry ``sign_i * magnitude_i**(1/p)``."""
        self._check_index(i)
        mag = self._nodes[self._capacity - 1 + i]
        s = int(self._signs[i])
        if s == 0:
            return 0.0
        if self._p == 1.0:
            return s * float(mag)
        if self._p == 2.0:
            return s * math.sqrt(mag)
        return s * float(mag) ** (1.0 / self._p)

    def entries(self) -> np.ndarray:
        """All signed entries reconstructed from the leaves, as a new array."""
        mags = self.leaf_magnitudes
        if self._p == 1.0:
            vals = mags.copy()
        elif self._p == 2.0:
            vals = np.sqrt(mags)
        else:
            vals = mags ** (1.0 / self._p)
        return vals * self._signs

    def probabilities(self) -> np.ndarray:
        """Sampling distribution over indices, ``|x_i|**p / root``."""
        root = self._nodes[0]
        if root <= 0.0:
            raise EmptyDistributionError("all entries are zero")
        return self.leaf_magnitudes / root

    # -- sampling ------------------------------------------------------------

    def sample_index(self, rng: np.random.Generator) -> int:
        """Draw one index with probability proportional to its leaf weight.

        Descends from the root, drawing at each node a uniform in [0, sum)
        and going left iff it falls below the left child's value, so
        zero-weight subtrees are never entered.
        """
        nodes = self._nodes
        if nodes[0] <= 0.0:
            raise EmptyDistributionError("all entries are zero")
        idx = 0
        visits = 1
        last = 2 * self._capacity - 2
        while 2 * idx + 1 <= last:
            left = 2 * idx + 1
            u = rng.random() * nodes[idx]
            idx = left if u < nodes[left] else left + 1
            visits += 1
        self.last_op_visits = visits
        return idx - (self._capacity - 1)

    def sample_indices(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Vectorized :meth:`sample_index`: draw ``size`` independent indices."""
        nodes = self._nodes
        if nodes[0] <= 0.0:
            raise EmptyDistributionError("all entries are zero")
        idx = np.zeros(size, dtype=np.int64)
        here = np.full(size, nodes[0])
        for _ in range(self._depth):
            left = 2 * idx + 1
            left_val = nodes[left]
            go_left = rng.random(size) * here < left_val
            idx = np.where(go_left, left, left + 1)
            here = np.where(go_left, left_val, nodes[left + 1])
        return idx - (self._capacity - 1)

    # -- mutation ------------------------------------------------------------

    def update_entry(self, i: int, value: float) -> None:
        """Set entry i to ``value`` and refresh the sums along its root path."""
        self._check_index(i)
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"entry value must be finite, got {value}")
        if self._p == 1.0:
            mag = abs(value)
        elif self._p == 2.0:
            mag = value * value
        else:
            mag = abs(value) ** self._p
        if math.isinf(mag):
            raise ValueError(f"|value|**p overflows for {value}")
        if mag == 0.0:
            sign = 0
        else:
            sign = 1 if value > 0 else -1
        self._signs[i] = sign
        self._set_leaf_magnitude(i, mag)

    def _set_leaf_magnitude(self, i: int, magnitude: float) -> None:
        nodes = self._nodes
        idx = self._capacity - 1 + i
        nodes[idx] = magnitude
        visits = 1
        # each ancestor is recomputed from its children, keeping parent sums
        # exact (no incremental-delta drift)
        while idx > 0:
            idx = (idx - 1) // 2
            nodes[idx] = nodes[2 * idx + 1] + nodes[2 * idx + 2]
            visits += 1
        self.last_op_visits = visits

    def rebuild(self) -> None:
        """Recompute every internal sum bottom-up from the leaves."""
        nodes = self._nodes
        size = self._capacity
        while size > 1:
            size //= 2
            nodes[size - 1 : 2 * size - 1] = (
                nodes[2 * size - 1 : 4 * size - 1 : 2] + nodes[2 * size : 4 * size - 1 : 2]
            )

    def audit(self, rel_tol: float = 1e-9) -> None:
        """Check structural invariants; raise :class:`TreeAuditError` on failure."""
        nodes = self._nodes
        cap = self._capacity
        mags = self.leaf_magnitudes
        if np.any(mags < 0) or not np.all(np.isfinite(nodes)):
            raise TreeAuditError("leaf magnitudes must be finite and nonnegative")
        if np.any(nodes[cap - 1 + self._n :] != 0.0):
            raise TreeAuditError("padding leaves must stay zero")
        if np.any((self._signs == 0) != (mags == 0.0)):
            raise TreeAuditError("sign/magnitude zero pattern mismatch")
        if cap > 1:
            parents = nodes[: cap - 1]
            child_sums = nodes[1 : 2 * cap - 2 : 2] + nodes[2 : 2 * cap - 1 : 2]
            tol = rel_tol * np.maximum(np.abs(parents), np.abs(child_sums))
            bad = np.abs(parents - child_sums) > tol
            if np.any(bad):
                k = int(np.flatnonzero(bad)[0])
                raise TreeAuditError(
                    f"node {k} holds {parents[k]!r} but its children sum to {child_sums[k]!r}"
                )

    # -- serialization -------------------------------------------------------

    _HEADER = struct.Struct("<dQ")

    def to_bytes(self) -> bytes:
        """Flat layout: p (f64), n (u64), n sign bytes, n leaf magnitudes (f64)."""
        return (
            self._HEADER.pack(self._p, self._n)
            + self._signs.tobytes()
            + self.leaf_magnitudes.astype("<f8").tobytes()
        )

    @classmethod
    def from_bytes(cls, buf: bytes) -> "WeightedVectorTree":
        head = cls._HEADER.size
        if len(buf) < head:
            raise ValueError("buffer too short for tree header")
        p, n = cls._HEADER.unpack_from(buf)
        expected = head + n + 8 * n
        if len(buf) != expected:
            raise ValueError(f"expected {expected} bytes for n={n}, got {len(buf)}")
        signs = np.frombuffer(buf, dtype=np.int8, count=n, offset=head)
        mags = np.frombuffer(buf, dtype="<f8", count=n, offset=head + n)
        return cls._from_magnitudes(mags, signs, p)

    def _check_index(self, i: int) -> None:
        if not 0 <= i < self._n:
            raise IndexError(f"index {i} out of range for length {self._n}")


class WeightedMatrixTree:
    """Two-level sampling structure: per-column trees plus a column-norm tree.

    Leaf j of the top tree holds the root of column tree j, so a column is
    drawn with probability proportional to its p-norm power and a row within
    it from the column's own distribution.
    """

    __slots__ = ("_p", "_m", "_n", "column_trees", "column_norm_tree")

    def __init__(self, entries, p: float):
        entries = np.asarray(entries, dtype=np.float64)
        if entries.ndim != 2:
            raise ValueError("expected a two-dimensional array of entries")
        m, n = entries.shape
        if m == 0 or n == 0:
            raise ValueError("matrix must have at least one row and one column")
        self._p = _check_exponent(p)
        self._m = m
        self._n = n
        self.column_trees = [WeightedVectorTree(entries[:, j], self._p) for j in range(n)]
        roots = np.array([t.query_pnorm_power() for t in self.column_trees])
        self.column_norm_tree = WeightedVectorTree._from_magnitudes(
            roots, (roots > 0).astype(np.int8), self._p
        )

    @property
    def p(self) -> float:
        return self._p

    @property
    def shape(self) -> tuple[int, int]:
        return (self._m, self._n)

    def total_pnorm_power(self) -> float:
        """Sum over columns of the column p-norm powers."""
        return self.column_norm_tree.query_pnorm_power()

    def column_pnorm_power(self, j: int) -> float:
        return self.column_trees[j].query_pnorm_power()

    def query_entry(self, i: int, j: int) -> float:
        return self.column_trees[j].query_entry(i)

    def sample_column(self, rng: np.random.Generator) -> int:
        return self.column_norm_tree.sample_index(rng)

    def sample_row(self, j: int, rng: np.random.Generator) -> int:
        return self.column_trees[j].sample_index(rng)

    def sample_entry(self, rng: np.random.Generator) -> tuple[int, int]:
        j = self.sample_column(rng)
        return self.sample_row(j, rng), j

    def sample_entries(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        """Draw ``size`` (row, column) pairs; columns are batched per unique j."""
        cols = self.column_norm_tree.sample_indices(rng, size)
        rows = np.empty(size, dtype=np.int64)
        for j in np.unique(cols):
            where = cols == j
            rows[where] = self.column_trees[j].sample_indices(rng, int(where.sum()))
        return rows, cols

    def update_entry(self, i: int, j: int, value: float) -> None:
        """Set A[i, j] and refresh both the column tree and the top tree."""
        if not 0 <= j < self._n:
            raise IndexError(f"column {j} out of range for {self._n} columns")
        tree = self.column_trees[j]
        tree.update_entry(i, value)
        root = tree.query_pnorm_power()
        self.column_norm_tree._signs[j] = 1 if root > 0 else 0
        self.column_norm_tree._set_leaf_magnitude(j, root)

    def entry_probabilities(self) -> np.ndarray:
        """(m, n) matrix of entry sampling probabilities ``|A_ij|**p / total``."""
        total = self.total_pnorm_power()
        if total <= 0.0:
            raise EmptyDistributionError("all entries are zero")
        out = np.empty((self._m, self._n))
        for j, tree in enumerate(self.column_trees):
            out[:, j] = tree.leaf_magnitudes
        return out / total

    def dense(self) -> np.ndarray:
        """Signed entries reconstructed column by column."""
        out = np.empty((self._m, self._n))
        for j, tree in enumerate(self.column_trees):
            out[:, j] = tree.entries()
        return out

    def audit(self, rel_tol: float = 1e-9) -> None:
        for tree in self.column_trees:
            tree.audit(rel_tol)
        self.column_norm_tree.audit(rel_tol)
        roots = np.array([t.query_pnorm_power() for t in self.column_trees])
        leaves = self.column_norm_tree.leaf_magnitudes
        tol = rel_tol * np.maximum(np.abs(roots), 1.0)
        if np.any(np.abs(roots - leaves) > tol):
            raise TreeAuditError("column-norm leaves disagree with column roots")


def build_vector_tree(values, p: float) -> WeightedVectorTree:
    """Build the p-norm sampling tree over a vector."""
    return WeightedVectorTree(values, p)


def build_matrix_tree(entries, p: float) -> WeightedMatrixTree:
    """Build the two-level p-norm sampling structure over a dense matrix."""
    return WeightedMatrixTree(entries, p)
