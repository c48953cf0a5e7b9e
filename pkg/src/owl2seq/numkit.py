"""Dense float64 linear algebra primitives shared by both networks.

Everything here operates on plain numpy arrays with dtype float64. Vectors
are 1-D arrays, matrices are 2-D arrays in row-major layout. All functions
are pure; the only stateful object is the seeded random generator returned
by :func:`make_rng`.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ShapeError",
    "make_rng",
    "as_vector",
    "as_matrix",
    "affine",
    "sigmoid_vec",
    "tanh_vec",
    "softmax",
    "glorot_init",
    "uniform_init",
]


class ShapeError(ValueError):
    """Raised when operand dimensions do not agree."""


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic random generator (PCG64) for the given seed.

    PCG64 is fixed as the project-wide algorithm: the same seed yields the
    same draw sequence on every platform and every run, which makes corpora,
    initializations and training runs reproducible.
    """
    return np.random.Generator(np.random.PCG64(int(seed)))


def as_vector(data) -> np.ndarray:
    v = np.asarray(data, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"expected a 1-D vector, got shape {v.shape}")
    return v


def as_matrix(data) -> np.ndarray:
    m = np.asarray(data, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def affine(W: np.ndarray, x: np.ndarray, b: np.ndarray) -> np.ndarray:
    """W @ x + b with explicit shape checking.

    W is (m, n), x is (n,), b is (m,); the result is (m,).
    """
    if W.ndim != 2 or x.ndim != 1 or b.ndim != 1:
        raise ShapeError(
            f"affine expects matrix, vector, vector; got {W.shape}, {x.shape}, {b.shape}"
        )
    m, n = W.shape
    if x.shape[0] != n or b.shape[0] != m:
        raise ShapeError(
            f"affine shape mismatch: W is {W.shape}, x is {x.shape}, b is {b.shape}"
        )
    return W @ x + b


def sigmoid_vec(v: np.ndarray) -> np.ndarray:
    """Element-wise logistic sigmoid, overflow-safe on both tails."""
    v = np.asarray(v, dtype=np.float64)
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def tanh_vec(v: np.ndarray) -> np.ndarray:
    """Element-wise hyperbolic tangent."""
    return np.tanh(np.asarray(v, dtype=np.float64))


def softmax(v: np.ndarray) -> np.ndarray:
    """Probability vector exp(v_i) / sum_j exp(v_j).

    The maximum is subtracted before exponentiation, so arbitrarily large
    inputs never overflow; the components always sum to 1 up to float64
    rounding.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.size < 1:
        raise ShapeError("softmax needs at least one component")
    shifted = v - np.max(v)
    e = np.exp(shifted)
    return e / np.sum(e)


def glorot_init(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform Glorot initialization: entries in +-sqrt(6 / (rows + cols))."""
    if rows < 1 or cols < 1:
        raise ShapeError(f"glorot_init needs positive dims, got ({rows}, {cols})")
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols)).astype(np.float64)


def uniform_init(rows: int, cols: int, scale: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform initialization in +-scale, used for the embedding table."""
    if rows < 1 or cols < 1:
        raise ShapeError(f"uniform_init needs positive dims, got ({rows}, {cols})")
    return rng.uniform(-scale, scale, size=(rows, cols)).astype(np.float64)
