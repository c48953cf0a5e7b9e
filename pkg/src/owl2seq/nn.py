"""Trainable building blocks shared by the tagging and transduction networks.

The GRU cell follows the gate equations

    r = sigmoid(W_r x + U_r h_prev)
    z = sigmoid(W_z x + U_z h_prev)
    h~ = tanh(W_h x + r * (U_h h_prev))
    h  = z * h_prev + (1 - z) * h~

with no bias terms inside the gates or the candidate. The backward pass is
hand-derived and verified against central finite differences by
:func:`gradient_check`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numkit import ShapeError, affine, glorot_init, sigmoid_vec, softmax, tanh_vec, uniform_init

__all__ = [
    "GruParams",
    "GruCache",
    "GruGrads",
    "EmbeddingTable",
    "OutputHead",
    "AdaDeltaState",
    "AdaDelta",
    "GradCheckEntry",
    "GradCheckReport",
    "VocabularyError",
    "NumericError",
    "embed_window",
    "gru_step",
    "gru_backward",
    "GruBatchCache",
    "gru_step_batch",
    "gru_backward_batch",
    "output_distribution",
    "output_distribution_batch",
    "sequence_cross_entropy",
    "adadelta_step",
    "gradient_check",
]


class VocabularyError(IndexError):
    """A word/tag/term index fell outside its vocabulary."""


class NumericError(ArithmeticError):
    """A loss or gradient became non-finite."""


@dataclass
class GruParams:
    """The six GRU weight matrices.

    Input-to-hidden matrices (W_*) are (hidden, input); hidden-to-hidden
    matrices (U_*) are (hidden, hidden).
    """

    W_r: np.ndarray
    U_r: np.ndarray
    W_z: np.ndarray
    U_z: np.ndarray
    W_h: np.ndarray
    U_h: np.ndarray

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> "GruParams":
        def w():
            return glorot_init(hidden_dim, input_dim, rng)

        def u():
            return glorot_init(hidden_dim, hidden_dim, rng)

        return cls(W_r=w(), U_r=u(), W_z=w(), U_z=u(), W_h=w(), U_h=u())

    @property
    def hidden_dim(self) -> int:
        return self.W_r.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W_r.shape[1]

    def check(self) -> None:
        h, d = self.W_r.shape
        for name in ("W_r", "W_z", "W_h"):
            m = getattr(self, name)
            if m.shape != (h, d):
                raise ShapeError(f"{name} has shape {m.shape}, expected {(h, d)}")
        for name in ("U_r", "U_z", "U_h"):
            m = getattr(self, name)
            if m.shape != (h, h):
                raise ShapeError(f"{name} has shape {m.shape}, expected {(h, h)}")


@dataclass
class GruCache:
    """Forward-pass intermediates required by :func:`gru_backward`."""

    x: np.ndarray
    h_prev: np.ndarray
    r: np.ndarray
    z: np.ndarray
    h_tilde: np.ndarray
    uh: np.ndarray  # U_h @ h_prev, reused by the backward pass
    params: GruParams


@dataclass
class GruGrads:
    """Gradients mirroring :class:`GruParams`."""

    W_r: np.ndarray
    U_r: np.ndarray
    W_z: np.ndarray
    U_z: np.ndarray
    W_h: np.ndarray
    U_h: np.ndarray

    @classmethod
    def zeros_like(cls, p: GruParams) -> "GruGrads":
        return cls(
            W_r=np.zeros_like(p.W_r),
            U_r=np.zeros_like(p.U_r),
            W_z=np.zeros_like(p.W_z),
            U_z=np.zeros_like(p.U_z),
            W_h=np.zeros_like(p.W_h),
            U_h=np.zeros_like(p.U_h),
        )

    def add_(self, other: "GruGrads") -> None:
        for name in ("W_r", "U_r", "W_z", "U_z", "W_h", "U_h"):
            getattr(self, name).__iadd__(getattr(other, name))


@dataclass
class EmbeddingTable:
    """Word embeddings as the columns of a (embed_dim, vocab_size) matrix."""

    E: np.ndarray

    @classmethod
    def init(cls, embed_dim: int, vocab_size: int, rng: np.random.Generator,
             scale: float = 0.1) -> "EmbeddingTable":
        return cls(E=uniform_init(embed_dim, vocab_size, scale, rng))

    @property
    def embed_dim(self) -> int:
        return self.E.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.E.shape[1]


@dataclass
class OutputHead:
    """Affine layer followed by softmax over the output vocabulary."""

    W: np.ndarray
    b: np.ndarray

    @classmethod
    def init(cls, out_vocab: int, hidden_dim: int, rng: np.random.Generator) -> "OutputHead":
        return cls(W=glorot_init(out_vocab, hidden_dim, rng), b=np.zeros(out_vocab))

    @property
    def out_vocab(self) -> int:
        return self.W.shape[0]


def embed_window(table: EmbeddingTable, window) -> np.ndarray:
    """Concatenate the embedding columns for the indices of one context window.

    Equivalent to stacking E @ e_i for each index i in window order.
    """
    E = table.E
    vocab = E.shape[1]
    for i in window:
        if not 0 <= i < vocab:
            raise VocabularyError(f"word index {i} outside vocabulary of size {vocab}")
    return E[:, list(window)].T.reshape(-1)


def gru_step(p: GruParams, x: np.ndarray, h_prev: np.ndarray) -> tuple[np.ndarray, GruCache]:
    """One GRU step; returns the new hidden state and the backward cache."""
    h = p.hidden_dim
    if x.shape != (p.input_dim,):
        raise ShapeError(f"input has shape {x.shape}, expected {(p.input_dim,)}")
    if h_prev.shape != (h,):
        raise ShapeError(f"hidden state has shape {h_prev.shape}, expected {(h,)}")
    r = sigmoid_vec(p.W_r @ x + p.U_r @ h_prev)
    z = sigmoid_vec(p.W_z @ x + p.U_z @ h_prev)
    uh = p.U_h @ h_prev
    h_tilde = tanh_vec(p.W_h @ x + r * uh)
    h_new = z * h_prev + (1.0 - z) * h_tilde
    return h_new, GruCache(x=x, h_prev=h_prev, r=r, z=z, h_tilde=h_tilde, uh=uh, params=p)


def gru_backward(cache: GruCache, grad_h: np.ndarray) -> tuple[np.ndarray, np.ndarray, GruGrads]:
    """Backpropagate grad_h through one cached GRU step.

    Returns (grad_x, grad_h_prev, parameter grads), the exact analytic
    gradients chain-ruled with grad_h.
    """
    p = cache.params
    if grad_h.shape != cache.h_prev.shape:
        raise ShapeError(
            f"grad_h has shape {grad_h.shape}, expected {cache.h_prev.shape}"
        )
    r, z, h_tilde, uh = cache.r, cache.z, cache.h_tilde, cache.uh
    x, h_prev = cache.x, cache.h_prev

    dz = grad_h * (h_prev - h_tilde)
    dh_tilde = grad_h * (1.0 - z)
    dh_prev = grad_h * z

    da_h = dh_tilde * (1.0 - h_tilde * h_tilde)
    dr = da_h * uh
    duh = da_h * r

    da_z = dz * z * (1.0 - z)
    da_r = dr * r * (1.0 - r)

    g = GruGrads(
        W_h=np.outer(da_h, x),
        U_h=np.outer(duh, h_prev),
        W_z=np.outer(da_z, x),
        U_z=np.outer(da_z, h_prev),
        W_r=np.outer(da_r, x),
        U_r=np.outer(da_r, h_prev),
    )
    dh_prev = dh_prev + p.U_h.T @ duh + p.U_z.T @ da_z + p.U_r.T @ da_r
    dx = p.W_h.T @ da_h + p.W_z.T @ da_z + p.W_r.T @ da_r
    return dx, dh_prev, g


def output_distribution(head: OutputHead, h: np.ndarray) -> np.ndarray:
    """softmax(W h + b) over the output vocabulary."""
    return softmax(affine(head.W, h, head.b))


@dataclass
class GruBatchCache:
    """Per-step intermediates of :func:`gru_step_batch` (rows are examples)."""

    X: np.ndarray
    H_prev: np.ndarray
    r: np.ndarray
    z: np.ndarray
    h_tilde: np.ndarray
    uh: np.ndarray
    params: GruParams


def gru_step_batch(p: GruParams, X: np.ndarray, H_prev: np.ndarray) -> tuple:
    """One GRU step for a whole batch (example rows); same math as gru_step."""
    r = sigmoid_vec(X @ p.W_r.T + H_prev @ p.U_r.T)
    z = sigmoid_vec(X @ p.W_z.T + H_prev @ p.U_z.T)
    uh = H_prev @ p.U_h.T
    h_tilde = tanh_vec(X @ p.W_h.T + r * uh)
    H = z * H_prev + (1.0 - z) * h_tilde
    return H, GruBatchCache(X=X, H_prev=H_prev, r=r, z=z, h_tilde=h_tilde, uh=uh, params=p)


def gru_backward_batch(cache: GruBatchCache, dH: np.ndarray, grads: GruGrads) -> tuple:
    """Batched backward step; parameter grads (summed over the batch rows,
    i.e. in example index order) accumulate into grads in place.

    Returns (dX, dH_prev).
    """
    p = cache.params
    r, z, h_tilde, uh = cache.r, cache.z, cache.h_tilde, cache.uh
    X, H_prev = cache.X, cache.H_prev

    dz = dH * (H_prev - h_tilde)
    dh_tilde = dH * (1.0 - z)
    dH_prev = dH * z

    da_h = dh_tilde * (1.0 - h_tilde * h_tilde)
    dr = da_h * uh
    duh = da_h * r
    da_z = dz * z * (1.0 - z)
    da_r = dr * r * (1.0 - r)

    grads.W_h += da_h.T @ X
    grads.U_h += duh.T @ H_prev
    grads.W_z += da_z.T @ X
    grads.U_z += da_z.T @ H_prev
    grads.W_r += da_r.T @ X
    grads.U_r += da_r.T @ H_prev

    dH_prev = dH_prev + duh @ p.U_h + da_z @ p.U_z + da_r @ p.U_r
    dX = da_h @ p.W_h + da_z @ p.W_z + da_r @ p.W_r
    return dX, dH_prev


def output_distribution_batch(head: OutputHead, H: np.ndarray) -> np.ndarray:
    """Row-wise softmax(W h + b) for a batch of hidden states."""
    O = H @ head.W.T + head.b
    O -= O.max(axis=1, keepdims=True)
    np.exp(O, out=O)
    O /= O.sum(axis=1, keepdims=True)
    return O


def sequence_cross_entropy(pred, gold) -> float:
    """Categorical cross entropy -sum_k log pred[k][gold[k]].

    The sum runs over every step supplied, padded end-of-sequence steps
    included; callers decide the padding.
    """
    if len(pred) != len(gold):
        raise ShapeError(f"{len(pred)} predictions vs {len(gold)} gold indices")
    total = 0.0
    for k, (y, g) in enumerate(zip(pred, gold)):
        if not 0 <= g < len(y):
            raise VocabularyError(f"gold index {g} at step {k} outside {len(y)} classes")
        total -= float(np.log(y[g]))
    if not np.isfinite(total):
        raise NumericError("cross entropy is not finite")
    return total


@dataclass
class AdaDeltaState:
    """Decayed accumulators for one parameter tensor.

    Eg2 tracks the mean squared gradient, Edx2 the mean squared unit update
    (the update computed with lr = 1); lr only scales the applied step, so
    the accumulators are independent of it.
    """

    Eg2: np.ndarray
    Edx2: np.ndarray
    rho: float = 0.95
    epsilon: float = 1e-6
    lr: float = 1.0

    @classmethod
    def for_param(cls, param: np.ndarray, rho: float = 0.95, epsilon: float = 1e-6,
                  lr: float = 1.0) -> "AdaDeltaState":
        return cls(Eg2=np.zeros_like(param), Edx2=np.zeros_like(param),
                   rho=rho, epsilon=epsilon, lr=lr)


def adadelta_step(param: np.ndarray, grad: np.ndarray, state: AdaDeltaState) -> np.ndarray:
    """Apply one AdaDelta update in place; returns the updated parameter.

    Eg2  <- rho Eg2 + (1-rho) g^2
    d    <- -sqrt(Edx2 + eps) / sqrt(Eg2 + eps) * g
    Edx2 <- rho Edx2 + (1-rho) d^2
    param <- param + lr * d
    """
    if param.shape != grad.shape or param.shape != state.Eg2.shape:
        raise ShapeError(
            f"adadelta shapes disagree: param {param.shape}, grad {grad.shape}, "
            f"state {state.Eg2.shape}"
        )
    rho, eps = state.rho, state.epsilon
    state.Eg2 *= rho
    state.Eg2 += (1.0 - rho) * grad * grad
    delta_unit = -np.sqrt(state.Edx2 + eps) / np.sqrt(state.Eg2 + eps) * grad
    state.Edx2 *= rho
    state.Edx2 += (1.0 - rho) * delta_unit * delta_unit
    param += state.lr * delta_unit
    return param


class AdaDelta:
    """AdaDelta over a named parameter dict, one accumulator pair per tensor."""

    def __init__(self, params: dict[str, np.ndarray], rho: float = 0.95,
                 epsilon: float = 1e-6, lr: float = 1.0):
        self.params = params
        self.state = {
            name: AdaDeltaState.for_param(p, rho=rho, epsilon=epsilon, lr=lr)
            for name, p in params.items()
        }

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            adadelta_step(p, grads[name], self.state[name])


@dataclass
class GradCheckEntry:
    name: str
    max_rel_error: float
    coord: tuple
    analytic: float
    numeric: float


@dataclass
class GradCheckReport:
    entries: dict[str, GradCheckEntry] = field(default_factory=dict)
    tol: float = 1e-4

    @property
    def max_rel_error(self) -> float:
        if not self.entries:
            return 0.0
        return max(e.max_rel_error for e in self.entries.values())

    @property
    def failures(self) -> list[GradCheckEntry]:
        return [e for e in self.entries.values() if e.max_rel_error >= self.tol]

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        lines = []
        for name in sorted(self.entries):
            e = self.entries[name]
            status = "ok" if e.max_rel_error < self.tol else "FAIL"
            lines.append(
                f"{status:4s} {name:12s} max_rel_err={e.max_rel_error:.3e} "
                f"at {e.coord} analytic={e.analytic:+.6e} numeric={e.numeric:+.6e}"
            )
        lines.append(f"overall max relative error: {self.max_rel_error:.3e} (tol {self.tol:g})")
        return "\n".join(lines)


def _rel_error(a: float, n: float, floor: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), floor)


def _noise_floor(loss: float, step: float, tol: float) -> float:
    """Denominator floor for the relative error.

    Central differences of a float64 loss L carry roundoff of roughly
    eps * |L| / step in absolute terms; dividing that by tol gives the
    gradient magnitude below which the comparison would measure nothing but
    that noise. Coordinates that small are compared against this floor
    instead of their own magnitude (factor 8 is safety margin).
    """
    eps = float(np.finfo(np.float64).eps)
    return max(1e-8, 8.0 * eps * max(1.0, abs(loss)) / step / tol)


def gradient_check(fn, params: dict[str, np.ndarray], *, step: float = 1e-5,
                   tol: float = 1e-4, max_coords: int = 200,
                   rng: np.random.Generator | None = None) -> GradCheckReport:
    """Compare analytic gradients with central finite differences.

    fn() must deterministically return (loss, grads) for the current
    contents of params; grads is a dict matching params. Tensors with more
    than max_coords entries are subsampled with the given rng (all
    coordinates are checked otherwise).
    """
    loss0, grads = fn()
    if not np.isfinite(loss0):
        raise NumericError(f"loss is not finite: {loss0}")
    floor = _noise_floor(loss0, step, tol)
    report = GradCheckReport(tol=tol)
    for name, p in params.items():
        flat = p.reshape(-1)
        if not np.shares_memory(flat, p):
            raise ValueError(f"parameter {name!r} is not contiguous; cannot perturb in place")
        n = flat.shape[0]
        if n > max_coords:
            if rng is None:
                rng = np.random.default_rng(0)
            coords = rng.choice(n, size=max_coords, replace=False)
        else:
            coords = np.arange(n)
        g_flat = grads[name].reshape(-1)
        worst = GradCheckEntry(name=name, max_rel_error=0.0, coord=(0,),
                               analytic=float(g_flat[0]) if n else 0.0, numeric=0.0)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + step
            lp, _ = fn()
            flat[c] = orig - step
            lm, _ = fn()
            flat[c] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise NumericError(f"non-finite loss while perturbing {name}[{c}]")
            numeric = (lp - lm) / (2.0 * step)
            analytic = float(g_flat[c])
            err = _rel_error(analytic, numeric, floor)
            if err >= worst.max_rel_error:
                worst = GradCheckEntry(
                    name=name,
                    max_rel_error=err,
                    coord=np.unravel_index(int(c), p.shape),
                    analytic=analytic,
                    numeric=float(numeric),
                )
        report.entries[name] = worst
    return report
