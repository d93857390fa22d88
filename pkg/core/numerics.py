"""
Numerics
========
Dense float64 arithmetic, activations with derivatives, the seeded generator
and the central finite-difference oracle every backward pass is checked against.

Matrices and vectors are plain numpy float64 arrays (2-D and 1-D).
The generator is numpy's PCG64; the same seed gives the same draw sequence
on every platform numpy supports.
"""

import logging
from typing import Callable, List, Literal

import numpy as np

from .errors import NumericalError, ShapeError

logger = logging.getLogger(__name__)

DTYPE = np.float64

ActivationKind = Literal["relu", "sigmoid", "tanh"]
ACTIVATIONS = ("relu", "sigmoid", "tanh")


# ==================== GENERATORS ====================

def make_rng(seed: int) -> np.random.Generator:
    """Create a PCG64 generator for the given seed"""
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rngs(seed: int, count: int) -> List[np.random.Generator]:
    """Derive `count` independent PCG64 streams from one seed"""
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.PCG64(child)) for child in children]


# ==================== SHAPES ====================

def as_vector(data, name: str = "vector") -> np.ndarray:
    """Coerce to a finite 1-D float64 array"""
    arr = np.asarray(data, dtype=DTYPE)
    if arr.ndim != 1 or arr.size == 0:
        raise ShapeError(f"{name} must be a non-empty 1-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{name} contains non-finite entries")
    return arr


def as_matrix(data, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array with at least one row and column"""
    arr = np.asarray(data, dtype=DTYPE)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must be a 2-D array with rows, cols >= 1, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{name} contains non-finite entries")
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product a·b; rejects non-conforming operands"""
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


# ==================== ACTIVATIONS ====================

def _sigmoid(x: np.ndarray) -> np.ndarray:
    # 1 / (1 + e^-x) without overflow for large |x|
    return np.exp(-np.logaddexp(0.0, -x))


def activate(x, kind: ActivationKind) -> np.ndarray:
    """Elementwise relu, sigmoid or tanh"""
    x = np.asarray(x, dtype=DTYPE)
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "sigmoid":
        return _sigmoid(x)
    if kind == "tanh":
        return np.tanh(x)
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activate_derivative(x, kind: ActivationKind) -> np.ndarray:
    """
    Elementwise derivative of `activate` evaluated at x.

    ReLU'(0) is 0, matching the zero branch of the forward pass.
    """
    x = np.asarray(x, dtype=DTYPE)
    if kind == "relu":
        return (x > 0.0).astype(DTYPE)
    if kind == "sigmoid":
        s = _sigmoid(x)
        return s * (1.0 - s)
    if kind == "tanh":
        t = np.tanh(x)
        return 1.0 - t * t
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def softmax(logits) -> np.ndarray:
    """Numerically stable softmax of a 1-D logit vector"""
    z = as_vector(logits, "logits")
    shifted = z - np.max(z)
    e = np.exp(shifted)
    return e / np.sum(e)


# ==================== INITIALIZATION ====================

def random_uniform_init(rows: int, cols: int, scale: float, rng: np.random.Generator) -> np.ndarray:
    """rows × cols matrix with entries i.i.d. uniform on [-scale, +scale]"""
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    if rows < 1 or cols < 1:
        raise ShapeError(f"cannot initialize a {rows}x{cols} matrix")
    return rng.uniform(-scale, scale, size=(rows, cols)).astype(DTYPE, copy=False)


def glorot_scale(fan_in: int, fan_out: int) -> float:
    """Half-width √(6/(fan_in + fan_out)) of the variance-preserving uniform init"""
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


# ==================== GRADIENT ORACLE ====================

def finite_difference_gradient(f: Callable[[np.ndarray], float], theta, eps: float = 1e-4) -> np.ndarray:
    """
    Central-difference estimate of ∇f at theta.

    Coordinates are visited in flat (C) order; for each one f is evaluated at
    θ+εe_i first and then at θ−εe_i. The returned array has theta's shape.

    Args:
        f: Deterministic scalar function of an array shaped like theta
        theta: Point of evaluation (not modified)
        eps: Step size, > 0

    Raises:
        NumericalError: f returned a non-finite value; names the coordinate
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")

    base = np.array(theta, dtype=DTYPE, copy=True)
    flat = base.reshape(-1)
    grad = np.zeros_like(flat)

    for i in range(flat.size):
        original = flat[i]

        flat[i] = original + eps
        f_plus = float(f(base))
        flat[i] = original - eps
        f_minus = float(f(base))
        flat[i] = original

        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericalError(f"non-finite function value at coordinate {i}")

        grad[i] = (f_plus - f_minus) / (2.0 * eps)

    return grad.reshape(base.shape)


def relative_error(analytic, numeric, floor: float = 1e-4) -> np.ndarray:
    """Elementwise |a − n| / max(|a|, |n|, floor)"""
    a = np.asarray(analytic, dtype=DTYPE)
    n = np.asarray(numeric, dtype=DTYPE)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return np.abs(a - n) / denom
