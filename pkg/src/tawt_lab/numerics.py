"""Dense float64 numeric primitives shared by every other module.

Stable softmax / cross-entropy kernels, cosine similarity with an explicit
zero-vector convention, a central-difference gradient oracle used to audit
hand-derived backprop, and seeded, platform-stable random streams with a
64-bit mixing function for deriving independent child streams.

All computation is plain float64; there is no mixed precision anywhere.
"""

from __future__ import annotations

from collections.abc import Callable

import numpy as np

# Added inside every log so confident wrong predictions stay finite.
LOG_EPS = 1e-12
# Norms below this count as zero: cosine similarity with a vanished gradient
# is defined as 0, so it carries no alignment signal downstream.
ZERO_NORM_EPS = 1e-12
DEFAULT_FD_STEP = 1e-5

_MASK64 = (1 << 64) - 1


class DimensionError(ValueError):
    """An input has the wrong shape, or shapes disagree."""


class NumericError(ArithmeticError):
    """A computation produced or received a non-finite value."""


def _vector(x, name: str = "input") -> np.ndarray:
    v = np.ascontiguousarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {v.shape}")
    return v


def softmax(logits) -> np.ndarray:
    """Probability vector exp(z - max z) / sum, stable for large logits."""
    z = _vector(logits, "logits")
    if z.size == 0:
        raise DimensionError("softmax of an empty vector")
    if not np.all(np.isfinite(z)):
        raise NumericError("softmax input contains non-finite entries")
    e = np.exp(z - z.max())
    return e / e.sum()


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a (n, k) logit matrix."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] == 0:
        raise DimensionError(f"expected a (n, k) logit matrix, got shape {z.shape}")
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(probs, label: int) -> float:
    """-ln(probs[label] + eps) for a probability vector; always >= 0."""
    p = _vector(probs, "probs")
    if p.size == 0:
        raise DimensionError("cross_entropy of an empty probability vector")
    idx = int(label)
    if idx < 0 or idx >= p.size:
        raise IndexError(f"label {label} out of range for {p.size} classes")
    return float(-np.log(p[idx] + LOG_EPS))


def cosine_similarity(u, v) -> float:
    """<u, v> / (|u| |v|), clipped to [-1, 1]; 0 if either norm vanishes."""
    a = _vector(u, "u")
    b = _vector(v, "v")
    if a.size != b.size:
        raise DimensionError(f"length mismatch: {a.size} vs {b.size}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < ZERO_NORM_EPS or nb < ZERO_NORM_EPS:
        return 0.0
    return float(np.clip(float(a @ b) / (na * nb), -1.0, 1.0))


def finite_diff_gradient(
    f: Callable[[np.ndarray], float], params, h: float = DEFAULT_FD_STEP
) -> np.ndarray:
    """Central-difference gradient (f(p + h e_i) - f(p - h e_i)) / 2h.

    Independent oracle for checking analytic gradients; never used inside a
    training loop.
    """
    if h <= 0:
        raise ValueError(f"step h must be positive, got {h}")
    p = _vector(params, "params").copy()
    grad = np.empty_like(p)
    for i in range(p.size):
        orig = p[i]
        p[i] = orig + h
        up = float(f(p))
        p[i] = orig - h
        down = float(f(p))
        p[i] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NumericError(f"objective non-finite near coordinate {i}")
        grad[i] = (up - down) / (2.0 * h)
    return grad


def _mix64(h: int) -> int:
    h = (h ^ (h >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    h = (h ^ (h >> 27)) * 0x94D049BB133111EB & _MASK64
    return h ^ (h >> 31)


def hash64(*parts: int | str) -> int:
    """Deterministic 64-bit hash of a tuple of ints / short strings.

    Used to derive independent child seeds; stable across platforms and
    Python processes (unlike the builtin hash).
    """
    h = 0x9E3779B97F4A7C15
    for part in parts:
        if isinstance(part, str):
            h = _mix64(h ^ 0xC2B2AE3D27D4EB4F)
            for byte in part.encode("utf-8"):
                h = _mix64(h ^ byte)
        elif isinstance(part, (int, np.integer)):
            h = _mix64(h ^ (int(part) & _MASK64))
        else:
            raise TypeError(f"hash64 parts must be int or str, got {type(part)!r}")
    return h


class Rng:
    """Seeded random stream; identical seeds give bitwise-identical draws."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, low: float, high: float, size=None):
        return self._gen.uniform(low, high, size=size)

    def integers(self, low: int, high: int, size=None):
        """Integers in [low, high)."""
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def subset(self, n: int, k: int) -> np.ndarray:
        """k distinct indices from range(n), drawn without replacement."""
        if k > n:
            raise ValueError(f"cannot draw {k} distinct indices from {n}")
        return self._gen.choice(n, size=k, replace=False)

    def spawn(self, *parts: int | str) -> "Rng":
        """Independent child stream derived from (seed, *parts)."""
        return Rng(hash64(self.seed, *parts))

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed})"


def float_repr17(x: float) -> str:
    """17-significant-digit decimal form; round-trips float64 exactly."""
    return format(float(x), ".17g")
