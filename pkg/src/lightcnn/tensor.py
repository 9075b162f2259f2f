"""Rank-4 NCHW tensor helpers, precision/debug modes, and a deterministic RNG.

Activations, weights and gradients are plain numpy arrays; the helpers here
add the contracts the rest of the engine relies on: strict shape checking,
a switchable default precision (float64 for gradient checking, float32 for
training and benchmarking), optional NaN/Inf detection, and a counter-based
random generator that produces bit-identical streams for a given seed on
every platform.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np

__all__ = [
    "set_default_dtype",
    "default_dtype",
    "using_dtype",
    "set_debug",
    "debug_enabled",
    "using_debug",
    "check_finite",
    "zeros",
    "zeros_like",
    "full",
    "from_values",
    "add",
    "sub",
    "scale",
    "hadamard",
    "matmul",
    "Rng",
]

_DTYPE_NAMES = {"float32": np.float32, "float64": np.float64}
_state = {"dtype": np.float32, "debug": False}


def _resolve_dtype(dtype):
    if dtype is None:
        return _state["dtype"]
    if isinstance(dtype, str):
        if dtype not in _DTYPE_NAMES:
            raise ValueError(f"unsupported dtype {dtype!r}; use 'float32' or 'float64'")
        return _DTYPE_NAMES[dtype]
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dtype!r}; use float32 or float64")
    return dt.type


def set_default_dtype(dtype) -> None:
    """Set the element type used by constructors and weight initialisation."""
    _state["dtype"] = _resolve_dtype(dtype)


def default_dtype():
    return _state["dtype"]


@contextmanager
def using_dtype(dtype):
    """Temporarily switch the default precision (e.g. float64 for checks)."""
    prev = _state["dtype"]
    _state["dtype"] = _resolve_dtype(dtype)
    try:
        yield
    finally:
        _state["dtype"] = prev


def set_debug(flag: bool) -> None:
    """Enable NaN/Inf detection after layer operations (slow; tests only)."""
    _state["debug"] = bool(flag)


def debug_enabled() -> bool:
    return _state["debug"]


@contextmanager
def using_debug(flag: bool = True):
    prev = _state["debug"]
    _state["debug"] = bool(flag)
    try:
        yield
    finally:
        _state["debug"] = prev


def check_finite(arr: np.ndarray, what: str = "value") -> None:
    """In debug mode, raise if ``arr`` contains NaN or Inf."""
    if _state["debug"] and not np.isfinite(arr).all():
        raise FloatingPointError(f"non-finite values in {what}")


# ---------------------------------------------------------------------------
# constructors and elementwise arithmetic
# ---------------------------------------------------------------------------

def _validate_dims(dims) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if not dims:
        raise ValueError("dims must be non-empty")
    if any(d < 1 for d in dims):
        raise ValueError(f"all dims must be >= 1, got {dims}")
    return dims


def zeros(dims, dtype=None) -> np.ndarray:
    return np.zeros(_validate_dims(dims), dtype=_resolve_dtype(dtype))


def zeros_like(x: np.ndarray) -> np.ndarray:
    return np.zeros_like(x)


def full(dims, value: float, dtype=None) -> np.ndarray:
    return np.full(_validate_dims(dims), value, dtype=_resolve_dtype(dtype))


def from_values(dims, values, dtype=None) -> np.ndarray:
    """Build a tensor from a flat row-major value sequence."""
    dims = _validate_dims(dims)
    flat = np.asarray(values, dtype=_resolve_dtype(dtype)).ravel()
    expected = math.prod(dims)
    if flat.size != expected:
        raise ValueError(f"expected {expected} values for dims {dims}, got {flat.size}")
    return flat.reshape(dims).copy()


def _check_same_shape(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(a: np.ndarray, b) -> np.ndarray:
    if isinstance(b, np.ndarray):
        _check_same_shape(a, b, "add")
    return a + b


def sub(a: np.ndarray, b) -> np.ndarray:
    if isinstance(b, np.ndarray):
        _check_same_shape(a, b, "sub")
    return a - b


def scale(a: np.ndarray, s: float) -> np.ndarray:
    return a * s


def hadamard(a: np.ndarray, b) -> np.ndarray:
    if isinstance(b, np.ndarray):
        _check_same_shape(a, b, "hadamard")
    return a * b


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Product of two matrix views; inner dimensions must agree."""
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D views, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: inner dims disagree, {a.shape} x {b.shape}")
    return a @ b


# ---------------------------------------------------------------------------
# counter-based RNG (SplitMix64 core)
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV53 = 1.0 / (1 << 53)


def _mix(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))


class Rng:
    """Deterministic counter-based generator.

    Output ``k`` is a pure function of ``(seed, k)``: the 64-bit counter is
    advanced by a fixed odd constant and hashed (SplitMix64 finaliser), so
    equal seeds give bit-identical streams on every platform, and array
    draws consume exactly the same counters as the equivalent scalar draws.
    """

    def __init__(self, seed: int):
        self._seed = int(seed) & _MASK64
        self._count = 0

    @classmethod
    def derive(cls, seed: int, *keys: int) -> "Rng":
        """Independent stream for (seed, key...) tuples, e.g. per sample."""
        state = int(seed) & _MASK64
        for k in keys:
            state = _mix((state + (int(k) + 1) * _GOLDEN) & _MASK64)
        return cls(state)

    # -- raw counters --------------------------------------------------

    def _next_u64(self) -> int:
        self._count += 1
        return _mix((self._seed + self._count * _GOLDEN) & _MASK64)

    def _next_u64_array(self, n: int) -> np.ndarray:
        counters = np.arange(self._count + 1, self._count + n + 1, dtype=np.uint64)
        self._count += n
        with np.errstate(over="ignore"):
            states = np.uint64(self._seed) + counters * np.uint64(_GOLDEN)
        return _mix_array(states)

    # -- distributions -------------------------------------------------

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        """Uniform draw in [lo, hi)."""
        if not lo < hi:
            raise ValueError(f"uniform requires lo < hi, got [{lo}, {hi})")
        u = (self._next_u64() >> 11) * _INV53
        return lo + (hi - lo) * u

    def uniform_array(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        if not lo < hi:
            raise ValueError(f"uniform requires lo < hi, got [{lo}, {hi})")
        u = (self._next_u64_array(n) >> np.uint64(11)).astype(np.float64) * _INV53
        return lo + (hi - lo) * u

    def normal(self, mean: float = 0.0, std: float = 1.0) -> float:
        """Gaussian draw via Box-Muller; consumes exactly two counters."""
        if std <= 0:
            raise ValueError(f"normal requires std > 0, got {std}")
        u1 = ((self._next_u64() >> 11) + 1) * _INV53  # in (0, 1]
        u2 = (self._next_u64() >> 11) * _INV53
        z = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
        return mean + std * z

    def normal_array(self, n: int, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        if std <= 0:
            raise ValueError(f"normal requires std > 0, got {std}")
        bits = self._next_u64_array(2 * n).reshape(n, 2) >> np.uint64(11)
        u1 = (bits[:, 0].astype(np.float64) + 1.0) * _INV53
        u2 = bits[:, 1].astype(np.float64) * _INV53
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        return mean + std * z

    def gamma(self, shape: float) -> float:
        """Gamma(shape, 1) draw, Marsaglia-Tsang squeeze method."""
        if shape <= 0:
            raise ValueError(f"gamma requires shape > 0, got {shape}")
        if shape < 1.0:
            # boost: Gamma(a) = Gamma(a + 1) * U^(1/a)
            u = ((self._next_u64() >> 11) + 1) * _INV53
            return self.gamma(shape + 1.0) * u ** (1.0 / shape)
        d = shape - 1.0 / 3.0
        c = 1.0 / math.sqrt(9.0 * d)
        while True:
            x = self.normal()
            v = 1.0 + c * x
            if v <= 0.0:
                continue
            v = v * v * v
            u = ((self._next_u64() >> 11) + 1) * _INV53
            if math.log(u) < 0.5 * x * x + d - d * v + d * math.log(v):
                return d * v

    def beta(self, a: float, b: float) -> float:
        """Beta(a, b) draw in [0, 1] via two Gamma draws."""
        if a <= 0 or b <= 0:
            raise ValueError(f"beta requires a, b > 0, got ({a}, {b})")
        ga = self.gamma(a)
        gb = self.gamma(b)
        if ga + gb == 0.0:
            return 0.5  # both underflowed; exact tie
        return ga / (ga + gb)

    # -- integers and shuffles ------------------------------------------

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) (Lemire multiply-shift)."""
        if n < 1:
            raise ValueError(f"below requires n >= 1, got {n}")
        return (self._next_u64() * n) >> 64

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm
