"""Fast unitary transforms for the composite operator A0 = Phi Psi*.

Phi is the measurement transform (identity, 1D/2D unitary DFT, 2D
Walsh-Hadamard in Sylvester order) and Psi the sparsity analysis transform
(identity, periodic orthonormal Haar/DB4 wavelets in 1D, square multilevel
MRA in 2D, or the separable tensor construction psi (x) psi).  All kernels
act on the trailing axis/axes of their input, so batches of vectors are
transformed in a single call.

2D objects are vectorised column-major: flat index r of a side x side grid
maps to (row, col) = (r % side, r // side).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from math import log2, sqrt

import numpy as np

from .errors import DimensionMismatch, InvalidSpec


class Measurement(str, Enum):
    IDENTITY = "identity"
    DFT1D = "dft1d"
    DFT2D = "dft2d"
    HADAMARD2D = "hadamard2d"


class Sparsity(str, Enum):
    IDENTITY = "identity"
    HAAR1D = "haar1d"
    DB4_1D = "db4_1d"
    HAAR2D = "haar2d"            # square multilevel MRA
    DB4_2D = "db4_2d"            # square multilevel MRA
    TENSOR_HAAR = "tensor_haar"  # psi (x) psi, full 1D transform per axis
    TENSOR_DB4 = "tensor_db4"


class Direction(Enum):
    FORWARD = "forward"
    ADJOINT = "adjoint"


_2D_MEASUREMENTS = {Measurement.DFT2D, Measurement.HADAMARD2D}
_2D_SPARSITIES = {
    Sparsity.HAAR2D,
    Sparsity.DB4_2D,
    Sparsity.TENSOR_HAAR,
    Sparsity.TENSOR_DB4,
}
_1D_SPARSITIES = {Sparsity.HAAR1D, Sparsity.DB4_1D}

# Orthonormal scaling filters (synthesis low-pass); sum = sqrt(2).
_HAAR_H = np.array([1.0, 1.0]) / sqrt(2.0)
_DB4_H = np.array(
    [
        0.23037781330885523,
        0.7148465705525415,
        0.6308807679295904,
        -0.02798376941698385,
        -0.18703481171888114,
        0.030841381835986965,
        0.032883011666982945,
        -0.010597401784997278,
    ]
)


def _wavelet_filters(name: str) -> tuple[np.ndarray, np.ndarray]:
    h = _HAAR_H if name == "haar" else _DB4_H
    # quadrature mirror: g[n] = (-1)^n h[L-1-n]
    g = h[::-1].copy()
    g[1::2] *= -1.0
    return h, g


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class OperatorSpec:
    """Declarative description of the unitary A0 = Phi Psi*.

    ``size`` is the signal length K for 1D operators and the grid side
    sqrt(K) for 2D operators.  ``levels`` is the wavelet decomposition
    depth; if omitted it defaults to the full depth log2(K) in 1D and to
    max(1, log2(side) - 3) in 2D.
    """

    measurement: Measurement
    sparsity: Sparsity
    size: int
    levels: int | None = None

    def __post_init__(self) -> None:
        meas = Measurement(self.measurement)
        spar = Sparsity(self.sparsity)
        object.__setattr__(self, "measurement", meas)
        object.__setattr__(self, "sparsity", spar)
        if not _is_pow2(self.size) or self.size < 2:
            raise InvalidSpec(f"size must be a power of two >= 2, got {self.size}")
        if meas == Measurement.DFT1D and spar in _2D_SPARSITIES:
            raise InvalidSpec("1D measurement cannot pair with 2D sparsity")
        if meas in _2D_MEASUREMENTS and spar in _1D_SPARSITIES:
            raise InvalidSpec("2D measurement cannot pair with 1D sparsity")
        levels = self.levels
        if spar == Sparsity.IDENTITY:
            levels = None
        elif levels is None:
            if spar in _1D_SPARSITIES:
                levels = int(log2(self.size))
            else:
                levels = max(1, int(log2(self.size)) - 3)
        else:
            levels = int(levels)
            max_levels = int(log2(self.size))
            if not 1 <= levels <= max_levels:
                raise InvalidSpec(
                    f"levels must lie in [1, {max_levels}], got {levels}"
                )
        object.__setattr__(self, "levels", levels)

    @property
    def is_2d(self) -> bool:
        return self.measurement in _2D_MEASUREMENTS or self.sparsity in _2D_SPARSITIES

    @property
    def side(self) -> int:
        if not self.is_2d:
            raise InvalidSpec("side is only defined for 2D operators")
        return self.size

    @property
    def dim(self) -> int:
        """Total number of coefficients K."""
        return self.size * self.size if self.is_2d else self.size


@dataclass
class RowVector:
    """Row a_k of the composite unitary A0, satisfying a_k . x = (A0 x)_k."""

    entries: np.ndarray
    index: int


# ----------------------------------------------------------------------
# low-level kernels (all act on the trailing axis / axes)

def _fwht(x: np.ndarray) -> np.ndarray:
    """Orthonormal Walsh-Hadamard transform (Sylvester order), last axis."""
    n = x.shape[-1]
    y = np.array(x, dtype=np.result_type(x.dtype, np.float64), copy=True)
    flat = y.reshape(-1, n)
    h = 1
    while h < n:
        blk = flat.reshape(flat.shape[0], n // (2 * h), 2, h)
        a = blk[:, :, 0, :].copy()
        b = blk[:, :, 1, :]
        blk[:, :, 0, :] = a + b
        blk[:, :, 1, :] = a - b
        h *= 2
    flat *= 1.0 / sqrt(n)
    return flat.reshape(y.shape)


def _dwt_step(x: np.ndarray, h: np.ndarray, g: np.ndarray):
    n = x.shape[-1]
    half = n // 2
    pos = 2 * np.arange(half)
    dtype = np.result_type(x.dtype, np.float64)
    a = np.zeros(x.shape[:-1] + (half,), dtype=dtype)
    d = np.zeros_like(a)
    for t in range(len(h)):
        seg = x[..., (pos + t) % n]
        a += h[t] * seg
        d += g[t] * seg
    return a, d


def _idwt_step(a: np.ndarray, d: np.ndarray, h: np.ndarray, g: np.ndarray):
    half = a.shape[-1]
    n = 2 * half
    pos = 2 * np.arange(half)
    x = np.zeros(a.shape[:-1] + (n,), dtype=np.result_type(a.dtype, np.float64))
    for t in range(len(h)):
        x[..., (pos + t) % n] += h[t] * a + g[t] * d
    return x


def _dwt1(x: np.ndarray, name: str, levels: int) -> np.ndarray:
    """Multilevel periodic analysis, layout [a_J, d_J, d_{J-1}, ..., d_1]."""
    h, g = _wavelet_filters(name)
    y = np.array(x, dtype=np.result_type(x.dtype, np.float64), copy=True)
    n = y.shape[-1]
    for _ in range(levels):
        a, d = _dwt_step(y[..., :n], h, g)
        y[..., : n // 2] = a
        y[..., n // 2 : n] = d
        n //= 2
    return y


def _idwt1(x: np.ndarray, name: str, levels: int) -> np.ndarray:
    h, g = _wavelet_filters(name)
    y = np.array(x, dtype=np.result_type(x.dtype, np.float64), copy=True)
    n = y.shape[-1] >> levels
    for _ in range(levels):
        a = y[..., :n].copy()
        d = y[..., n : 2 * n].copy()
        y[..., : 2 * n] = _idwt_step(a, d, h, g)
        n *= 2
    return y


def _along_axis2(fn, img: np.ndarray) -> np.ndarray:
    """Apply a last-axis kernel along axis -2."""
    return np.swapaxes(fn(np.swapaxes(img, -1, -2)), -1, -2)


def _dwt2_square(img: np.ndarray, name: str, levels: int) -> np.ndarray:
    """Square multilevel MRA on (..., side, side); LL recursed in place."""
    h, g = _wavelet_filters(name)
    out = np.array(img, dtype=np.result_type(img.dtype, np.float64), copy=True)
    s = out.shape[-1]
    for _ in range(levels):
        sub = out[..., :s, :s]
        # columns (axis -2), then rows (axis -1)
        tmp = np.swapaxes(sub, -1, -2)
        a, d = _dwt_step(tmp, h, g)
        sub = np.swapaxes(np.concatenate([a, d], axis=-1), -1, -2)
        a, d = _dwt_step(sub, h, g)
        out[..., :s, :s] = np.concatenate([a, d], axis=-1)
        s //= 2
    return out


def _idwt2_square(img: np.ndarray, name: str, levels: int) -> np.ndarray:
    h, g = _wavelet_filters(name)
    out = np.array(img, dtype=np.result_type(img.dtype, np.float64), copy=True)
    side = out.shape[-1]
    s = side >> (levels - 1)
    for _ in range(levels):
        sub = out[..., :s, :s]
        half = s // 2
        # undo rows, then columns
        sub = _idwt_step(sub[..., :half].copy(), sub[..., half:].copy(), h, g)
        tmp = np.swapaxes(sub, -1, -2)
        tmp = _idwt_step(tmp[..., :half].copy(), tmp[..., half:].copy(), h, g)
        out[..., :s, :s] = np.swapaxes(tmp, -1, -2)
        s *= 2
    return out


def _unvec(x: np.ndarray, side: int) -> np.ndarray:
    """Column-major inverse vectorisation to (..., side, side)."""
    return np.swapaxes(x.reshape(x.shape[:-1] + (side, side)), -1, -2)


def _vec(img: np.ndarray) -> np.ndarray:
    return np.swapaxes(img, -1, -2).reshape(img.shape[:-2] + (-1,))


# ----------------------------------------------------------------------
# measurement / sparsity stages

def _measure(spec: OperatorSpec, x: np.ndarray, forward: bool) -> np.ndarray:
    meas = spec.measurement
    if meas == Measurement.IDENTITY:
        return x
    if meas == Measurement.DFT1D:
        fn = np.fft.fft if forward else np.fft.ifft
        return fn(x, norm="ortho")
    if meas == Measurement.DFT2D:
        img = _unvec(x, spec.side)
        fn = np.fft.fftn if forward else np.fft.ifftn
        return _vec(fn(img, axes=(-2, -1), norm="ortho"))
    # Hadamard is real symmetric orthogonal: adjoint = forward
    img = _unvec(x, spec.side)
    img = _along_axis2(_fwht, _fwht(img))
    return _vec(img)


def _sparsity(spec: OperatorSpec, x: np.ndarray, analysis: bool) -> np.ndarray:
    spar = spec.sparsity
    if spar == Sparsity.IDENTITY:
        return x
    levels = spec.levels
    if spar in _1D_SPARSITIES:
        name = "haar" if spar == Sparsity.HAAR1D else "db4"
        return (_dwt1 if analysis else _idwt1)(x, name, levels)
    name = "haar" if spar in (Sparsity.HAAR2D, Sparsity.TENSOR_HAAR) else "db4"
    img = _unvec(x, spec.side)
    if spar in (Sparsity.HAAR2D, Sparsity.DB4_2D):
        img = (_dwt2_square if analysis else _idwt2_square)(img, name, levels)
    else:
        fn1 = _dwt1 if analysis else _idwt1
        img = _along_axis2(lambda a: fn1(a, name, levels), fn1(img, name, levels))
    return _vec(img)


def apply(spec: OperatorSpec, direction: Direction, x: np.ndarray) -> np.ndarray:
    """Apply A0 (Forward) or A0* (Adjoint) to vectors along the last axis.

    Forward computes Phi(Psi* x); Adjoint computes Psi(Phi* y).  Both are
    exact inverses of each other up to floating point roundoff.
    """
    x = np.asarray(x)
    if x.shape[-1] != spec.dim:
        raise DimensionMismatch(
            f"expected last axis {spec.dim}, got {x.shape[-1]}"
        )
    if direction == Direction.FORWARD:
        return _measure(spec, _sparsity(spec, x, analysis=False), forward=True)
    return _sparsity(spec, _measure(spec, x, forward=False), analysis=True)


def rows_batch(spec: OperatorSpec, indices) -> np.ndarray:
    """Rows a_k of A0 for the given indices, stacked as a matrix.

    Computed as conj(A0* e_k), one adjoint transform per batch; no dense
    K x K matrix is formed.
    """
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= spec.dim):
        raise DimensionMismatch("row index out of range")
    slab = np.zeros((len(indices), spec.dim))
    slab[np.arange(len(indices)), indices] = 1.0
    return np.conj(apply(spec, Direction.ADJOINT, slab))


def row(spec: OperatorSpec, k: int) -> RowVector:
    """Extract row a_k of A0; satisfies row(k).entries . x = (A0 x)_k."""
    if not 0 <= k < spec.dim:
        raise DimensionMismatch(f"row index {k} out of range for K={spec.dim}")
    return RowVector(entries=rows_batch(spec, [k])[0], index=k)


def block_rows(spec: OperatorSpec, partition, k: int) -> list[RowVector]:
    """Rows B_k = (a_i)_{i in block k} in partition order."""
    idx = partition.blocks[k]
    mat = rows_batch(spec, idx)
    return [RowVector(entries=mat[j], index=int(idx[j])) for j in range(len(idx))]


def dense_matrix(spec: OperatorSpec, limit: int = 4096) -> np.ndarray:
    """Materialise A0 densely; oracle/test use only, guarded by `limit`."""
    if spec.dim > limit:
        raise InvalidSpec(f"refusing to build dense operator with K={spec.dim}")
    return rows_batch(spec, np.arange(spec.dim))


@lru_cache(maxsize=4)
def row_energies(spec: OperatorSpec) -> np.ndarray:
    """|a_{k,l}|^2 for all rows of A0, cached; only for K <= 2048.

    Larger operators are handled by streaming `rows_batch` chunks in the
    caller so no K x K array is ever held.
    """
    if spec.dim > 2048:
        raise InvalidSpec("row_energies is limited to K <= 2048; stream rows instead")
    mat = rows_batch(spec, np.arange(spec.dim))
    return np.abs(mat) ** 2


def row_chunks(spec: OperatorSpec, chunk: int | None = None):
    """Yield (indices, rows) covering all K rows in index order."""
    k_total = spec.dim
    if chunk is None:
        chunk = max(64, min(k_total, (1 << 24) // (16 * k_total)))
    for start in range(0, k_total, chunk):
        idx = np.arange(start, min(start + chunk, k_total))
        yield idx, rows_batch(spec, idx)


def signed_frequencies(side: int) -> np.ndarray:
    """Signed DFT frequency of each storage index: 0..side/2, then negative."""
    f = np.arange(side)
    return np.where(f <= side // 2, f, f - side)
