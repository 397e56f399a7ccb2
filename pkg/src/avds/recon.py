"""Measurement operators and equality-constrained basis pursuit.

The solver minimises the mu-smoothed l1 objective (Huber) with Nesterov
acceleration over the affine set {x : Ax = y}, using the exact projection
x - A*(Ax - y) available when the selected rows are orthonormal
(A A* = I), and continuation that shrinks mu geometrically down to its
configured final value.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .density import Density
from .errors import DimensionMismatch, SingularGram, UnsupportedSolver
from .masks import Mask
from .transforms import Direction, OperatorSpec, apply

UNSCALED = "unscaled"
THEOREM = "theorem"


@dataclass
class MeasurementOp:
    """Row-subsampled composite operator A.

    Unscaled mode keeps the selected rows of the unitary A0 untouched, so
    a distinct mask yields A A* = I.  Theorem mode applies the
    1/sqrt(m pi_k) scaling of the i.i.d. sampling model (duplicated draws
    collapse to a single row scaled by sqrt(count)); it is meant for
    diagnostics, not for the solver.
    """

    spec: OperatorSpec
    mask: Mask
    scaling: str = UNSCALED
    density: Density | None = None
    n_draws: int | None = None
    _scales: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.scaling == UNSCALED:
            self._scales = np.ones(self.mask.size)
        elif self.scaling == THEOREM:
            if self.density is None:
                raise UnsupportedSolver("theorem scaling needs the density used")
            m = self.n_draws or int(self.mask.multiplicities.sum())
            pi = self.density.pi[self.mask.indices]
            if np.any(pi <= 0):
                raise UnsupportedSolver("mask hits zero-probability atoms")
            self._scales = np.sqrt(self.mask.multiplicities / (m * pi))
        else:
            raise UnsupportedSolver(f"unknown scaling {self.scaling!r}")

    @property
    def is_orthonormal(self) -> bool:
        return self.scaling == UNSCALED and bool(np.all(self.mask.multiplicities == 1))

    @property
    def dim(self) -> int:
        return self.spec.dim


def measure(x: np.ndarray, op: MeasurementOp) -> np.ndarray:
    """y = A x via fast transforms plus row selection (and scaling)."""
    x = np.asarray(x)
    if x.shape[-1] != op.dim:
        raise DimensionMismatch(f"expected length {op.dim}, got {x.shape[-1]}")
    z = apply(op.spec, Direction.FORWARD, x)
    return z[..., op.mask.indices] * op._scales


def adjoint_measure(y: np.ndarray, op: MeasurementOp) -> np.ndarray:
    """x = A* y (scatter to the masked rows, then the adjoint transform)."""
    y = np.asarray(y)
    if y.shape[-1] != op.mask.size:
        raise DimensionMismatch("measurement length does not match the mask")
    z = np.zeros(y.shape[:-1] + (op.dim,), dtype=np.result_type(y.dtype, float))
    z[..., op.mask.indices] = y * op._scales
    return apply(op.spec, Direction.ADJOINT, z)


@dataclass(frozen=True)
class SolverParams:
    continuation_steps: int = 5
    final_mu_factor: float = 1e-6   # final mu = factor * max|A* y|
    inner_tol: float = 1e-7         # relative objective variation window
    max_inner: int = 3000

    def __post_init__(self) -> None:
        if min(self.continuation_steps, self.max_inner) < 1 or min(
            self.final_mu_factor, self.inner_tol
        ) <= 0:
            raise UnsupportedSolver("solver parameters must be positive")


@dataclass
class BPResult:
    x: np.ndarray
    converged: bool
    inner_iterations: int
    residual: float
    stage_objectives: list


def _huber_objective(x: np.ndarray, mu: float) -> float:
    a = np.abs(x)
    small = a < mu
    return float(np.where(small, a * a / (2 * mu), a - mu / 2).sum())


def solve_bp(y: np.ndarray, op: MeasurementOp, params: SolverParams | None = None) -> BPResult:
    """Approximately minimise ||x||_1 subject to A x = y.

    Requires an orthonormal operator (unscaled, distinct mask) so that the
    affine projection is exact; every iterate is feasible, hence the
    returned point satisfies the constraint to roundoff.
    """
    if params is None:
        params = SolverParams()
    if not op.is_orthonormal:
        raise UnsupportedSolver(
            "solve_bp needs an unscaled operator over a distinct mask (A A* = I)"
        )
    y = np.asarray(y)
    x0 = adjoint_measure(y, op)
    peak = float(np.max(np.abs(x0))) if x0.size else 0.0
    if peak == 0.0:
        return BPResult(np.zeros_like(x0), True, 0, 0.0, [])

    mu_first = 0.9 * peak
    mu_last = params.final_mu_factor * peak
    n_stage = params.continuation_steps
    if n_stage == 1:
        mus = np.array([mu_last])
    else:
        mus = np.geomspace(mu_first, mu_last, n_stage)

    def project(v):
        return v - adjoint_measure(measure(v, op) - y, op)

    x = x0
    total_iters = 0
    converged = True
    stage_objectives = []
    for mu in mus:
        z = x
        t = 1.0
        window: deque = deque(maxlen=10)
        stage_converged = False
        for _ in range(params.max_inner):
            grad = z / np.maximum(np.abs(z), mu)
            x_new = project(z - mu * grad)
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            z = x_new + ((t - 1.0) / t_new) * (x_new - x)
            x, t = x_new, t_new
            total_iters += 1
            f = _huber_objective(x, mu)
            window.append(f)
            if len(window) == window.maxlen:
                spread = max(window) - min(window)
                if spread <= params.inner_tol * max(abs(window[-1]), 1e-30):
                    stage_converged = True
                    break
        stage_objectives.append(_huber_objective(x, float(mus[-1])))
        converged = converged and stage_converged
    residual = float(np.linalg.norm(measure(x, op) - y))
    if not converged:
        warnings.warn(
            f"solve_bp hit the iteration cap; constraint residual {residual:.3e}",
            RuntimeWarning,
            stacklevel=2,
        )
    return BPResult(x, converged, total_iters, residual, stage_objectives)


def check_fuchs(spec: OperatorSpec, mask: Mask, support, signs) -> float:
    """Fuchs dual-certificate norm ||A_{I^c}* A_I (A_I* A_I)^{-1} s_I||_inf.

    A value below 1 certifies that the planted signal is the unique basis
    pursuit solution; used as the independent oracle for the solver.
    Columns are built by forward transforms, so no dense operator is
    formed.
    """
    support = np.asarray(support, dtype=np.int64)
    signs = np.asarray(signs)
    if signs.shape[-1] != support.size:
        raise DimensionMismatch("one sign per support index is required")
    if support.size > mask.size:
        raise SingularGram("support larger than the number of measurements")
    k_total = spec.dim
    slab = np.zeros((support.size, k_total))
    slab[np.arange(support.size), support] = 1.0
    cols = apply(spec, Direction.FORWARD, slab)[:, mask.indices].T  # (m, S)
    gram = cols.conj().T @ cols
    try:
        cho = linalg.cho_factor(gram)
        w = linalg.cho_solve(cho, signs.astype(complex))
    except linalg.LinAlgError as exc:
        raise SingularGram("A_I* A_I is singular (undersampled support)") from exc
    u = cols @ w  # (m,)
    z = np.zeros(k_total, dtype=complex)
    z[mask.indices] = u
    v = apply(spec, Direction.ADJOINT, z)
    off = np.ones(k_total, dtype=bool)
    off[support] = False
    return float(np.max(np.abs(v[off]))) if off.any() else 0.0
