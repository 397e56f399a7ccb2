"""Rejective (conditional Bernoulli) support model.

A support I of fixed size S is drawn with probability proportional to
prod_{i in I} w_i * prod_{j notin I} (1 - w_j).  The normaliser and the
exact sequential sampler both run on elementary symmetric polynomials of
the odds w/(1-w), evaluated in log space with the stable two-term
recurrence, so no enumeration over supports is ever needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidWeights, RejectionCapExceeded

_SUM_TOL = 1e-6


@dataclass
class WeightVector:
    """Per-coefficient inclusion weights with their sum S = sum(omega)."""

    omega: np.ndarray
    sparsity: float

    @classmethod
    def from_omega(cls, omega) -> "WeightVector":
        omega = np.asarray(omega, dtype=float)
        if omega.ndim != 1 or omega.size == 0:
            raise InvalidWeights("omega must be a nonempty 1D vector")
        if np.any(omega < -1e-12) or np.any(omega > 1 + 1e-12):
            raise InvalidWeights("omega entries must lie in [0, 1]")
        omega = np.clip(omega, 0.0, 1.0)
        return cls(omega=omega, sparsity=float(omega.sum()))

    def matrix(self) -> np.ndarray:
        """Weight matrix W with vec(W) = omega (column-major)."""
        side = int(round(np.sqrt(self.omega.size)))
        if side * side != self.omega.size:
            raise InvalidWeights("omega length is not a perfect square")
        return self.omega.reshape(side, side).T

    def __len__(self) -> int:
        return int(self.omega.size)


def flip(v: np.ndarray) -> np.ndarray:
    """Exact index reversal of a coefficient vector; involutive."""
    return np.asarray(v)[::-1].copy()


def estimate_weights(corpus, threshold: float, mode: str = "absolute") -> WeightVector:
    """Relative frequency with which each coefficient exceeds the threshold.

    mode "absolute" compares |coefficient| directly to the threshold;
    "relative" scales the threshold by each vector's max magnitude.
    """
    corpus = np.atleast_2d(np.asarray(corpus))
    if corpus.size == 0:
        raise InvalidWeights("corpus is empty")
    if threshold <= 0:
        raise InvalidWeights("threshold must be positive")
    mags = np.abs(corpus)
    if mode == "absolute":
        hits = mags > threshold
    elif mode == "relative":
        peak = mags.max(axis=1, keepdims=True)
        hits = mags > threshold * peak
    else:
        raise InvalidWeights(f"unknown threshold mode {mode!r}")
    omega = hits.mean(axis=0)
    if not np.any(omega > 0):
        raise InvalidWeights("no coefficient survived thresholding")
    return WeightVector.from_omega(omega)


def normalize_weights(omega, s_target: float) -> WeightVector:
    """Rescale omega to sum to s_target, clamping at 1 and redistributing.

    Entries pushed above 1 are clamped and the excess is spread
    proportionally over the remaining entries until the sum constraint
    holds to 1e-9.
    """
    omega = np.asarray(omega, dtype=float).copy()
    if np.any(omega < 0):
        raise InvalidWeights("omega entries must be nonnegative")
    positive = omega > 0
    if not np.any(positive):
        raise InvalidWeights("omega must not be all zero")
    if s_target > positive.sum() + 1e-12:
        raise InvalidWeights(
            f"target sum {s_target} exceeds the {int(positive.sum())} positive entries"
        )
    # divide before scaling: ratios stay <= 1 even for subnormal inputs
    w = (omega / omega.sum()) * s_target
    clamped = np.zeros(len(w), dtype=bool)
    for _ in range(len(w)):
        over = w > 1.0
        if not over.any():
            break
        clamped |= over
        w[clamped] = 1.0
        deficit = s_target - clamped.sum()
        free = ~clamped & positive
        total_free = w[free].sum()
        if deficit < -1e-12 or (deficit > 1e-12 and total_free == 0):
            raise InvalidWeights("cannot redistribute excess mass")
        if total_free > 0:
            w[free] = (w[free] / total_free) * deficit
    if abs(w.sum() - s_target) > 1e-9:
        raise InvalidWeights("normalisation failed to reach the target sum")
    return WeightVector(omega=w, sparsity=float(s_target))


def _log_suffix_esp(log_odds: np.ndarray, r_max: int) -> np.ndarray:
    """Table E[i, j] = log e_j(odds[i:]) via the stable two-term recurrence."""
    n = len(log_odds)
    table = np.full((n + 1, r_max + 1), -np.inf)
    table[:, 0] = 0.0
    for i in range(n - 1, -1, -1):
        top = min(r_max, n - i)
        js = np.arange(1, top + 1)
        table[i, js] = np.logaddexp(table[i + 1, js], log_odds[i] + table[i + 1, js - 1])
    return table


@dataclass
class SupportDistribution:
    """Rejective sampling model with cached normaliser and ESP tables."""

    weights: WeightVector
    _forced: np.ndarray = field(init=False, repr=False)
    _free: np.ndarray = field(init=False, repr=False)
    _log_odds: np.ndarray = field(init=False, repr=False)
    _esp: np.ndarray = field(init=False, repr=False)
    log_normalizer: float = field(init=False)

    def __post_init__(self) -> None:
        omega = self.weights.omega
        s_round = int(round(self.weights.sparsity))
        if abs(self.weights.sparsity - s_round) > _SUM_TOL or s_round < 1:
            raise InvalidWeights(
                "support distribution needs sum(omega) equal to a positive "
                f"integer; got {self.weights.sparsity} (normalize first)"
            )
        if s_round > len(omega):
            raise InvalidWeights("sparsity exceeds dimension")
        self._forced = np.flatnonzero(omega >= 1.0)
        self._free = np.flatnonzero((omega > 0.0) & (omega < 1.0))
        r = s_round - len(self._forced)
        if r < 0 or r > len(self._free):
            raise InvalidWeights("weights cannot produce supports of size S")
        with np.errstate(divide="ignore"):
            w_free = omega[self._free]
            self._log_odds = np.log(w_free) - np.log1p(-w_free)
        self._esp = _log_suffix_esp(self._log_odds, r)
        log_e_r = self._esp[0, r] if r >= 0 else -np.inf
        self.log_normalizer = -(np.log1p(-omega[self._free]).sum() + log_e_r)

    @property
    def sparsity(self) -> int:
        return int(round(self.weights.sparsity))

    @property
    def normalizer(self) -> float:
        """The constant c of the model; may overflow for extreme weights."""
        return float(np.exp(self.log_normalizer))

    @property
    def dim(self) -> int:
        return len(self.weights)

    @property
    def _r(self) -> int:
        return self.sparsity - len(self._forced)


def support_prob(dist: SupportDistribution, support) -> float:
    """P(I) under the rejective model; 0 whenever |I| != S."""
    support = np.asarray(support, dtype=np.int64)
    if len(np.unique(support)) != len(support):
        raise InvalidWeights("support contains repeated indices")
    if len(support) != dist.sparsity:
        return 0.0
    omega = dist.weights.omega
    inside = np.zeros(dist.dim, dtype=bool)
    inside[support] = True
    if np.any(omega[support] <= 0.0):
        return 0.0
    if np.any((omega >= 1.0) & ~inside):
        return 0.0
    free_in = dist._free[inside[dist._free]]
    free_out = dist._free[~inside[dist._free]]
    log_p = (
        np.log(omega[free_in]).sum()
        + np.log1p(-omega[free_out]).sum()
        + dist.log_normalizer
    )
    return float(np.exp(log_p))


def sample_supports(
    dist: SupportDistribution,
    n: int,
    method: str = "exact",
    seed=None,
    rejection_cap: int = 10**6,
) -> np.ndarray:
    """Draw n supports as a boolean (n, K) matrix; deterministic given seed.

    "exact" runs the sequential conditional-Poisson scheme on the cached
    ESP table; "rejection" draws independent Bernoulli(omega) vectors and
    keeps those with exactly S successes.
    """
    rng = np.random.default_rng(seed)
    omega = dist.weights.omega
    k_total = dist.dim
    out = np.zeros((n, k_total), dtype=bool)
    out[:, dist._forced] = True
    r_target = dist._r
    if r_target == 0:
        return out
    if method == "rejection":
        filled = 0
        raw = 0
        chunk = max(256, min(n * 4, 65536))
        probs = omega[dist._free]
        while filled < n:
            draws = rng.random((chunk, len(dist._free))) < probs
            raw += chunk
            good = draws[draws.sum(axis=1) == r_target]
            take = min(len(good), n - filled)
            if take:
                rows = np.arange(filled, filled + take)
                out[np.ix_(rows, dist._free)] = good[:take]
                filled += take
            if raw > rejection_cap * max(1, n):
                raise RejectionCapExceeded(
                    f"acceptance too rare after {raw} Bernoulli draws"
                )
        return out
    if method != "exact":
        raise InvalidWeights(f"unknown sampling method {method!r}")
    esp = dist._esp
    log_odds = dist._log_odds
    n_free = len(dist._free)
    remaining = np.full(n, r_target, dtype=np.int64)
    u = rng.random((n, n_free))
    for t in range(n_free):
        active = remaining > 0
        if not active.any():
            break
        r = remaining
        # P(include index t | r left) = odds_t e_{r-1}(suffix) / e_r(suffix+t)
        with np.errstate(invalid="ignore"):
            log_p = log_odds[t] + esp[t + 1, np.maximum(r - 1, 0)] - esp[t, np.maximum(r, 1)]
        p = np.where(active, np.exp(np.minimum(log_p, 0.0)), 0.0)
        must = active & (n_free - t == r)  # as many slots as indices left
        include = (u[:, t] < p) | must
        out[include, dist._free[t]] = True
        remaining = remaining - include.astype(np.int64)
    return out


def sample_support(dist: SupportDistribution, method: str = "exact", seed=None,
                   rejection_cap: int = 10**6) -> np.ndarray:
    """Single support draw, returned as a sorted index array."""
    mask = sample_supports(dist, 1, method=method, seed=seed,
                           rejection_cap=rejection_cap)[0]
    return np.flatnonzero(mask)


def sequential_path_log_prob(dist: SupportDistribution, support) -> float:
    """log-probability of `support` accumulated along the sequential path.

    Multiplying the per-index conditional inclusion/exclusion
    probabilities must reproduce support_prob exactly; exposed so tests
    can check the sampler against the closed form.
    """
    support = np.asarray(support, dtype=np.int64)
    inside = np.zeros(dist.dim, dtype=bool)
    inside[support] = True
    if len(support) != dist.sparsity or np.any(~inside[dist._forced]):
        return -np.inf
    esp = dist._esp
    log_odds = dist._log_odds
    n_free = len(dist._free)
    r = dist._r
    total = 0.0
    for t in range(n_free):
        if r > 0:
            log_p = log_odds[t] + esp[t + 1, r - 1] - esp[t, r]
            p = min(np.exp(log_p), 1.0)
        else:
            p = 0.0
        if inside[dist._free[t]]:
            if p <= 0.0:
                return -np.inf
            total += np.log(p)
            r -= 1
        else:
            if p >= 1.0:
                return -np.inf
            total += np.log1p(-p)
    return total


@dataclass
class SparseSignal:
    """Unit-magnitude sparse signal with Rademacher signs on its support."""

    support: np.ndarray
    signs: np.ndarray
    values: np.ndarray


def draw_signals(dist: SupportDistribution, n: int, seed=None,
                 method: str = "exact") -> np.ndarray:
    """n signal vectors (n, K): rejective supports, iid +-1 magnitudes."""
    rng = np.random.default_rng(seed)
    masks = sample_supports(dist, n, method=method, seed=rng.integers(2**63))
    signs = rng.integers(0, 2, size=masks.shape) * 2 - 1
    return masks * signs.astype(float)


def draw_signal(dist: SupportDistribution, seed=None,
                method: str = "exact") -> SparseSignal:
    values = draw_signals(dist, 1, seed=seed, method=method)[0]
    support = np.flatnonzero(values)
    return SparseSignal(support=support, signs=values[support].copy(), values=values)
