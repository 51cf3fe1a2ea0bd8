"""Group-level synthetic control estimator.

Panel observations carry a unit label, a group (0 is the treated group,
1..K are untreated donor groups), an integer period and an outcome. Group
means over the matching periods define a quadratic objective whose minimizer
over the simplex is the synthetic-control weight; this module computes the
components of that objective, the per-unit influence functions that feed the
covariance estimators (plug-in at every candidate weight, or bootstrap at
the estimated weight), and the treated-minus-synthetic functional used for
post-period effect intervals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Tuple

import numpy as np

from .exceptions import DataError
from .geometry import OrthoBasis, SpdMatrix, build_basis, check_simplex_point
from .inference import WeightModel

__all__ = [
    "PanelData",
    "QuadraticComponents",
    "InfluenceSet",
    "quadratic_components",
    "influence_set",
    "variance_at",
    "bootstrap_variance",
    "treatment_functional",
    "make_weight_model",
]


@dataclass(eq=False)
class PanelData:
    """Long-format panel of grouped outcomes.

    Groups must form the contiguous set {0, ..., K} with K >= 1, every group
    needs at least two units, and every unit must be observed at every
    matching period 1..t_match exactly once. Periods beyond ``t_match`` (for
    example a post-treatment period) may be present and are ignored by the
    matching computations.
    """

    unit: np.ndarray
    group: np.ndarray
    time: np.ndarray
    outcome: np.ndarray
    t_match: int
    K: int = field(init=False)

    def __post_init__(self) -> None:
        self.unit = np.asarray(self.unit)
        self.group = np.asarray(self.group, dtype=int)
        self.time = np.asarray(self.time, dtype=int)
        self.outcome = np.asarray(self.outcome, dtype=float)
        n_obs = self.unit.size
        if n_obs == 0:
            raise DataError("panel has no observations")
        for name, arr in (("group", self.group), ("time", self.time), ("outcome", self.outcome)):
            if arr.size != n_obs:
                raise DataError(f"column {name} has {arr.size} entries, expected {n_obs}")
        if not np.all(np.isfinite(self.outcome)):
            raise DataError("outcome column has non-finite entries")
        if self.time.min() < 1:
            raise DataError("periods must be integers >= 1")
        if self.t_match < 1:
            raise DataError(f"t_match must be at least 1, got {self.t_match}")
        labels = sorted(set(self.group.tolist()))
        if labels[0] != 0 or labels != list(range(len(labels))):
            raise DataError(
                f"groups must form a contiguous range 0..K, found {labels}"
            )
        self.K = len(labels) - 1
        if self.K < 1:
            raise DataError("need at least one untreated group besides group 0")
        seen = set()
        for u, t in zip(self.unit.tolist(), self.time.tolist()):
            key = (u, t)
            if key in seen:
                raise DataError(f"duplicate observation for unit {u!r} at period {t}")
            seen.add(key)
        # one group per unit
        unit_group: dict = {}
        for u, g in zip(self.unit.tolist(), self.group.tolist()):
            prev = unit_group.setdefault(u, g)
            if prev != g:
                raise DataError(f"unit {u!r} appears in groups {prev} and {g}")
        counts = [0] * (self.K + 1)
        for g in unit_group.values():
            counts[g] += 1
        for g, c in enumerate(counts):
            if c < 2:
                raise DataError(f"group {g} has {c} unit(s); each group needs at least 2")
        self._unit_group = unit_group
        self._matched  # build the pivot now so balance errors surface at construction

    @classmethod
    def from_long(
        cls,
        unit,
        group,
        time,
        outcome,
        t_match: Optional[int] = None,
    ) -> "PanelData":
        """Build a panel from four parallel columns.

        When ``t_match`` is omitted, every period present is a matching
        period.
        """
        time_arr = np.asarray(time, dtype=int)
        if t_match is None:
            if time_arr.size == 0:
                raise DataError("panel has no observations")
            t_match = int(time_arr.max())
        return cls(unit=unit, group=group, time=time_arr, outcome=outcome, t_match=t_match)

    @property
    def n_units(self) -> int:
        return len(self._unit_group)

    @property
    def group_sizes(self) -> np.ndarray:
        sizes = np.zeros(self.K + 1, dtype=int)
        for g in self._unit_group.values():
            sizes[g] += 1
        return sizes

    @cached_property
    def _matched(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Pivot of the matching periods: (labels, unit groups, n x T outcomes).

        Units are ordered by (group, label string), a deterministic order
        independent of input row order.
        """
        order = sorted(self._unit_group, key=lambda u: (self._unit_group[u], str(u)))
        position = {u: i for i, u in enumerate(order)}
        n = len(order)
        T = self.t_match
        matrix = np.full((n, T), np.nan)
        in_window = self.time <= T
        rows = [position[u] for u in self.unit[in_window].tolist()]
        matrix[rows, self.time[in_window] - 1] = self.outcome[in_window]
        if np.isnan(matrix).any():
            holes = int(np.isnan(matrix).sum())
            raise DataError(
                f"panel is unbalanced: {holes} missing unit-period cell(s) over "
                f"matching periods 1..{T}"
            )
        groups = np.array([self._unit_group[u] for u in order], dtype=int)
        labels = np.array(order, dtype=object)
        return labels, groups, matrix


@dataclass(frozen=True)
class QuadraticComponents:
    """Components of the quadratic matching objective 0.5 w'Hw - w'h.

    ``H`` is the K x K period-averaged cross-product of the untreated group
    means and ``h`` its counterpart against the treated mean, so the
    objective gradient at ``w`` is ``H w - h``. ``group_means`` stacks the
    per-period means with the treated group in row 0; ``group_probs`` are the
    plug-in group membership shares. The last two are None when components
    are supplied directly by a user-defined quadratic objective.
    """

    H: np.ndarray
    h: np.ndarray
    group_means: Optional[np.ndarray] = None
    group_probs: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        H = np.asarray(self.H, dtype=float)
        h = np.asarray(self.h, dtype=float).ravel()
        K = h.size
        if H.shape != (K, K):
            raise ValueError(f"H must have shape {(K, K)}, got {H.shape}")
        if not (np.all(np.isfinite(H)) and np.all(np.isfinite(h))):
            raise ValueError("quadratic components have non-finite entries")
        scale = max(1.0, float(np.max(np.abs(H))))
        if float(np.max(np.abs(H - H.T))) > 1e-10 * scale:
            raise ValueError("H is not symmetric within 1e-10")
        if float(np.linalg.eigvalsh(0.5 * (H + H.T))[0]) < -1e-10 * scale:
            raise ValueError("H is not positive semidefinite")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "h", h)


@dataclass(frozen=True)
class InfluenceSet:
    """Per-unit influence functions of the objective gradient.

    ``psi_H`` has shape (n, K, K) and ``psi_h`` shape (n, K); the influence
    of unit i on the gradient at ``w`` is ``psi_H[i] @ w - psi_h[i]``. Both
    arrays must be column-mean-zero (they are exactly so for the plug-in
    construction; user-supplied sets are validated within a small tolerance).
    """

    psi_H: np.ndarray
    psi_h: np.ndarray
    n: int

    def __post_init__(self) -> None:
        psi_H = np.asarray(self.psi_H, dtype=float)
        psi_h = np.asarray(self.psi_h, dtype=float)
        if psi_H.ndim != 3 or psi_H.shape[1] != psi_H.shape[2]:
            raise ValueError(f"psi_H must have shape (n, K, K), got {psi_H.shape}")
        if psi_h.shape != psi_H.shape[:2]:
            raise ValueError(f"psi_h must have shape {psi_H.shape[:2]}, got {psi_h.shape}")
        if psi_H.shape[0] != self.n:
            raise ValueError(f"n={self.n} does not match {psi_H.shape[0]} units")
        if not (np.all(np.isfinite(psi_H)) and np.all(np.isfinite(psi_h))):
            raise ValueError("influence arrays have non-finite entries")
        scale = 1.0 + max(float(np.max(np.abs(psi_H))), float(np.max(np.abs(psi_h))))
        worst = max(
            float(np.max(np.abs(psi_H.mean(axis=0)))),
            float(np.max(np.abs(psi_h.mean(axis=0)))),
        )
        if worst > 1e-8 * scale:
            raise ValueError(
                f"influence functions are not mean zero (max mean {worst:.3e}); "
                "center them before constructing an InfluenceSet"
            )
        object.__setattr__(self, "psi_H", psi_H)
        object.__setattr__(self, "psi_h", psi_h)


def quadratic_components(panel: PanelData) -> QuadraticComponents:
    """Group means over matching periods and the implied quadratic objective."""
    _, groups, matrix = panel._matched
    K = panel.K
    T = panel.t_match
    n = matrix.shape[0]
    means = np.vstack([matrix[groups == j].mean(axis=0) for j in range(K + 1)])
    untreated = means[1:]
    H = untreated @ untreated.T / T
    h = untreated @ means[0] / T
    probs = np.bincount(groups, minlength=K + 1) / n
    return QuadraticComponents(H=H, h=h, group_means=means, group_probs=probs)


def influence_set(
    panel: PanelData, components: Optional[QuadraticComponents] = None
) -> InfluenceSet:
    """Per-unit influence functions of the estimated gradient.

    Each unit contributes through its within-group outcome deviations,
    inverse-weighted by the plug-in group share: for a unit of untreated
    group g the deviation enters row and column g of ``psi_H`` through its
    period-averaged product with every group-mean path, and entry g of
    ``psi_h`` through its product with the treated path; treated units only
    move ``psi_h``. The resulting arrays are exactly mean zero because group
    means and shares are the plug-in estimates.
    """
    comps = components if components is not None else quadratic_components(panel)
    if comps.group_means is None or comps.group_probs is None:
        raise ValueError("components must carry group means and probabilities")
    _, groups, matrix = panel._matched
    n, T = matrix.shape
    K = panel.K
    means = comps.group_means
    probs = comps.group_probs
    if np.any(probs <= 0.0):
        raise ValueError("group probabilities must all be positive")
    deviations = (matrix - means[groups]) / probs[groups][:, None]
    against_untreated = deviations @ means[1:].T / T  # (n, K)
    against_treated = deviations @ means[0] / T  # (n,)

    psi_H = np.zeros((n, K, K))
    psi_h = np.zeros((n, K))
    untreated_rows = np.flatnonzero(groups >= 1)
    donor = groups[untreated_rows] - 1
    psi_H[untreated_rows, donor, :] += against_untreated[untreated_rows]
    psi_H[untreated_rows, :, donor] += against_untreated[untreated_rows]
    psi_h[untreated_rows, donor] = against_treated[untreated_rows]
    treated_rows = groups == 0
    psi_h[treated_rows] = against_untreated[treated_rows]
    return InfluenceSet(psi_H=psi_H, psi_h=psi_h, n=n)


def variance_at(influence: InfluenceSet, w) -> np.ndarray:
    """Outer-product covariance of the per-unit gradient influences at ``w``.

    Returns the K x K matrix ``mean_i psi_i(w) psi_i(w)'`` with
    ``psi_i(w) = psi_H[i] @ w - psi_h[i]``. The result is symmetric positive
    semidefinite; it is the zero matrix for a degenerate (all-zero)
    influence set.
    """
    K = influence.psi_h.shape[1]
    wv = check_simplex_point(w, K)
    per_unit = influence.psi_H @ wv - influence.psi_h
    return per_unit.T @ per_unit / influence.n


def bootstrap_variance(panel: PanelData, w_hat, n_draws: int, seed: int) -> np.ndarray:
    """Bootstrap covariance of the scaled gradient estimate at ``w_hat``.

    Units are resampled with replacement within each group (group sizes held
    fixed), the group means and the gradient at ``w_hat`` are recomputed per
    draw, and the second-moment matrix of the scaled deviations from the
    original gradient is returned. Each draw uses an independent substream
    spawned from ``seed`` and draws are reduced in a fixed order, so the
    result is reproducible even if the draws were evaluated concurrently.
    """
    if n_draws < 100:
        raise ValueError(f"bootstrap needs at least 100 draws, got {n_draws}")
    wv = check_simplex_point(w_hat, panel.K)
    _, groups, matrix = panel._matched
    n, T = matrix.shape
    K = panel.K
    means = np.vstack([matrix[groups == j].mean(axis=0) for j in range(K + 1)])
    gradient = (means[1:] @ (means[1:].T @ wv)) / T - means[1:] @ means[0] / T
    rows_by_group = [np.flatnonzero(groups == j) for j in range(K + 1)]
    children = np.random.SeedSequence(seed).spawn(n_draws)
    accum = np.zeros((K, K))
    star = np.empty_like(means)
    for child in children:
        rng = np.random.default_rng(child)
        for j, rows in enumerate(rows_by_group):
            take = rows[rng.integers(0, rows.size, rows.size)]
            star[j] = matrix[take].mean(axis=0)
        grad_star = (star[1:] @ (star[1:].T @ wv)) / T - star[1:] @ star[0] / T
        delta = grad_star - gradient
        accum += np.outer(delta, delta)
    return n * accum / n_draws


def treatment_functional(
    panel: PanelData, post_period: int
) -> Tuple[Callable[[np.ndarray], float], Callable[[np.ndarray], float]]:
    """Treated-minus-synthetic outcome difference at a post period.

    Returns a pair ``(theta_hat, v_hat)``: ``theta_hat(w)`` is the treated
    group mean at ``post_period`` minus the ``w``-weighted untreated group
    means, and ``v_hat(w)`` the square root of the sample second moment of
    its per-unit influence function. Every unit must have an outcome at the
    post period.
    """
    labels, groups, _ = panel._matched
    K = panel.K
    n = labels.size
    at_post = panel.time == int(post_period)
    if not at_post.any():
        raise DataError(f"no observations at post period {post_period}")
    position = {u: i for i, u in enumerate(labels.tolist())}
    y_post = np.full(n, np.nan)
    for u, y in zip(panel.unit[at_post].tolist(), panel.outcome[at_post].tolist()):
        y_post[position[u]] = y
    if np.isnan(y_post).any():
        short = sorted(
            {int(groups[i]) for i in np.flatnonzero(np.isnan(y_post))}
        )
        raise DataError(
            f"groups {short} have units without an outcome at post period {post_period}"
        )
    sizes = np.bincount(groups, minlength=K + 1)
    mean_post = np.array([y_post[groups == j].mean() for j in range(K + 1)])
    probs = sizes / n
    scaled = (y_post - mean_post[groups]) / probs[groups]
    second_moment = np.zeros(K + 1)
    np.add.at(second_moment, groups, scaled * scaled)
    second_moment /= n

    treated_level = float(mean_post[0])
    untreated_levels = mean_post[1:].copy()
    treated_term = float(second_moment[0])
    untreated_terms = second_moment[1:].copy()

    def theta_hat(w) -> float:
        wv = check_simplex_point(w, K)
        return treated_level - float(untreated_levels @ wv)

    def v_hat(w) -> float:
        wv = check_simplex_point(w, K)
        return math.sqrt(treated_term + float((wv * wv) @ untreated_terms))

    return theta_hat, v_hat


def make_weight_model(
    components: QuadraticComponents,
    influence: Optional[InfluenceSet] = None,
    *,
    mode: str = "pointwise",
    v_fixed: Optional[np.ndarray] = None,
    n: Optional[int] = None,
    basis: Optional[OrthoBasis] = None,
) -> WeightModel:
    """Assemble the WeightModel consumed by the pointwise tests.

    ``f_hat(w)`` premultiplies the gradient ``H w - h`` by the basis
    transpose. In ``"pointwise"`` mode the covariance is the transformed
    plug-in covariance re-evaluated at each candidate (requires
    ``influence``); in ``"fixed"`` mode the K x K covariance ``v_fixed``
    (for example a bootstrap covariance at the estimated weights) is
    transformed once and reused for every candidate. Any quadratic objective
    can be routed through here by constructing ``QuadraticComponents`` and
    ``InfluenceSet`` from user-supplied arrays.
    """
    K = components.h.size
    if K < 2:
        raise ValueError("need at least two untreated groups for weights on a simplex")
    b = basis if basis is not None else build_basis(K)
    if b.K != K:
        raise ValueError(f"basis dimension {b.K} does not match K={K}")
    b2 = b.b2
    H = components.H
    h = components.h

    def f_hat(w: np.ndarray) -> np.ndarray:
        return b2.T @ (H @ w - h)

    if mode == "pointwise":
        if influence is None:
            raise ValueError("pointwise mode requires an InfluenceSet")
        if influence.psi_h.shape[1] != K:
            raise ValueError("influence dimension does not match components")
        size = influence.n

        def omega_hat(w: np.ndarray) -> np.ndarray:
            return b2.T @ variance_at(influence, w) @ b2

    elif mode == "fixed":
        if v_fixed is None:
            raise ValueError("fixed mode requires v_fixed")
        v = np.asarray(v_fixed, dtype=float)
        if v.shape != (K, K):
            raise ValueError(f"v_fixed must have shape {(K, K)}, got {v.shape}")
        fixed = SpdMatrix.from_matrix(b2.T @ v @ b2)
        if n is not None:
            size = n
        elif influence is not None:
            size = influence.n
        else:
            raise ValueError("fixed mode needs n (or an InfluenceSet to take it from)")

        def omega_hat(w: np.ndarray) -> np.ndarray:
            return fixed

    else:
        raise ValueError(f"mode must be 'pointwise' or 'fixed', got {mode!r}")

    return WeightModel(K=K, n=size, f_hat=f_hat, omega_hat=omega_hat, mode=mode, basis=b)
