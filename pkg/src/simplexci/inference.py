"""Pointwise tests for candidate weights, confidence sets over simplex
lattices, and the projection and Bonferroni intervals derived from them.

The test at a point ``w`` projects the transformed gradient estimate onto
the polyhedral cone attached to ``w`` in the inverse-covariance norm, scales
the squared residual by the sample size, and compares it with a chi-square
quantile whose degrees of freedom adapt to the face of the cone hit by the
projection. Sweeping a lattice of the simplex and keeping the points that
pass yields a confidence set that is valid whether or not the true weight
sits on the boundary.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .distributions import chi2_quantile, normal_quantile
from .exceptions import ConvergenceError, IllConditionedError
from .geometry import (
    OrthoBasis,
    SpdMatrix,
    Tolerances,
    build_basis,
    check_simplex_point,
    project_cone,
)

__all__ = [
    "WeightModel",
    "PointTest",
    "ConfidenceSet",
    "Interval",
    "default_resolution",
    "simplex_grid",
    "point_test",
    "confidence_set",
    "projection_interval",
    "bonferroni_interval",
]

_GRID_CAP = 5_000_000


@dataclass
class WeightModel:
    """Inputs of the pointwise test, bundled.

    ``f_hat`` maps a weight vector to the transformed gradient estimate (a
    ``K-1`` vector in basis coordinates) and ``omega_hat`` to its covariance.
    In ``"pointwise"`` mode the covariance is re-estimated at every candidate
    weight; in ``"fixed"`` mode ``omega_hat`` ignores its argument and returns
    one matrix for all candidates (for example, a bootstrap covariance
    evaluated at the estimated weights). ``n`` is the sample size that scales
    the test statistic.
    """

    K: int
    n: int
    f_hat: Callable[[np.ndarray], np.ndarray]
    omega_hat: Callable[[np.ndarray], np.ndarray]
    mode: str = "pointwise"
    basis: Optional[OrthoBasis] = None

    def __post_init__(self) -> None:
        if self.K < 2:
            raise ValueError(f"K must be at least 2, got {self.K}")
        if self.n < 1:
            raise ValueError(f"sample size must be positive, got {self.n}")
        if self.mode not in ("pointwise", "fixed"):
            raise ValueError(f"mode must be 'pointwise' or 'fixed', got {self.mode!r}")
        if self.basis is None:
            self.basis = build_basis(self.K)
        elif self.basis.K != self.K:
            raise ValueError("basis dimension does not match K")


@dataclass(frozen=True)
class PointTest:
    """Outcome of testing a single candidate weight.

    ``statistic`` is the scaled squared projection residual, ``zeros`` the
    count of vanishing entries of the mapped residual, ``dof`` the adaptive
    chi-square degrees of freedom ``max(K - 1 - zeros, 1)``, and ``member``
    records whether the statistic is at most the critical value. ``error``
    is set (and ``member`` is False) when the point was skipped for a
    numerical reason during a sweep.
    """

    w: np.ndarray
    statistic: float
    zeros: int
    dof: int
    critical: float
    member: bool
    error: Optional[str] = None


@dataclass
class ConfidenceSet:
    """A simplex lattice together with one test record per point."""

    alpha: float
    grid: np.ndarray
    records: List[PointTest]
    resolution: int

    @property
    def member_mask(self) -> np.ndarray:
        return np.fromiter((r.member for r in self.records), dtype=bool, count=len(self.records))

    def member_points(self) -> np.ndarray:
        """Grid rows whose test passed."""
        return self.grid[self.member_mask]


@dataclass(frozen=True)
class Interval:
    """Closed interval, possibly empty (lower and upper are NaN when empty)."""

    lower: float
    upper: float
    empty: bool = False

    def __post_init__(self) -> None:
        if not self.empty and not self.lower <= self.upper:
            raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")

    @classmethod
    def empty_interval(cls) -> "Interval":
        return cls(float("nan"), float("nan"), True)

    @property
    def length(self) -> float:
        return 0.0 if self.empty else self.upper - self.lower


def default_resolution(K: int) -> int:
    """Default lattice resolution: 100 for K <= 3, 40 for K <= 5, 20 for
    K <= 7, 10 beyond."""
    if K <= 3:
        return 100
    if K <= 5:
        return 40
    if K <= 7:
        return 20
    return 10


def simplex_grid(K: int, resolution: int, max_points: int = _GRID_CAP) -> np.ndarray:
    """Lattice of simplex points with coordinates in multiples of 1/resolution.

    Rows enumerate all length-K compositions of ``resolution`` divided by
    ``resolution``, in ascending lexicographic order, so the output is
    deterministic. The row count is ``comb(resolution + K - 1, K - 1)``;
    resolutions whose lattice would exceed ``max_points`` are rejected.
    """
    if K < 2:
        raise ValueError(f"K must be at least 2, got {K}")
    if resolution < 1:
        raise ValueError(f"resolution must be at least 1, got {resolution}")
    size = math.comb(resolution + K - 1, K - 1)
    if size > max_points:
        raise ValueError(
            f"lattice would hold {size} points, above the cap {max_points}; "
            "use a coarser resolution"
        )
    bars = itertools.combinations(range(resolution + K - 1), K - 1)
    flat = np.fromiter(
        (pos for combo in bars for pos in combo), dtype=np.int64, count=size * (K - 1)
    ).reshape(size, K - 1)
    padded = np.column_stack(
        [
            np.full(size, -1, dtype=np.int64),
            flat,
            np.full(size, resolution + K - 1, dtype=np.int64),
        ]
    )
    counts = np.diff(padded, axis=1) - 1
    return counts / float(resolution)


def point_test(
    model: WeightModel,
    w: np.ndarray,
    alpha: float,
    *,
    tol: Optional[Tolerances] = None,
    cond_cap: float = 1e12,
) -> PointTest:
    """Test whether the candidate weight ``w`` is compatible with the data.

    Runs the three steps at ``w``: project the transformed gradient estimate
    onto the cone in the inverse-covariance norm, count the zeros of the
    mapped residual, and compare ``n`` times the squared residual norm with
    the chi-square quantile at ``1 - alpha`` whose degrees of freedom are
    ``max(K - 1 - zeros, 1)``.

    Parameters
    ----------
    model : WeightModel
    w : array_like, shape (K,)
        Candidate weight on the simplex.
    alpha : float
        Test level in (0, 1).
    tol : Tolerances, optional
    cond_cap : float
        Condition-number cap for the covariance matrix; violations raise
        ``IllConditionedError`` naming the offending point.

    Returns
    -------
    PointTest
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie strictly in (0, 1), got {alpha}")
    tol = tol if tol is not None else Tolerances()
    wv = check_simplex_point(w, model.K, tol.support)
    f = np.asarray(model.f_hat(wv), dtype=float).ravel()
    if f.size != model.K - 1:
        raise ValueError(f"f_hat must return {model.K - 1} coordinates, got {f.size}")
    raw = model.omega_hat(wv)
    if isinstance(raw, SpdMatrix):
        omega = raw
    else:
        try:
            omega = SpdMatrix.from_matrix(raw, cond_cap=cond_cap)
        except (ValueError, IllConditionedError) as exc:
            raise IllConditionedError(
                f"covariance matrix at w={wv.tolist()} failed validation: {exc}"
            ) from exc
    proj = project_cone(f, wv, omega, basis=model.basis, tol=tol)
    statistic = model.n * proj.objective
    dof = max(model.K - 1 - proj.zeros, 1)
    critical = chi2_quantile(1.0 - alpha, dof)
    wv = wv.copy()
    wv.setflags(write=False)
    return PointTest(
        w=wv,
        statistic=statistic,
        zeros=proj.zeros,
        dof=dof,
        critical=critical,
        member=bool(statistic <= critical),
    )


def confidence_set(
    model: WeightModel,
    alpha: float,
    resolution: Optional[int] = None,
    *,
    strict: bool = False,
    tol: Optional[Tolerances] = None,
    cond_cap: float = 1e12,
    max_points: int = _GRID_CAP,
) -> ConfidenceSet:
    """Sweep a simplex lattice and keep the points whose test passes.

    Numerical failures at individual points (an ill-conditioned covariance,
    a projection that does not converge) are recorded on that point's
    ``PointTest`` with ``member=False`` and surfaced as a warning; with
    ``strict=True`` they raise instead.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie strictly in (0, 1), got {alpha}")
    res = resolution if resolution is not None else default_resolution(model.K)
    grid = simplex_grid(model.K, res, max_points=max_points)
    records: List[PointTest] = []
    for row in grid:
        try:
            records.append(point_test(model, row, alpha, tol=tol, cond_cap=cond_cap))
        except (IllConditionedError, ConvergenceError) as exc:
            if strict:
                raise
            warnings.warn(
                f"skipping grid point {row.tolist()}: {exc}", RuntimeWarning, stacklevel=2
            )
            frozen = row.copy()
            frozen.setflags(write=False)
            records.append(
                PointTest(
                    w=frozen,
                    statistic=float("inf"),
                    zeros=0,
                    dof=model.K - 1,
                    critical=float("nan"),
                    member=False,
                    error=str(exc),
                )
            )
    return ConfidenceSet(alpha=alpha, grid=grid, records=records, resolution=res)


def projection_interval(cs: ConfidenceSet, coord: int) -> Interval:
    """Range of one weight coordinate over the members of a confidence set.

    Returns the empty interval when no grid point is a member.
    """
    K = cs.grid.shape[1]
    if not 0 <= coord < K:
        raise ValueError(f"coordinate must lie in [0, {K - 1}], got {coord}")
    mask = cs.member_mask
    if not mask.any():
        return Interval.empty_interval()
    values = cs.grid[mask, coord]
    return Interval(float(values.min()), float(values.max()))


def bonferroni_interval(
    cs: ConfidenceSet,
    theta_hat: Callable[[np.ndarray], float],
    v_hat: Callable[[np.ndarray], float],
    n: int,
    alpha: float = 0.05,
    kappa: float = 0.005,
) -> Interval:
    """Two-step interval for a scalar functional of the weights.

    Splits the error budget: a share ``kappa`` goes to the weight confidence
    set (which must have been built at level ``1 - kappa``) and the rest to a
    normal interval for the functional at each member point. The result is
    the union of the pointwise intervals
    ``theta_hat(w) +/- z * v_hat(w) / sqrt(n)`` over member points ``w``,
    with ``z`` the standard normal quantile at ``1 - (alpha - kappa) / 2``.

    Returns the empty interval when the confidence set has no members.
    """
    if not 0.0 < kappa < alpha < 1.0:
        raise ValueError(f"need 0 < kappa < alpha < 1, got kappa={kappa}, alpha={alpha}")
    if n < 1:
        raise ValueError(f"sample size must be positive, got {n}")
    if abs(cs.alpha - kappa) > 1e-12:
        raise ValueError(
            f"confidence set was built at level {1 - cs.alpha}, expected {1 - kappa}"
        )
    members = cs.member_points()
    if members.shape[0] == 0:
        return Interval.empty_interval()
    z = normal_quantile(1.0 - (alpha - kappa) / 2.0)
    root_n = math.sqrt(n)
    lower = math.inf
    upper = -math.inf
    for w in members:
        theta = float(theta_hat(w))
        spread = float(v_hat(w))
        if not spread > 0.0:
            raise ValueError(f"v_hat must be positive, got {spread} at w={w.tolist()}")
        half = z * spread / root_n
        lower = min(lower, theta - half)
        upper = max(upper, theta + half)
    return Interval(lower, upper)
