"""Geometry of the probability simplex.

This module provides the deterministic orthonormal basis of the orthogonal
complement of the ones vector, weighted projections onto the polyhedral cone
attached to a simplex point (and onto its polar and the spans of its faces),
and an active-set solver for quadratic programs over the simplex.

All functions are pure and the returned containers are read-only, so results
can be shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional, Union

import numpy as np

from .exceptions import ConvergenceError, IllConditionedError

__all__ = [
    "OrthoBasis",
    "SpdMatrix",
    "Tolerances",
    "ConeProjection",
    "build_basis",
    "check_simplex_point",
    "project_cone",
    "project_polar",
    "project_linear_span",
    "solve_simplex_qp",
]

_ORTHO_TOL = 1e-12
_DEGENERACY_TOL = 1e-10


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances shared by the projection and QP routines.

    Attributes
    ----------
    support : float
        Weight entries at or below this value count as zero when forming the
        index set of vanishing coordinates (and when validating that a point
        lies on the simplex).
    zero : float
        Relative threshold for counting zeros of the mapped residual; the
        effective cutoff is ``zero * (1 + max_abs_entry)``.
    max_iter_factor : int
        Active-set iteration cap, expressed as a multiple of the dimension.
    """

    support: float = 1e-10
    zero: float = 1e-8
    max_iter_factor: int = 50


@dataclass(frozen=True)
class OrthoBasis:
    """K x (K-1) matrix whose orthonormal columns span the orthogonal
    complement of the ones vector.

    Validated at construction: columns must be orthonormal and orthogonal to
    the ones vector within 1e-12. The stored array is read-only.
    """

    K: int
    b2: np.ndarray

    def __post_init__(self) -> None:
        if self.K < 2:
            raise ValueError(f"dimension K must be at least 2, got {self.K}")
        b2 = np.array(self.b2, dtype=float)
        if b2.shape != (self.K, self.K - 1):
            raise ValueError(
                f"basis must have shape {(self.K, self.K - 1)}, got {b2.shape}"
            )
        gram = b2.T @ b2
        if np.max(np.abs(gram - np.eye(self.K - 1))) > _ORTHO_TOL:
            raise ValueError("basis columns are not orthonormal within 1e-12")
        if np.max(np.abs(b2.sum(axis=0))) > _ORTHO_TOL:
            raise ValueError("basis columns are not orthogonal to the ones vector")
        b2.setflags(write=False)
        object.__setattr__(self, "b2", b2)


@lru_cache(maxsize=64)
def build_basis(K: int) -> OrthoBasis:
    """Deterministic orthonormal basis orthogonal to the ones vector.

    Uses the Helmert construction: 0-based column ``j`` carries
    ``1/sqrt((j+1)(j+2))`` in its first ``j+1`` entries,
    ``-(j+1)/sqrt((j+1)(j+2))`` in entry ``j+1`` and zeros below. The result
    is reproducible bit for bit across runs and platforms; statistics
    computed downstream are invariant to which valid basis is used.

    Parameters
    ----------
    K : int
        Ambient dimension, at least 2.

    Returns
    -------
    OrthoBasis
    """
    if K < 2:
        raise ValueError(f"dimension K must be at least 2, got {K}")
    b2 = np.zeros((K, K - 1))
    for j in range(1, K):
        c = 1.0 / math.sqrt(j * (j + 1))
        b2[:j, j - 1] = c
        b2[j, j - 1] = -j * c
    return OrthoBasis(K, b2)


@dataclass(frozen=True)
class SpdMatrix:
    """Symmetric positive definite matrix validated at construction."""

    dim: int
    entries: np.ndarray

    def __post_init__(self) -> None:
        e = np.array(self.entries, dtype=float)
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @classmethod
    def from_matrix(
        cls,
        matrix: np.ndarray,
        *,
        sym_tol: float = 1e-10,
        cond_cap: float = 1e12,
    ) -> "SpdMatrix":
        """Validate symmetry, positive eigenvalues and the condition number.

        Raises ``ValueError`` for malformed input (shape, non-finite entries,
        asymmetry) and ``IllConditionedError`` when the matrix is not
        positive definite or its condition number exceeds ``cond_cap``.
        """
        a = np.asarray(matrix, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix has non-finite entries")
        scale = max(1.0, float(np.max(np.abs(a))))
        if float(np.max(np.abs(a - a.T))) > sym_tol * scale:
            raise ValueError(f"matrix is not symmetric within {sym_tol}")
        sym = 0.5 * (a + a.T)
        eigs = np.linalg.eigvalsh(sym)
        if eigs[0] <= 0.0:
            raise IllConditionedError(
                f"matrix is not positive definite (min eigenvalue {eigs[0]:.6e})"
            )
        cond = eigs[-1] / eigs[0]
        if cond > cond_cap:
            raise IllConditionedError(
                f"condition number {cond:.6e} exceeds the cap {cond_cap:.1e}"
            )
        return cls(dim=a.shape[0], entries=sym)


@dataclass(frozen=True)
class ConeProjection:
    """Result of projecting onto the polyhedral cone at a simplex point.

    Attributes
    ----------
    lambda_hat : ndarray, shape (K,)
        Nonnegative multipliers; zero on every coordinate where the weight
        is positive.
    residual : ndarray, shape (K-1,)
        Input minus the cone projection, i.e. the polar component in the
        weighted Moreau decomposition.
    gradient_image : ndarray, shape (K,)
        The residual mapped back through ``B2 omega^{-1}``; its sign pattern
        certifies the KKT conditions and its zeros identify the face hit.
    active_set : tuple of int
        Coordinates with strictly positive multipliers.
    zeros : int
        Number of entries of ``gradient_image`` within the zero threshold.
    objective : float
        Squared omega-weighted norm of the residual.
    degenerate : bool
        True when some support multiplier is positive but below 1e-10.
    """

    lambda_hat: np.ndarray
    residual: np.ndarray
    gradient_image: np.ndarray
    active_set: tuple
    zeros: int
    objective: float
    degenerate: bool


def check_simplex_point(
    w: Iterable[float], K: Optional[int] = None, tol: float = 1e-10
) -> np.ndarray:
    """Validate that ``w`` lies on the probability simplex and return it.

    Entries may dip below zero by at most ``tol`` and the total must equal
    one within ``tol``.
    """
    arr = np.asarray(w, dtype=float).ravel()
    if K is not None and arr.size != K:
        raise ValueError(f"expected a weight vector of length {K}, got {arr.size}")
    if arr.size < 2:
        raise ValueError("weight vectors need at least two coordinates")
    if not np.all(np.isfinite(arr)):
        raise ValueError("weight vector has non-finite entries")
    if float(arr.min()) < -tol or abs(float(arr.sum()) - 1.0) > tol:
        raise ValueError(f"{arr.tolist()} is not on the simplex within {tol}")
    return arr


def _coerce_omega(omega: Union[SpdMatrix, np.ndarray], dim: int) -> np.ndarray:
    """Accept either an SpdMatrix or a plain symmetric array of size dim."""
    if isinstance(omega, SpdMatrix):
        entries = omega.entries
    else:
        entries = np.asarray(omega, dtype=float)
    if entries.shape != (dim, dim):
        raise ValueError(f"covariance must have shape {(dim, dim)}, got {entries.shape}")
    if not np.all(np.isfinite(entries)):
        raise ValueError("covariance has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(entries))))
    if float(np.max(np.abs(entries - entries.T))) > 1e-8 * scale:
        raise ValueError("covariance matrix is not symmetric")
    return entries


def _nnls(design: np.ndarray, target: np.ndarray, max_iter: int) -> np.ndarray:
    """Lawson-Hanson nonnegative least squares.

    Solves ``min ||design @ x - target||_2`` subject to ``x >= 0`` by the
    classical active-set iteration. The passive-set least-squares solves use
    ``lstsq``; for the cones handled here every column subset has full rank,
    so the inner solutions are unique.
    """
    m, n = design.shape
    x = np.zeros(n)
    if n == 0:
        return x
    passive = np.zeros(n, dtype=bool)
    grad = design.T @ target
    dual_tol = 1e-11 * max(1.0, float(np.max(np.abs(grad))))
    iters = 0
    while True:
        candidates = ~passive
        if not candidates.any():
            break
        masked = np.where(candidates, grad, -np.inf)
        enter = int(np.argmax(masked))
        if masked[enter] <= dual_tol:
            break
        passive[enter] = True
        while True:
            iters += 1
            if iters > max_iter:
                raise ConvergenceError(
                    f"nonnegative least squares exceeded {max_iter} iterations"
                )
            z = np.zeros(n)
            z[passive] = np.linalg.lstsq(design[:, passive], target, rcond=None)[0]
            if float(z[passive].min()) > 0.0:
                x = z
                break
            negative = passive & (z <= 0.0)
            movable = negative & ((x - z) > 0.0)
            if movable.any():
                alpha = float((x[movable] / (x[movable] - z[movable])).min())
            else:
                alpha = 0.0
            x = x + alpha * (z - x)
            hit = passive & negative & (x <= 1e-12 * max(1.0, float(np.max(x))))
            x[hit] = 0.0
            passive[hit] = False
            x[~passive] = 0.0
        grad = design.T @ (target - design @ x)
    return x


def project_cone(
    f_hat: Iterable[float],
    w: Iterable[float],
    omega: Union[SpdMatrix, np.ndarray],
    basis: Optional[OrthoBasis] = None,
    tol: Optional[Tolerances] = None,
) -> ConeProjection:
    """Weighted projection of ``f_hat`` onto the cone attached to ``w``.

    The cone is generated by the basis rows indexed by the vanishing
    coordinates of ``w``; the projection minimizes
    ``(f - B2' lam)' omega^{-1} (f - B2' lam)`` over multipliers ``lam >= 0``
    with ``w' lam = 0``. Because both ``w`` and ``lam`` are nonnegative, the
    equality constraint pins ``lam`` to zero wherever ``w`` is positive, so
    only the coordinates where ``w`` vanishes enter the active-set solve.
    A Cholesky factor of ``omega`` whitens the problem into an ordinary
    nonnegative least squares.

    Parameters
    ----------
    f_hat : array_like, shape (K-1,)
        Vector to project, expressed in basis coordinates.
    w : array_like, shape (K,)
        Point on the simplex (validated within ``tol.support``).
    omega : SpdMatrix or array_like, shape (K-1, K-1)
        Positive definite weighting matrix.
    basis : OrthoBasis, optional
        Defaults to the Helmert basis of matching dimension.
    tol : Tolerances, optional

    Returns
    -------
    ConeProjection

    Raises
    ------
    IllConditionedError
        When ``omega`` is not positive definite.
    ConvergenceError
        When the active-set iteration exceeds ``tol.max_iter_factor * K``
        iterations.
    """
    tol = tol if tol is not None else Tolerances()
    f = np.asarray(f_hat, dtype=float).ravel()
    K = f.size + 1
    if basis is None:
        basis = build_basis(K)
    elif basis.K != K:
        raise ValueError(f"basis dimension {basis.K} does not match input length {f.size}")
    wv = check_simplex_point(w, K, tol.support)
    entries = _coerce_omega(omega, K - 1)
    try:
        chol = np.linalg.cholesky(entries)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError("covariance matrix is not positive definite") from exc

    vanishing = np.flatnonzero(wv <= tol.support)
    lam = np.zeros(K)
    if vanishing.size:
        generators = basis.b2[vanishing].T  # columns are basis rows on the zero set
        design = np.linalg.solve(chol, generators)
        target = np.linalg.solve(chol, f)
        coef = _nnls(design, target, max_iter=tol.max_iter_factor * K)
        lam[vanishing] = coef
        residual = f - generators @ coef
    else:
        residual = f.copy()

    white = np.linalg.solve(chol, residual)
    objective = float(white @ white)
    gradient_image = basis.b2 @ np.linalg.solve(chol.T, white)
    cutoff = tol.zero * (1.0 + float(np.max(np.abs(gradient_image))))
    zeros = int(np.count_nonzero(np.abs(gradient_image) <= cutoff))
    support = np.flatnonzero(lam > 0.0)
    degenerate = bool(support.size and float(lam[support].min()) < _DEGENERACY_TOL)
    lam.setflags(write=False)
    residual.setflags(write=False)
    gradient_image.setflags(write=False)
    return ConeProjection(
        lambda_hat=lam,
        residual=residual,
        gradient_image=gradient_image,
        active_set=tuple(int(j) for j in support),
        zeros=zeros,
        objective=objective,
        degenerate=degenerate,
    )


def project_polar(
    y: Iterable[float],
    w: Iterable[float],
    omega: Union[SpdMatrix, np.ndarray],
    basis: Optional[OrthoBasis] = None,
    tol: Optional[Tolerances] = None,
) -> np.ndarray:
    """Weighted projection of ``y`` onto the polar of the cone at ``w``.

    Returned as ``y`` minus the cone projection; together the two pieces form
    the Moreau decomposition of ``y`` in the omega-weighted inner product.
    """
    return project_cone(y, w, omega, basis=basis, tol=tol).residual


def project_linear_span(
    y: Iterable[float],
    subset: Iterable[int],
    omega: Union[SpdMatrix, np.ndarray],
    basis: Optional[OrthoBasis] = None,
) -> np.ndarray:
    """Weighted projection of ``y`` onto the span of a polar face.

    The span is ``{x : [B2 omega^{-1} x]_j = 0 for j in subset}`` with
    ``subset`` holding 0-based row indices of the basis. An empty subset
    returns ``y`` unchanged. Any subset of K-1 or more rows pins the span to
    the origin (the selected basis rows have full rank), so the zero vector
    is returned exactly.
    """
    yv = np.asarray(y, dtype=float).ravel()
    K = yv.size + 1
    if basis is None:
        basis = build_basis(K)
    elif basis.K != K:
        raise ValueError(f"basis dimension {basis.K} does not match input length {yv.size}")
    idx = np.unique(np.asarray(list(subset), dtype=int)) if subset is not None else np.array([], dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= K):
        raise ValueError(f"subset indices must lie in [0, {K - 1}]")
    if idx.size == 0:
        return yv.copy()
    if idx.size >= K - 1:
        return np.zeros(K - 1)
    entries = _coerce_omega(omega, K - 1)
    rows = basis.b2[idx]
    try:
        weighted = np.linalg.solve(entries, rows.T)  # omega^{-1} rows'
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError("covariance matrix is singular") from exc
    gram = rows @ weighted
    coef = np.linalg.solve(gram, weighted.T @ yv)
    return yv - rows.T @ coef


def solve_simplex_qp(
    hessian: np.ndarray,
    linear: Iterable[float],
    tol: Optional[Tolerances] = None,
    max_iter: Optional[int] = None,
) -> np.ndarray:
    """Minimize ``0.5 w'Hw - w'h`` over the probability simplex.

    A primal active-set iteration keeps the sum-to-one equality in every
    subproblem and toggles the nonnegativity constraints. Semidefinite
    hessians are lifted by a ridge of ``1e-11 * scale`` so every face
    subproblem is strictly convex; among tied minimizers this returns the
    one closest to uniform, deterministically.

    Parameters
    ----------
    hessian : array_like, shape (K, K)
        Symmetric positive semidefinite matrix.
    linear : array_like, shape (K,)
        Linear coefficient vector.
    tol : Tolerances, optional
    max_iter : int, optional
        Defaults to ``tol.max_iter_factor * K``.

    Returns
    -------
    ndarray, shape (K,)
        The optimal weights, clipped to the simplex.

    Raises
    ------
    ConvergenceError
        When the iteration cap is exceeded.
    """
    tol = tol if tol is not None else Tolerances()
    H = np.asarray(hessian, dtype=float)
    h = np.asarray(linear, dtype=float).ravel()
    K = h.size
    if K < 2:
        raise ValueError("the simplex QP needs at least two coordinates")
    if H.shape != (K, K):
        raise ValueError(f"hessian must have shape {(K, K)}, got {H.shape}")
    if not (np.all(np.isfinite(H)) and np.all(np.isfinite(h))):
        raise ValueError("QP inputs have non-finite entries")
    scale = max(1.0, float(np.max(np.abs(H))))
    if float(np.max(np.abs(H - H.T))) > 1e-8 * scale:
        raise ValueError("hessian is not symmetric")
    H = 0.5 * (H + H.T)
    smallest = float(np.linalg.eigvalsh(H)[0])
    if smallest < -1e-8 * scale:
        raise ValueError("hessian is not positive semidefinite")
    # a singular hessian leaves faces without stationary points; a ridge far
    # below every tolerance makes each subproblem strictly convex while
    # moving the objective by at most ridge/2
    ridge = 1e-11 * scale
    if smallest < ridge:
        H = H + (ridge - min(smallest, 0.0)) * np.eye(K)
    cap = max_iter if max_iter is not None else tol.max_iter_factor * K
    dual_tol = 1e-10 * (1.0 + float(np.max(np.abs(h))) + scale)

    w = np.full(K, 1.0 / K)
    active = np.zeros(K, dtype=bool)
    for _ in range(cap):
        free = ~active
        nf = int(free.sum())
        kkt = np.zeros((nf + 1, nf + 1))
        kkt[:nf, :nf] = H[np.ix_(free, free)]
        kkt[:nf, nf] = 1.0
        kkt[nf, :nf] = 1.0
        rhs = np.concatenate([h[free], [1.0]])
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        cand = sol[:nf]
        nu = float(sol[nf])
        if float(cand.min()) >= -1e-11:
            w_new = np.zeros(K)
            w_new[free] = np.clip(cand, 0.0, None)
            if active.any():
                grad = H @ w_new - h
                mult = grad[active] + nu
                worst = int(np.argmin(mult))
                if float(mult[worst]) < -dual_tol:
                    release = np.flatnonzero(active)[worst]
                    active[release] = False
                    w = w_new
                    continue
            w_new /= w_new.sum()
            return w_new
        step = np.zeros(K)
        step[free] = cand - w[free]
        shrinking = free & (step < -1e-15)
        ratios = w[shrinking] / -step[shrinking]
        alpha = min(1.0, float(ratios.min()))
        w = w + alpha * step
        hit = shrinking & (w <= 1e-12)
        w[hit] = 0.0
        active |= hit
    raise ConvergenceError(f"simplex QP exceeded {cap} active-set iterations")
