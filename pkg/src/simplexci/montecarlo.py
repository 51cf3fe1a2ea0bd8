"""Monte Carlo harness for coverage studies of the weight confidence sets.

The data generating process draws a fixed matrix of group-mean paths once
(linear trends with alternating slopes plus a Gaussian level draw held fixed
across replications), sets the treated path to the chosen convex combination
of untreated paths, and then adds fresh unit-level Gaussian noise in every
replication. Counter-based generators seeded through spawned substreams make
each replication reproducible independently of execution order.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np

from .estimators import PanelData, influence_set, make_weight_model, quadratic_components
from .exceptions import ConvergenceError, IllConditionedError
from .inference import confidence_set, default_resolution, point_test, projection_interval

__all__ = ["McSpec", "CoverageReport", "generate_panel", "coverage_experiment"]

SeedLike = Union[int, np.random.SeedSequence]


@dataclass(frozen=True)
class McSpec:
    """Design of one coverage experiment.

    ``design`` selects the true weight: ``"interior"`` puts 0.2 on the first
    donor group and spreads the rest evenly, ``"boundary"`` splits the mass
    between the first two donor groups and zeroes the others. ``w0_override``
    replaces either choice with an explicit vector (useful for edge cases).
    """

    K: int = 3
    n_j: int = 100
    t0: int = 10
    design: str = "interior"
    reps: int = 1000
    seed: int = 0
    alpha: float = 0.05
    grid_n: Optional[int] = None
    w0_override: Optional[Tuple[float, ...]] = None

    def __post_init__(self) -> None:
        if self.K < 2:
            raise ValueError(f"K must be at least 2, got {self.K}")
        if self.n_j < 2:
            raise ValueError(f"group size must be at least 2, got {self.n_j}")
        if self.t0 < 1:
            raise ValueError(f"t0 must be at least 1, got {self.t0}")
        if self.design not in ("interior", "boundary"):
            raise ValueError(f"design must be 'interior' or 'boundary', got {self.design!r}")
        if self.reps < 1:
            raise ValueError(f"reps must be at least 1, got {self.reps}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie strictly in (0, 1), got {self.alpha}")

    @property
    def w0(self) -> np.ndarray:
        """The true weight vector implied by the design."""
        if self.w0_override is not None:
            w = np.asarray(self.w0_override, dtype=float)
            if w.size != self.K:
                raise ValueError(f"w0 override must have length {self.K}")
            return w
        w = np.zeros(self.K)
        if self.design == "interior":
            w[0] = 0.2
            w[1:] = 0.8 / (self.K - 1)
        else:
            w[0] = 0.5
            w[1] = 0.5
        return w


def _rng(seed: SeedLike) -> np.random.Generator:
    """Counter-based generator from an integer seed or a spawned substream."""
    if isinstance(seed, np.random.SeedSequence):
        sequence = seed
    else:
        sequence = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(sequence))


def generate_panel(spec: McSpec, eta_seed: SeedLike, rep_seed: SeedLike) -> PanelData:
    """One simulated panel.

    ``eta_seed`` drives the group-mean level draw that stays fixed across
    replications of an experiment; ``rep_seed`` drives the unit-level noise
    that is redrawn each replication. Identical seeds produce bit-identical
    panels.
    """
    K, T, size = spec.K, spec.t0, spec.n_j
    eta = _rng(eta_seed).standard_normal((K, T))
    trend = np.arange(1, T + 1) / T
    signs = (-1.0) ** np.arange(K)
    untreated = 0.5 + 0.5 * signs[:, None] * trend[None, :] + eta
    treated = spec.w0 @ untreated
    means = np.vstack([treated, untreated])  # (K+1, T)

    noise = _rng(rep_seed).standard_normal((K + 1, size, T))
    outcomes = means[:, None, :] + noise

    n_units = (K + 1) * size
    units = np.repeat(np.arange(n_units), T)
    groups = np.repeat(np.arange(K + 1), size * T)
    periods = np.tile(np.arange(1, T + 1), n_units)
    return PanelData.from_long(units, groups, periods, outcomes.reshape(-1), t_match=T)


@dataclass
class CoverageReport:
    """Aggregated results of a coverage experiment.

    ``coverage`` is the share of replications whose test at the true weight
    passed (replications that failed numerically count against coverage and
    are also reported in ``failures``). When the projection sweep ran,
    ``projection_coverage`` and ``mean_lengths`` hold per-coordinate results
    (lengths averaged over non-empty sets only), ``empty_rate`` the share of
    swept replications whose set had no members, and ``resolution`` the grid
    resolution used. ``timing_seconds`` is wall-clock time; it is excluded
    from serialized output by default so reruns are byte-identical.
    """

    K: int
    n_j: int
    t0: int
    design: str
    reps: int
    alpha: float
    seed: int
    w0: List[float]
    coverage: float
    failures: int
    resolution: Optional[int] = None
    projection_coverage: Optional[List[float]] = None
    mean_lengths: Optional[List[Optional[float]]] = None
    empty_rate: Optional[float] = None
    timing_seconds: float = 0.0

    def to_dict(self, include_timing: bool = False) -> dict:
        doc = {
            "K": self.K,
            "n_j": self.n_j,
            "t0": self.t0,
            "design": self.design,
            "reps": self.reps,
            "alpha": self.alpha,
            "seed": self.seed,
            "w0": list(self.w0),
            "coverage": self.coverage,
            "failures": self.failures,
        }
        if self.resolution is not None:
            doc["resolution"] = self.resolution
            doc["projection_coverage"] = list(self.projection_coverage or [])
            doc["mean_lengths"] = list(self.mean_lengths or [])
            doc["empty_rate"] = self.empty_rate
        if include_timing:
            doc["timing_seconds"] = self.timing_seconds
        return doc

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing=include_timing), indent=2, sort_keys=True)

    def to_text(self) -> str:
        """Plain-text table of the same numbers."""
        lines = [
            f"design={self.design} K={self.K} n_j={self.n_j} t0={self.t0} "
            f"alpha={self.alpha} reps={self.reps} seed={self.seed}",
            f"coverage of the weight vector: {self.coverage:.4f} (failures: {self.failures})",
        ]
        if self.resolution is not None:
            lines.append(f"projection intervals on the 1/{self.resolution} lattice:")
            lines.append("  coord   coverage   mean length")
            for j in range(self.K):
                cov = (self.projection_coverage or [float('nan')] * self.K)[j]
                length = (self.mean_lengths or [None] * self.K)[j]
                shown = "n/a" if length is None else f"{length:.4f}"
                lines.append(f"  {j + 1:<7d} {cov:<10.4f} {shown}")
            lines.append(f"empty-set rate: {self.empty_rate:.4f}")
        lines.append(f"elapsed: {self.timing_seconds:.2f}s")
        return "\n".join(lines)


def coverage_experiment(spec: McSpec, projection: bool = False) -> CoverageReport:
    """Run the replications of one design and aggregate coverage.

    Tests the true weight in every replication; with ``projection=True``
    additionally sweeps the lattice and records per-coordinate projection
    intervals. Numerical failures in single replications are counted, not
    fatal. The whole experiment is a deterministic function of ``spec``.
    """
    start = time.perf_counter()
    children = np.random.SeedSequence(spec.seed).spawn(spec.reps + 1)
    eta_seed = children[0]
    w0 = spec.w0
    resolution = spec.grid_n if spec.grid_n is not None else default_resolution(spec.K)

    covered = 0
    failures = 0
    swept = 0
    empties = 0
    proj_hits = np.zeros(spec.K)
    length_sums = np.zeros(spec.K)
    nonempty = 0

    for rep in range(spec.reps):
        panel = generate_panel(spec, eta_seed, children[rep + 1])
        comps = quadratic_components(panel)
        infl = influence_set(panel, comps)
        model = make_weight_model(comps, infl)
        try:
            outcome = point_test(model, w0, spec.alpha)
        except (IllConditionedError, ConvergenceError):
            failures += 1
            continue
        covered += int(outcome.member)
        if projection:
            cs = confidence_set(model, spec.alpha, resolution)
            swept += 1
            if not cs.member_mask.any():
                empties += 1
                continue
            nonempty += 1
            for j in range(spec.K):
                interval = projection_interval(cs, j)
                inside = interval.lower - 1e-12 <= w0[j] <= interval.upper + 1e-12
                proj_hits[j] += int(inside)
                length_sums[j] += interval.length

    report = CoverageReport(
        K=spec.K,
        n_j=spec.n_j,
        t0=spec.t0,
        design=spec.design,
        reps=spec.reps,
        alpha=spec.alpha,
        seed=spec.seed,
        w0=[float(x) for x in w0],
        coverage=covered / spec.reps,
        failures=failures,
        timing_seconds=time.perf_counter() - start,
    )
    if projection:
        report.resolution = resolution
        report.projection_coverage = [float(proj_hits[j] / swept) if swept else 0.0 for j in range(spec.K)]
        report.mean_lengths = [
            (float(length_sums[j] / nonempty) if nonempty else None) for j in range(spec.K)
        ]
        report.empty_rate = float(empties / swept) if swept else 0.0
        report.timing_seconds = time.perf_counter() - start
    return report
