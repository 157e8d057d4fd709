"""User-experience cost metric and (alpha, beta) tuning.

UXCost multiplies the summed per-model deadline-violation rates by the summed
per-model normalized energies over a window, so both halves must stay low at
once. A derivative-free finite-difference search tunes the score weights
offline, and a probing state machine does it online one window at a time.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

from .sim import RunLog

log = logging.getLogger(__name__)

PARAM_LO = 0.0
PARAM_HI = 2.0

Point = tuple[float, float]

# default multi-start set for offline tuning: the center plus the corners that
# emphasize neither term, only starvation, and only energy
DEFAULT_SEARCH_STARTS: tuple[Point, ...] = (
    (1.0, 1.0), (0.0, 0.0), (2.0, 0.0), (0.0, 2.0))


@dataclass(frozen=True)
class ModelWindowStats:
    total_frames: int
    violated_frames: int
    rate_dlv: float
    energy_mj: float
    norm_energy: float


@dataclass(frozen=True)
class UXCostReport:
    window_start: float
    window_end: float
    per_model: Mapping[str, ModelWindowStats]
    overall_rate: float
    overall_energy: float
    uxcost: Optional[float]  # None when no frame had its deadline in the window

    @property
    def has_signal(self) -> bool:
        return self.uxcost is not None


def compute_uxcost(runlog: RunLog, worst_case_energy: Mapping[str, float],
                   window_start: float = 0.0,
                   window_end: Optional[float] = None) -> UXCostReport:
    """Score a run window.

    A frame belongs to the window when its deadline falls inside it, which makes
    every verdict decidable at the window edge: dropped frames and frames not
    completed by then count as violations. Per model, the violation rate is
    violated/total, with a zero-violation window scored as 1/(2*total) so a
    model that never misses still contributes a nonzero, frame-count-aware
    term. Energy is everything charged to the model inside the window,
    including partial work on dropped frames, normalized by frames times the
    model's worst-case full-network energy. Models without frames in the window
    are left out of both sums; a window with no frames at all yields the
    distinguished no-signal report.
    """
    end = runlog.duration_ms if window_end is None else window_end
    totals: dict[str, int] = {}
    violated: dict[str, int] = {}
    for f in runlog.frames:
        if not (window_start <= f.deadline < end):
            continue
        totals[f.model_id] = totals.get(f.model_id, 0) + 1
        if f.dropped or f.completion is None or f.completion > f.deadline:
            violated[f.model_id] = violated.get(f.model_id, 0) + 1
    energy: dict[str, float] = {}
    for d in runlog.decisions:
        if window_start <= d.time < end:
            energy[d.model_id] = energy.get(d.model_id, 0.0) + d.energy_mj + d.cswitch_mj
    per_model: dict[str, ModelWindowStats] = {}
    overall_rate = 0.0
    overall_energy = 0.0
    for model_id in sorted(totals):
        n = totals[model_id]
        v = violated.get(model_id, 0)
        rate = (v / n) if v > 0 else 1.0 / (2.0 * n)
        e = energy.get(model_id, 0.0)
        norm = e / (n * worst_case_energy[model_id])
        per_model[model_id] = ModelWindowStats(
            total_frames=n, violated_frames=v, rate_dlv=rate, energy_mj=e, norm_energy=norm)
        overall_rate += rate
        overall_energy += norm
    if not per_model:
        return UXCostReport(window_start, end, {}, 0.0, 0.0, None)
    return UXCostReport(window_start, end, per_model, overall_rate, overall_energy,
                        overall_rate * overall_energy)


# ---------------------------------------------------------------------------
# offline finite-difference search


@dataclass(frozen=True)
class SearchConfig:
    initial_radius: float = 0.5
    radius_decay: float = 0.5
    radius_threshold: float = 0.05
    eval_window_s: float = 1.0     # simulated seconds per candidate evaluation
    bounds: tuple[float, float] = (PARAM_LO, PARAM_HI)

    def __post_init__(self):
        if not (0 < self.radius_decay < 1):
            raise ValueError("radius_decay must be in (0, 1)")
        if self.initial_radius <= 0 or self.radius_threshold <= 0:
            raise ValueError("radii must be > 0")


@dataclass(frozen=True)
class SearchIteration:
    incumbent: Point
    incumbent_value: float
    radius: float
    best_point: Point
    best_value: float
    evaluations: int  # cumulative evaluator calls after this iteration


@dataclass(frozen=True)
class SearchResult:
    best_point: Point
    best_value: float
    evaluations: int
    trace: tuple[SearchIteration, ...]


def _clip(p: Point, bounds: tuple[float, float]) -> Point:
    lo, hi = bounds
    return (min(hi, max(lo, p[0])), min(hi, max(lo, p[1])))


def _ring(center: Point, radius: float, bounds: tuple[float, float]) -> list[Point]:
    """Four axis-aligned neighbors at the radius plus four at twice the radius."""
    a, b = center
    pts = []
    for r in (radius, 2.0 * radius):
        pts.extend([(a + r, b), (a - r, b), (a, b + r), (a, b - r)])
    return [_clip(p, bounds) for p in pts]


def finite_difference_search(evaluator: Callable[[float, float], float], start: Point,
                             config: Optional[SearchConfig] = None) -> SearchResult:
    """Minimize the evaluator over the bounded parameter square.

    Each iteration evaluates the incumbent and an axis-aligned ring of eight
    samples. If the incumbent is still the minimum, only the radius shrinks.
    Otherwise the two lowest samples give a finite-difference direction and
    the next incumbent steps one radius from the runner-up toward the best
    sample; when the pair is collinear on an axis one radius apart this lands
    exactly on the best sample, otherwise it interpolates between them. The
    radius decays every iteration and the search stops once it falls below
    the threshold, returning the best point ever evaluated. Repeated points
    are memoized, so clipped duplicates never cost extra evaluator calls.
    """
    cfg = config if config is not None else SearchConfig()
    cache: dict[Point, float] = {}
    calls = 0

    def evaluate(p: Point) -> float:
        nonlocal calls
        if p not in cache:
            cache[p] = evaluator(p[0], p[1])
            calls += 1
        return cache[p]

    incumbent = _clip(start, cfg.bounds)
    radius = cfg.initial_radius
    best_point = incumbent
    best_value = evaluate(incumbent)
    trace: list[SearchIteration] = []
    while radius >= cfg.radius_threshold:
        inc_value = evaluate(incumbent)
        samples = [(evaluate(p), p) for p in _ring(incumbent, radius, cfg.bounds)]
        for value, p in samples:
            if value < best_value:
                best_value, best_point = value, p
        low = sorted(samples, key=lambda s: s[0])
        if inc_value <= low[0][0]:
            next_incumbent = incumbent  # still the minimum: just refine
        else:
            (v1, p1), (v2, p2) = low[0], low[1]
            dx, dy = p1[0] - p2[0], p1[1] - p2[1]
            norm = math.hypot(dx, dy)
            if norm == 0.0:
                next_incumbent = p1
            else:
                # one radius from the runner-up toward the best sample; lands
                # on the best itself when the pair shares an axis
                next_incumbent = _clip((p2[0] + radius * dx / norm,
                                        p2[1] + radius * dy / norm), cfg.bounds)
        radius *= cfg.radius_decay
        trace.append(SearchIteration(
            incumbent=incumbent, incumbent_value=inc_value, radius=radius,
            best_point=best_point, best_value=best_value, evaluations=calls))
        incumbent = next_incumbent
    return SearchResult(best_point=best_point, best_value=best_value,
                        evaluations=calls, trace=tuple(trace))


def grid_search(evaluator: Callable[[float, float], float], n: int = 21,
                bounds: tuple[float, float] = (PARAM_LO, PARAM_HI)) -> tuple[Point, float]:
    """Exhaustive n x n reference sweep; the independent yardstick for the search."""
    lo, hi = bounds
    step = (hi - lo) / (n - 1)
    best = None
    for i in range(n):
        for j in range(n):
            p = (lo + i * step, lo + j * step)
            v = evaluator(p[0], p[1])
            if best is None or v < best[1]:
                best = (p, v)
    return best


# ---------------------------------------------------------------------------
# workload change detection and online probing


class WorkloadChangeDetector:
    """Flags when the set of models producing arrivals shifts between windows."""

    def __init__(self):
        self._prev: Optional[frozenset[str]] = None

    def update(self, active_models: Sequence[str] | set[str]) -> bool:
        current = frozenset(active_models)
        changed = self._prev is not None and current != self._prev
        self._prev = current
        return changed


class OnlineTuner:
    """Window-by-window parameter probing.

    Probes the incumbent plus its four axis-aligned neighbors, one candidate per
    window, then adopts the strictly best observation as the new incumbent. A
    cycle that fails to improve shrinks the probe radius (never below the
    threshold, so probing keeps tracking drift); a workload change resets the
    radius and restarts the cycle from the incumbent. Windows with no signal
    are skipped. Dispatching never waits on the tuner.
    """

    def __init__(self, start: Point, config: Optional[SearchConfig] = None):
        self.config = config if config is not None else SearchConfig()
        self.incumbent: Point = _clip(start, self.config.bounds)
        self.radius = self.config.initial_radius
        self.detector = WorkloadChangeDetector()
        self._cycle: list[Point] = []
        self._observed: list[tuple[float, Point]] = []
        self._pos = 0
        self._begin_cycle()

    def _begin_cycle(self) -> None:
        a, b = self.incumbent
        pts = [self.incumbent] + [
            _clip(p, self.config.bounds)
            for p in ((a + self.radius, b), (a - self.radius, b),
                      (a, b + self.radius), (a, b - self.radius))]
        seen: list[Point] = []
        for p in pts:
            if p not in seen:
                seen.append(p)
        self._cycle = seen
        self._observed = []
        self._pos = 0

    def current_probe(self) -> Point:
        return self._cycle[self._pos]

    def on_window(self, uxcost: Optional[float], active_models: set[str]) -> Point:
        """Record the finished window's outcome; returns the next window's params."""
        if self.detector.update(active_models):
            log.debug("workload change: restarting probe cycle from %s", self.incumbent)
            self.radius = self.config.initial_radius
            self._begin_cycle()
            return self.current_probe()
        if uxcost is not None:
            self._observed.append((uxcost, self._cycle[self._pos]))
        self._pos += 1
        if self._pos >= len(self._cycle):
            self._finish_cycle()
        return self.current_probe()

    def _finish_cycle(self) -> None:
        incumbent_obs = [v for v, p in self._observed if p == self.incumbent]
        best = min(self._observed, key=lambda o: o[0]) if self._observed else None
        if (best is not None and incumbent_obs
                and best[0] < incumbent_obs[0] and best[1] != self.incumbent):
            self.incumbent = best[1]
        else:
            self.radius = max(self.radius * self.config.radius_decay,
                              self.config.radius_threshold)
        self._begin_cycle()
