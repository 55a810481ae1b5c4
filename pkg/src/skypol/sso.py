"""Social-spider search for the camera attitude behind a polarization image.

A gendered swarm walks attitude space; every spider's fitness is the
negative template-matching distance between the given DOP/AOP images and
the images a hypothetical camera would capture at the spider's attitude.
Females move under attraction/repulsion toward stronger-vibrating spiders,
dominant males chase the nearest female, non-dominant males regress to the
male weighted mean, and mating broods replace the worst spider when they
improve on it.  Because the sky pattern is close to symmetric under a half
turn, the yaw range is searched in four independent quadrants and the
final candidate is disambiguated with opposite-sector luminance ratios.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Literal, Optional

import numpy as np

from .errors import DegenerateImageError, DomainError, NoOverlapError
from .geometry import Attitude, wrap_degrees, xi1, xi2
from .imager import CameraModel, ImageSet, RenderContext, sector_ratios
from .skymodel import AtmosphericFunctions, DeltaRule, HosekCoefficients, NeutralPoints, SkyParams

log = logging.getLogger(__name__)

__all__ = [
    "SsoConfig",
    "Bounds",
    "Spider",
    "Population",
    "CandidateSolution",
    "TemplateMatcher",
    "match_score",
    "fitness",
    "init_counts",
    "init_positions",
    "assign_weights",
    "vibration",
    "attitude_distance",
    "female_move",
    "male_move",
    "mating",
    "mating_radius",
    "quadrant_bounds",
    "full_bounds",
    "run_quadrant",
    "pick_final_candidate",
    "select_final",
    "estimate_attitude",
]

_YAW_QUADRANTS = ((-180.0, -90.0), (-90.0, 0.0), (0.0, 90.0), (90.0, 180.0))


@dataclass(frozen=True)
class SsoConfig:
    """Search parameters.

    ``population``/``iterations`` apply per yaw quadrant unless
    ``split_population`` divides the swarm across the four quadrants.
    ``raw_distance`` switches the vibration metric to literal degrees
    (instead of bound-normalized coordinates, under which the Gaussian
    vibration kernel does not underflow); ``per_dimension_randoms`` draws
    the movement randoms per coordinate instead of per spider.
    """

    population: int = 200
    iterations: int = 1000
    pf: float = 0.7
    aop_weight: float = 1.5
    fov: float = 107.95
    seed: int = 0
    raw_distance: bool = False
    per_dimension_randoms: bool = False
    split_population: bool = False

    def __post_init__(self):
        if self.population < 4:
            raise DomainError(f"population {self.population} must be >= 4")
        if self.iterations < 1:
            raise DomainError(f"iterations {self.iterations} must be >= 1")
        if not 0.0 <= self.pf <= 1.0:
            raise DomainError(f"attraction threshold {self.pf} outside [0, 1]")
        if self.aop_weight <= 0.0:
            raise DomainError(f"AOP weight {self.aop_weight} must be > 0")
        if self.seed < 0:
            raise DomainError("seed must be a nonnegative integer")


@dataclass(frozen=True)
class Bounds:
    """Box bounds of the search plus the |pitch|+|roll| tilt budget."""

    yaw: tuple[float, float]
    pitch: tuple[float, float]
    roll: tuple[float, float]
    tilt_budget: float

    def ranges(self) -> np.ndarray:
        return np.array(
            [
                self.yaw[1] - self.yaw[0],
                self.pitch[1] - self.pitch[0],
                self.roll[1] - self.roll[0],
            ]
        )

    def lows(self) -> np.ndarray:
        return np.array([self.yaw[0], self.pitch[0], self.roll[0]])

    def highs(self) -> np.ndarray:
        return np.array([self.yaw[1], self.pitch[1], self.roll[1]])


def full_bounds(fov: float) -> Bounds:
    b = 90.0 - fov / 2.0
    return Bounds((-180.0, 180.0), (-b, b), (-b, b), b)


def quadrant_bounds(q: int, fov: float) -> Bounds:
    """Bounds of one of the four yaw quadrants (q in 1..4, counterclockwise)."""
    if q not in (1, 2, 3, 4):
        raise DomainError(f"quadrant {q} outside 1..4")
    b = 90.0 - fov / 2.0
    return Bounds(_YAW_QUADRANTS[q - 1], (-b, b), (-b, b), b)


@dataclass(frozen=True)
class Spider:
    position: Attitude
    gender: Literal["female", "male"]
    weight: float
    fitness: float


class Population:
    """Swarm state: females first, then males, in fixed index order."""

    def __init__(self, positions: np.ndarray, n_female: int):
        self.positions = np.asarray(positions, dtype=float)
        self.n_female = int(n_female)
        n = self.positions.shape[0]
        self.fitness = np.full(n, -np.inf)
        self.weights = np.zeros(n)

    @property
    def size(self) -> int:
        return self.positions.shape[0]

    @property
    def n_male(self) -> int:
        return self.size - self.n_female

    @property
    def best_index(self) -> int:
        return int(np.argmax(self.fitness))

    @property
    def worst_index(self) -> int:
        return int(np.argmin(self.fitness))

    def spider(self, i: int) -> Spider:
        return Spider(
            position=Attitude(*self.positions[i]),
            gender="female" if i < self.n_female else "male",
            weight=float(self.weights[i]),
            fitness=float(self.fitness[i]),
        )


@dataclass(frozen=True)
class CandidateSolution:
    """Best attitude found in one yaw quadrant."""

    attitude: Attitude
    fitness: float
    quadrant: int
    com: Optional[float] = None


# -- template matching ------------------------------------------------------


def match_score(dop_ref, aop_ref, dop_sim, aop_sim, aop_weight: float = 1.5) -> float:
    """Negative template-matching distance between two image sets.

    ``-(sum |dDOP| + weight * sum xi1(dAOP))`` over pixels valid in both
    images; AOP differences are wrapped into [-180, 180] before folding, and
    pixels whose AOP is undefined on either side contribute only their DOP
    term.  Raises :class:`NoOverlapError` when no pixel is valid in both.
    """
    dop_ref = np.asarray(dop_ref, dtype=float)
    dop_sim = np.asarray(dop_sim, dtype=float)
    aop_ref = np.asarray(aop_ref, dtype=float)
    aop_sim = np.asarray(aop_sim, dtype=float)
    both = np.isfinite(dop_ref) & np.isfinite(dop_sim)
    if not both.any():
        raise NoOverlapError("images share no valid pixels")
    dop_term = np.abs(dop_ref[both] - dop_sim[both]).sum()
    aop_ok = both & np.isfinite(aop_ref) & np.isfinite(aop_sim)
    diff = wrap_degrees(aop_ref[aop_ok] - aop_sim[aop_ok])
    aop_term = xi1(diff).sum()
    return -float(dop_term + aop_weight * aop_term)


class TemplateMatcher:
    """Fitness of candidate attitudes against one given image set.

    Gathers the given image once onto the context's FOV pixel list and keeps
    scratch buffers so each evaluation renders and scores without
    allocating.  Not safe for concurrent use (shares the context's buffers).
    """

    def __init__(self, ctx: RenderContext, given: ImageSet, aop_weight: float = 1.5):
        if (given.rows, given.cols) != (ctx.camera.rows, ctx.camera.cols):
            raise DomainError(
                f"given image {given.rows}x{given.cols} does not match "
                f"camera raster {ctx.camera.rows}x{ctx.camera.cols}"
            )
        self.ctx = ctx
        self.aop_weight = float(aop_weight)
        idx = ctx.valid_index
        self.dop_ref = given.dop.ravel()[idx].astype(float)
        self.aop_ref = given.aop.ravel()[idx].astype(float)
        mask = given.mask.ravel()[idx]
        self.dop_ref[~mask] = np.nan
        self.aop_ref[~mask] = np.nan
        valid = np.isfinite(self.dop_ref)
        if not valid.any():
            raise NoOverlapError("given image has no valid pixel inside the FOV")
        self._plain = bool(valid.all() and np.isfinite(self.aop_ref).all())
        self._t1 = np.empty(idx.size)
        self._t2 = np.empty(idx.size)

    def j(self, candidate: Attitude) -> float:
        sample = self.ctx.sample_valid_pixels(candidate)
        if self._plain and sample.invalid is None:
            t1, t2 = self._t1, self._t2
            np.subtract(self.dop_ref, sample.dop, out=t1)
            np.abs(t1, out=t1)
            dop_term = t1.sum()
            np.subtract(self.aop_ref, sample.aop, out=t1)
            np.multiply(t1, 1.0 / 360.0, out=t2)
            np.rint(t2, out=t2)
            t2 *= 360.0
            t1 -= t2
            np.abs(t1, out=t1)
            np.subtract(180.0, t1, out=t2)
            np.minimum(t1, t2, out=t1)
            total = dop_term + self.aop_weight * t1.sum()
            if not math.isnan(total):
                return -float(total)
        return match_score(
            self.dop_ref, self.aop_ref, sample.dop, sample.aop, self.aop_weight
        )

    def j_many(self, positions: np.ndarray) -> np.ndarray:
        return np.array([self.j(Attitude(*row)) for row in positions])


def fitness(
    candidate: Attitude, given: ImageSet, ctx: RenderContext, aop_weight: float = 1.5
) -> float:
    """Template-matching fitness of one candidate attitude (<= 0; 0 is exact).

    Convenience wrapper over :class:`TemplateMatcher` for one-off scores.
    """
    return TemplateMatcher(ctx, given, aop_weight).j(candidate)


# -- population lifecycle ----------------------------------------------------


def init_counts(n: int, rng: np.random.Generator) -> tuple[int, int]:
    """Female/male split: ``floor((0.9 - rand*0.25) * n)`` females, rest male."""
    if n < 4:
        raise DomainError(f"population {n} must be >= 4")
    n_f = int(math.floor((0.9 - float(rng.uniform()) * 0.25) * n))
    return n_f, n - n_f


def init_positions(
    counts: tuple[int, int], bounds: Bounds, rng: np.random.Generator
) -> Population:
    """Uniform positions inside the bounds; tilt-budget violators get redrawn."""
    n = counts[0] + counts[1]
    pos = rng.uniform(bounds.lows(), bounds.highs(), size=(n, 3))
    bad = np.abs(pos[:, 1]) + np.abs(pos[:, 2]) > bounds.tilt_budget
    while bad.any():
        k = int(bad.sum())
        pos[bad, 1:] = rng.uniform(bounds.lows()[1:], bounds.highs()[1:], size=(k, 2))
        bad = np.abs(pos[:, 1]) + np.abs(pos[:, 2]) > bounds.tilt_budget
    return Population(pos, counts[0])


def assign_weights(pop: Population) -> Population:
    """Affine rescale of fitness onto [0, 1]; all ties map to weight 1."""
    best = pop.fitness.max()
    worst = pop.fitness.min()
    if best == worst:
        pop.weights[:] = 1.0
    else:
        pop.weights[:] = (pop.fitness - worst) / (best - worst)
    return pop


def vibration(weight: float, distance: float) -> float:
    """Vibration perceived from a spider of given weight at given distance."""
    return weight * math.exp(-(distance * distance))


def _signed_diff(target: np.ndarray, source: np.ndarray) -> np.ndarray:
    """Per-dimension displacement target - source with cyclic yaw."""
    d = target - source
    d[..., 0] = wrap_degrees(d[..., 0])
    return d


def _pair_distance(
    a: np.ndarray, b: np.ndarray, bounds: Bounds, raw: bool
) -> np.ndarray:
    """(len(a), len(b)) distances with yaw folded; normalized unless raw."""
    dyaw = xi2(a[:, None, 0] - b[None, :, 0])
    dp = a[:, None, 1] - b[None, :, 1]
    dr = a[:, None, 2] - b[None, :, 2]
    if raw:
        return np.sqrt(dyaw**2 + dp**2 + dr**2)
    ry, rp, rr = bounds.ranges()
    return np.sqrt((dyaw / ry) ** 2 + (dp / rp) ** 2 + (dr / rr) ** 2)


def attitude_distance(a: Attitude, b: Attitude, bounds: Bounds, raw: bool = False) -> float:
    """Scalar version of the swarm's distance metric."""
    return float(
        _pair_distance(a.as_array()[None, :], b.as_array()[None, :], bounds, raw)[0, 0]
    )


def project_positions(pos: np.ndarray, bounds: Bounds) -> np.ndarray:
    """Repair positions: wrap/clamp the box, scale (pitch, roll) onto the budget.

    Yaw wraps cyclically when the bounds span the full circle and clamps to
    the sub-range otherwise; tilt violations are scaled radially in the
    (pitch, roll) plane so the search direction survives the repair.
    """
    pos = np.array(pos, dtype=float)
    ylo, yhi = bounds.yaw
    if yhi - ylo >= 360.0:
        pos[:, 0] = wrap_degrees(pos[:, 0])
    else:
        np.clip(pos[:, 0], ylo, yhi, out=pos[:, 0])
    np.clip(pos[:, 1], *bounds.pitch, out=pos[:, 1])
    np.clip(pos[:, 2], *bounds.roll, out=pos[:, 2])
    tilt = np.abs(pos[:, 1]) + np.abs(pos[:, 2])
    over = tilt > bounds.tilt_budget
    if over.any():
        # shrink a hair below the boundary so rounding cannot re-violate it
        factor = bounds.tilt_budget / tilt[over] * (1.0 - 1e-14)
        pos[over, 1] *= factor
        pos[over, 2] *= factor
    return pos


def _movement_randoms(rng, n: int, count: int, per_dimension: bool) -> np.ndarray:
    """Movement random factors, drawn in fixed order (count blocks of n)."""
    if per_dimension:
        return rng.uniform(size=(count, n, 3))
    return rng.uniform(size=(count, n))[..., None]


def female_move(
    pop: Population, bounds: Bounds, cfg: SsoConfig, rng: np.random.Generator
) -> np.ndarray:
    """New female positions: attraction below the PF threshold, else repulsion.

    Both vibration terms flip sign together on repulsion; the uniform jitter
    keeps its sign.  Draw order per iteration: r_m, then the four movement
    randoms, females in index order within each block.
    """
    n_f = pop.n_female
    pos = pop.positions
    w = pop.weights
    females = pos[:n_f]

    r_m = rng.uniform(size=n_f)
    zeta, tau, delta, rand = _movement_randoms(rng, n_f, 4, cfg.per_dimension_randoms)

    dist = _pair_distance(females, pos, bounds, cfg.raw_distance)
    higher = w[None, :] > w[:n_f, None]
    masked = np.where(higher, dist, np.inf)
    c_idx = np.argmin(masked, axis=1)
    has_c = np.isfinite(masked[np.arange(n_f), c_idx])
    vib_c = np.where(has_c, w[c_idx] * np.exp(-dist[np.arange(n_f), c_idx] ** 2), 0.0)
    b_idx = pop.best_index
    vib_b = w[b_idx] * np.exp(-dist[:, b_idx] ** 2)

    to_c = _signed_diff(pos[c_idx], females)
    to_b = _signed_diff(pos[b_idx][None, :], females)
    sign = np.where(r_m < cfg.pf, 1.0, -1.0)[:, None]
    step = sign * (zeta * vib_c[:, None] * to_c + tau * vib_b[:, None] * to_b)
    step += delta * (rand - 0.5)
    return project_positions(females + step, bounds)


def male_move(
    pop: Population, bounds: Bounds, cfg: SsoConfig, rng: np.random.Generator
) -> np.ndarray:
    """New male positions: dominant males chase the nearest female, the rest
    contract toward the male weighted mean.

    Dominance means weight at or above the male median.  Draw order: the
    three movement randoms, males in index order within each block.
    """
    n_f = pop.n_female
    males = pop.positions[n_f:]
    females = pop.positions[:n_f]
    wm = pop.weights[n_f:]

    zeta, delta, rand = _movement_randoms(rng, pop.n_male, 3, cfg.per_dimension_randoms)
    dominant = wm >= np.median(wm)

    dist = _pair_distance(males, females, bounds, cfg.raw_distance)
    f_idx = np.argmin(dist, axis=1)
    vib_f = pop.weights[f_idx] * np.exp(-dist[np.arange(pop.n_male), f_idx] ** 2)
    to_f = _signed_diff(females[f_idx], males)
    moved_dom = males + zeta * vib_f[:, None] * to_f + delta * (rand - 0.5)

    wsum = wm.sum()
    if wsum > 0.0:
        mean = (males * wm[:, None]).sum(axis=0) / wsum
    else:
        mean = males.mean(axis=0)
    moved_non = males + zeta * (mean[None, :] - males)

    moved = np.where(dominant[:, None], moved_dom, moved_non)
    return project_positions(moved, bounds)


def mating_radius(bounds: Bounds) -> float:
    """Mating range: mean parameter span over the three dimensions, halved."""
    return float(bounds.ranges().sum() / (2.0 * 3.0))


def mating(
    pop: Population,
    radius: float,
    bounds: Bounds,
    matcher: TemplateMatcher,
    rng: np.random.Generator,
) -> list[tuple[np.ndarray, float]]:
    """Roulette broods of dominant males and nearby females.

    Each brood coordinate is copied from a weight-proportional roulette draw
    over the mating group (independently per coordinate).  A brood replaces
    the current worst spider only when it improves on it; the replaced
    spider keeps its gender slot.  Returns every evaluated brood so callers
    can fold them into best-so-far tracking.  Groups are processed in male
    index order; the female distance test folds yaw cyclically and uses raw
    degrees (the radius is in degrees).
    """
    n_f = pop.n_female
    wm = pop.weights[n_f:]
    dominant = wm >= np.median(wm)
    evaluated: list[tuple[np.ndarray, float]] = []
    for local in range(pop.n_male):
        if not dominant[local]:
            continue
        midx = n_f + local
        mpos = pop.positions[midx]
        females = pop.positions[:n_f]
        d = np.sqrt(
            xi2(females[:, 0] - mpos[0]) ** 2
            + (females[:, 1] - mpos[1]) ** 2
            + (females[:, 2] - mpos[2]) ** 2
        )
        group = np.flatnonzero(d <= radius)
        if group.size == 0:
            continue
        members = np.concatenate(([midx], group))
        gw = pop.weights[members]
        total = gw.sum()
        probs = gw / total if total > 0.0 else np.full(members.size, 1.0 / members.size)
        cumulative = np.cumsum(probs)
        brood = np.empty(3)
        for dim in range(3):
            u = float(rng.uniform())
            pick = int(np.searchsorted(cumulative, u, side="right"))
            pick = min(pick, members.size - 1)
            brood[dim] = pop.positions[members[pick], dim]
        brood = project_positions(brood[None, :], bounds)[0]
        j_brood = matcher.j(Attitude(*brood))
        evaluated.append((brood, j_brood))
        worst = pop.worst_index
        if j_brood > pop.fitness[worst]:
            pop.positions[worst] = brood
            pop.fitness[worst] = j_brood
    return evaluated


TraceHook = Callable[[dict], None]


def run_quadrant(
    q: int,
    given: ImageSet,
    cfg: SsoConfig,
    ctx: RenderContext,
    trace: Optional[TraceHook] = None,
) -> CandidateSolution:
    """Full swarm search inside one yaw quadrant.

    Per iteration: evaluate, weight, move females, move males, mate; the
    returned candidate is the best position ever evaluated.  Deterministic
    in ``cfg.seed`` (independent stream per quadrant).
    """
    bounds = quadrant_bounds(q, cfg.fov)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, q])))
    n = cfg.population // 4 if cfg.split_population else cfg.population
    pop = init_positions(init_counts(n, rng), bounds, rng)
    matcher = TemplateMatcher(ctx, given, cfg.aop_weight)
    radius = mating_radius(bounds)

    best_pos: Optional[np.ndarray] = None
    best_j = -np.inf
    for k in range(cfg.iterations):
        pop.fitness = matcher.j_many(pop.positions)
        top = pop.best_index
        if pop.fitness[top] > best_j:
            best_j = float(pop.fitness[top])
            best_pos = pop.positions[top].copy()
        assign_weights(pop)
        if trace is not None:
            trace(
                {
                    "quadrant": q,
                    "iteration": k,
                    "best_j": best_j,
                    "best_attitude": Attitude(*best_pos),
                    "weights": pop.weights.copy(),
                }
            )
        pop.positions[: pop.n_female] = female_move(pop, bounds, cfg, rng)
        pop.positions[pop.n_female :] = male_move(pop, bounds, cfg, rng)
        for brood, j_brood in mating(pop, radius, bounds, matcher, rng):
            if j_brood > best_j:
                best_j = float(j_brood)
                best_pos = brood.copy()
    return CandidateSolution(Attitude(*best_pos), best_j, q)


def pick_final_candidate(
    cands: Iterable[CandidateSolution], given: ImageSet, ctx: RenderContext
) -> CandidateSolution:
    """Drop the two worst-scoring candidates, then let luminance decide.

    The two surviving candidates are re-rendered and compared to the given
    image through the squared differences of opposite-sector luminance
    ratios; the smaller comparison score wins, ties broken by fitness.
    Degenerate sector statistics fall back to fitness-only selection.
    """
    ranked = sorted(cands, key=lambda c: c.fitness, reverse=True)
    finalists = ranked[:2]
    try:
        ref = sector_ratios(given)
        scored = []
        for cand in finalists:
            ratios = sector_ratios(ctx.render(cand.attitude))
            scored.append(replace(cand, com=float(((ref - ratios) ** 2).sum())))
    except DegenerateImageError as exc:
        log.warning("sector statistics degenerate (%s); falling back to fitness", exc)
        return finalists[0]
    scored.sort(key=lambda c: (c.com, -c.fitness))
    return scored[0]


def select_final(
    cands: Iterable[CandidateSolution], given: ImageSet, ctx: RenderContext
) -> Attitude:
    """Attitude of the winning candidate (see :func:`pick_final_candidate`)."""
    return pick_final_candidate(cands, given, ctx).attitude


def estimate_attitude(
    given: ImageSet,
    p: SkyParams,
    cfg: SsoConfig,
    cam: CameraModel,
    af: Optional[AtmosphericFunctions] = None,
    c: Optional[HosekCoefficients] = None,
    trace: Optional[TraceHook] = None,
    points: Optional[NeutralPoints] = None,
    delta_rule: Optional[DeltaRule] = None,
) -> Attitude:
    """Recover the three Euler angles behind a captured image set.

    Runs the four quadrant searches and the luminance disambiguation;
    deterministic given ``cfg.seed``.
    """
    ctx = RenderContext(cam, p, af, c, points, delta_rule)
    cands = [run_quadrant(q, given, cfg, ctx, trace) for q in (1, 2, 3, 4)]
    return select_final(cands, given, ctx)
