"""Filtrations, unrevisited neighborhoods, and averaged energy functions.

The energy function is assembled from attractor-repeller couples: for each cut
of the total order, a two-sided time average of a smooth bump gives a function
that is 0 on the repelling side, 1 on the attracting side, and nondecreasing
along the flow. Lie-derivative bounds are certified through the endpoint
identity L_V m = (b(flow_T x) - b(flow_{-T} x)) / 2T, which is exact for the
average and free of grid-differentiation noise.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, NumericalDegeneracy
from .fields import field_values, reversed_field
from .flow import _rk4_step, torus_distance
from .masks import RegionMask, ScalarFieldGrid, _grid_points

FIXED_POINT_SPEED = 1e-12   # below this, a quadrature point is treated as invariant
ENERGY_STEP = 5e-3
MASK_FLOW_STEP = 1e-2
UNREVISITED_STEP = 2e-2


# ---------------------------------------------------------------------------
# filtrations

def _seed_mask(records, resolution, dim, radius):
    m = RegionMask.empty(resolution, dim)
    for rec in records:
        pts = np.atleast_2d(np.asarray(rec.location, float))
        m = m.union(RegionMask.from_points(pts, resolution, dim, radius=radius))
    return m


def check_stability(mask, spec, forward, step=MASK_FLOW_STEP):
    """Grid cells violating stability of the mask under a time-1 map.

    forward=True checks flow_1(O) inside O; forward=False checks
    flow_{-1}(O) inside O. The image of O under the map equals the preimage
    under the inverse map, so membership is tested without inverting cells.
    """
    field = reversed_field(spec) if forward else spec
    image = mask.preimage(field, 1.0, step=step)
    bad = image.indicator & ~mask.indicator
    cells = np.argwhere(bad) / mask.resolution
    return [tuple(c) for c in cells]


def build_filtration(graph, spec, eps, resolution=64, step=MASK_FLOW_STEP,
                     max_iter=60):
    """Nested open sets adapted to the order: one list per flow direction.

    The backward-stable list O_j^- is grown from eps/2 balls around the first
    j basic sets of the total order by adjoining flow preimages until stable;
    the forward-stable list is the complement family O_j^+ = M \\ O_{N-j}^-,
    which is forward-stable whenever O^- is backward-stable.
    """
    order = list(graph.total_order)
    nodes = {n.ident: n for n in graph.nodes}
    dim = spec.dim
    minus = []
    prev = RegionMask.empty(resolution, dim)
    for j in range(1, len(order) + 1):
        seeds = _seed_mask([nodes[i] for i in order[:j]], resolution, dim,
                           radius=eps / 2)
        cur = seeds.union(prev)
        for _ in range(max_iter):
            nxt = cur.union(cur.preimage(spec, 1.0, step=step))
            if np.array_equal(nxt.indicator, cur.indicator):
                cur = nxt
                break
            cur = nxt
        bad = check_stability(cur, spec, forward=False, step=step)
        if bad:
            raise NumericalDegeneracy(
                f"filtration step {j} not stable after {max_iter} pushed unions; "
                f"{len(bad)} offending cells, first few {bad[:4]}")
        minus.append(cur)
        prev = cur

    n = len(order)
    plus = []
    for j in range(1, n + 1):
        if j == n:
            plus.append(RegionMask.full(resolution, dim))
        else:
            plus.append(minus[n - j - 1].complement())
    return minus, plus


def stable_manifold_samples(spec, rec, span=6.0, step=MASK_FLOW_STEP,
                            offsets=(1e-4, 1e-3)):
    """Points tracing the stable set of a basic set (reversed-flow shooting)."""
    rev = reversed_field(spec)
    pts = [np.atleast_2d(np.asarray(rec.location, float))]
    base = rec.representative
    for j in range(rec.stable_dirs.shape[1]):
        d = rec.stable_dirs[:, j]
        for off in offsets:
            for sgn in (1.0, -1.0):
                x = np.mod(base + sgn * off * d, 1.0)
                t = 0.0
                while t < span:
                    x = _flow(rev, x, 0.05, step)
                    pts.append(np.atleast_2d(x))
                    t += 0.05
    return np.vstack(pts)


def filtration_hausdorff_estimate(mask, stable_pts):
    """Largest distance from an occupied cell to the sampled stable sets."""
    cells = np.argwhere(mask.indicator) / mask.resolution
    if len(cells) == 0:
        return 0.0
    d = torus_distance(cells[:, None, :], stable_pts[None, :, :]).min(axis=1)
    return float(d.max())


def _flow(spec, x, t, step):
    from .flow import integrate_flow
    return integrate_flow(spec, x, t, step=step)


# ---------------------------------------------------------------------------
# unrevisited neighborhoods

def check_unrevisited(mask, spec, m_max=50, sample_count=1000,
                      step=UNREVISITED_STEP, seed=7):
    """Sampled check that orbits leaving the set never re-enter it.

    Draws points inside the set, follows m_max time-1 samples, and reports
    any in-out-in pattern. Returns (ok, witnesses) where each witness gives
    the start point and the first offending sample index.
    """
    rng = np.random.default_rng(seed)
    samples = []
    attempts = 0
    while len(samples) < sample_count and attempts < 400:
        draw = rng.random((max(4 * sample_count, 1000), mask.dim))
        inside = mask.contains(draw)
        samples.extend(draw[inside])
        attempts += 1
    if len(samples) < sample_count:
        cells = np.argwhere(mask.indicator) / mask.resolution
        if len(cells) == 0:
            return True, []
        picks = cells[rng.integers(0, len(cells), sample_count)]
        jitter = (rng.random(picks.shape) - 0.5) / mask.resolution
        samples = list(np.mod(picks + jitter, 1.0))
    x = np.array(samples[:sample_count])
    starts = x.copy()

    inside = np.zeros((len(x), m_max + 1), dtype=bool)
    inside[:, 0] = True
    for m in range(1, m_max + 1):
        x = _flow(spec, x, 1.0, step)
        inside[:, m] = mask.contains(x)

    seen_out = np.maximum.accumulate(~inside, axis=1)
    seen_out_before = np.zeros_like(seen_out)
    seen_out_before[:, 1:] = seen_out[:, :-1]
    viol = inside & seen_out_before
    witnesses = []
    for i in np.nonzero(viol.any(axis=1))[0]:
        m = int(np.argmax(viol[i]))
        witnesses.append({"start": starts[i].tolist(), "reentry_at": m})
    return len(witnesses) == 0, witnesses


# ---------------------------------------------------------------------------
# averaged energy

def _smoothstep(t):
    """Flat-ended unit step: identically 0/1 outside (0,1), smooth inside."""
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.maximum(1.0 - t, 1e-300)), 0.0)
    return a / (a + b)


def build_bump(v_minus, v_plus):
    """Bump grid: exactly 0 on the repeller-side set, exactly 1 on the
    attractor-side set, smooth-stepped by distance ratio in between."""
    if v_plus.measure == 0.0:
        return np.zeros_like(v_minus.weights)
    if v_minus.measure == 0.0:
        return np.ones_like(v_plus.weights)
    d_minus = v_minus.distance_field()
    d_plus = v_plus.distance_field()
    theta = d_minus / (d_minus + d_plus)
    return _smoothstep(theta)


def _couple_masks(repeller_mask, gap):
    """Attractor-side plateau for a cut of the filtration: the complement of
    the repelling open set, pulled back by `gap` so closures stay disjoint."""
    v_minus = repeller_mask
    v_plus = repeller_mask.fatten(gap).complement()
    return v_minus, v_plus


def _bump_average(spec, bumps, T, step, resolution, dim):
    """Two-sided trapezoid average of each bump along the flow, plus the
    endpoint states used for the exact Lie-derivative identity."""
    pts = _grid_points(resolution, dim)
    speed = np.linalg.norm(field_values(spec, pts), axis=1)
    frozen = speed < FIXED_POINT_SPEED
    n_steps = int(round(T / step))

    vals0 = [_sample(b, pts, resolution) for b in bumps]
    sums = {+1: [v.copy() * 0.5 for v in vals0],
            -1: [v.copy() * 0.5 for v in vals0]}
    ends = {}
    rev = reversed_field(spec)
    for sgn, fld in ((+1, spec), (-1, rev)):
        x = pts.copy()
        for k in range(n_steps):
            x = _rk4_step(fld, x, step)
            x[frozen] = pts[frozen]
            w = 1.0 if k < n_steps - 1 else 0.5
            for j, b in enumerate(bumps):
                sums[sgn][j] += w * _sample(b, x, resolution)
        ends[sgn] = x

    averages, lies = [], []
    for j, b in enumerate(bumps):
        m = (sums[+1][j] + sums[-1][j]) * step / (2.0 * T)
        lie = (_sample(b, ends[+1], resolution)
               - _sample(b, ends[-1], resolution)) / (2.0 * T)
        averages.append(np.clip(m, 0.0, 1.0).reshape((resolution,) * dim))
        lies.append(lie.reshape((resolution,) * dim))
    return averages, lies


def _sample(grid_values, pts, resolution):
    coords = [np.mod(pts[:, i], 1.0) * resolution
              for i in range(pts.shape[1])]
    return ndimage.map_coordinates(grid_values, coords, order=1,
                                   mode="grid-wrap")


def averaged_energy(v_minus, v_plus, spec, T=4.0, step=ENERGY_STEP,
                    tol=1e-6, adaptive=True, T_max=32.0):
    """Two-sided time average of a couple bump; 0 on the repelling set, 1 on
    the attracting set, nondecreasing along the flow up to `tol`.

    T doubles until the endpoint Lie bound holds everywhere (the averaging
    window must dominate every transition-crossing time).
    """
    if v_minus.measure > 0 and v_plus.measure > 0:
        overlap = v_minus.fatten(1.0 / v_minus.resolution).intersection(v_plus)
        if overlap.measure > 0:
            raise ConfigurationError(
                "attractor and repeller neighborhoods must have disjoint closures")
    resolution = v_minus.resolution
    dim = v_minus.dim
    bump = build_bump(v_minus, v_plus)
    while True:
        (m,), (lie,) = _bump_average(spec, [bump], T, step, resolution, dim)
        if not adaptive or lie.min() >= -tol or T >= T_max:
            break
        T *= 2.0
    if lie.min() < -tol:
        raise NumericalDegeneracy(
            f"averaging window T={T} insufficient: min endpoint derivative "
            f"{lie.min():.3e}")
    return ScalarFieldGrid(m)


@dataclass
class EnergyReport:
    energy: ScalarFieldGrid
    lie_endpoint: ScalarFieldGrid       # exact L_V E via the endpoint identity
    levels: np.ndarray
    neighborhoods: list                 # RegionMask per basic set, E pinned there
    eta: float                          # min L_V E outside the neighborhoods
    basic_values: dict = field(default_factory=dict)   # ident -> E(K_i)
    averaging_T: float = 0.0


def global_energy(graph, spec, levels, eps, resolution=64, T=4.0,
                  step=ENERGY_STEP, tol=1e-6, T_max=32.0,
                  filtration=None):
    """Energy function adapted to the order graph: E = lam_1 + sum of couple
    averages weighted by the level increments, so E(K_i) = lam_i."""
    levels = np.asarray(levels, float)
    order = list(graph.total_order)
    n = len(order)
    if len(levels) != n:
        raise ConfigurationError("one level per basic set required")
    if n > 1 and not np.all(np.diff(levels) > 0):
        raise ConfigurationError("levels must increase along the total order")
    nodes = {r.ident: r for r in graph.nodes}
    if n == 1:
        e = np.full((resolution,) * spec.dim, levels[0])
        z = np.zeros_like(e)
        return EnergyReport(
            energy=ScalarFieldGrid(e), lie_endpoint=ScalarFieldGrid(z),
            levels=levels, neighborhoods=[RegionMask.full(resolution, spec.dim)],
            eta=0.0, basic_values={order[0]: float(levels[0])}, averaging_T=T)

    if filtration is None:
        minus, _ = build_filtration(graph, spec, eps, resolution=resolution)
    else:
        minus = filtration
    bumps = []
    for j in range(1, n):
        v_minus, v_plus = _couple_masks(minus[j - 1], gap=eps / 2)
        bumps.append(build_bump(v_minus, v_plus))

    while True:
        averages, lies = _bump_average(spec, bumps, T, step, resolution,
                                       spec.dim)
        e = np.full((resolution,) * spec.dim, levels[0])
        lie_total = np.zeros_like(e)
        for j in range(1, n):
            e = e + (levels[j] - levels[j - 1]) * averages[j - 1]
            lie_total = lie_total + (levels[j] - levels[j - 1]) * lies[j - 1]
        if lie_total.min() >= -tol or T >= T_max:
            break
        T *= 2.0
    if lie_total.min() < -tol:
        raise NumericalDegeneracy(
            f"energy averaging window T={T} insufficient: min endpoint "
            f"derivative {lie_total.min():.3e}")

    energy = ScalarFieldGrid(e)
    pin_tol = eps * (levels[-1] - levels[0])
    neighborhoods, basic_values = [], {}
    for pos, ident in enumerate(order):
        rec = nodes[ident]
        pinned = np.abs(e - levels[pos]) <= pin_tol
        comp = _component_around(pinned, rec, resolution)
        neighborhoods.append(RegionMask(resolution, comp.astype(float)))
        basic_values[ident] = float(
            np.mean(energy.sample_linear(
                np.atleast_2d(np.asarray(rec.location, float)))))
    covered = np.zeros_like(e, dtype=bool)
    for nb in neighborhoods:
        covered |= nb.indicator
    outside = ~covered
    eta = float(lie_total[outside].min()) if outside.any() else 0.0
    return EnergyReport(energy=energy, lie_endpoint=ScalarFieldGrid(lie_total),
                        levels=levels, neighborhoods=neighborhoods, eta=eta,
                        basic_values=basic_values, averaging_T=T)


def _component_around(pinned, rec, resolution):
    """Connected component (periodic 2n-neighborhood) of the pinned region
    containing the basic set's cells; the cells themselves are always kept."""
    dim = pinned.ndim
    comp = np.zeros_like(pinned)
    seeds = np.mod(np.round(np.atleast_2d(np.asarray(rec.location, float))
                            * resolution).astype(int), resolution)
    stack = [tuple(s) for s in seeds]
    for s in stack:
        comp[s] = True
    while stack:
        cell = stack.pop()
        for ax in range(dim):
            for d in (-1, 1):
                nb = list(cell)
                nb[ax] = (nb[ax] + d) % resolution
                nb = tuple(nb)
                if pinned[nb] and not comp[nb]:
                    comp[nb] = True
                    stack.append(nb)
    return comp


def energy_monotone_along_orbits(energy, spec, n_samples=200, t_grid=None,
                                 step=ENERGY_STEP, seed=11, slack=1e-6):
    """Sampled orbit-monotonicity check E(flow_t x) >= E(x) - slack, t in [0,2]."""
    rng = np.random.default_rng(seed)
    if t_grid is None:
        t_grid = np.arange(0.25, 2.01, 0.25)
    x = rng.random((n_samples, energy.dim))
    e0 = energy.sample_linear(x)
    worst = 0.0
    cur, t_done = x.copy(), 0.0
    for t in t_grid:
        cur = _flow(spec, cur, t - t_done, step)
        t_done = t
        drop = e0 - energy.sample_linear(cur)
        worst = max(worst, float(drop.max()))
    return worst <= slack, worst
