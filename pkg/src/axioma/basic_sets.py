"""Basic-set detection and the Smale order graph.

Detection covers hyperbolic fixed points (Newton from grid seeds) and
isolated hyperbolic periodic orbits (Poincare shooting). The order relation
K_i <= K_j is decided by shooting separatrices from unstable directions and
watching which sets capture them; transitive edges are pruned, acyclicity is
asserted, and a compatible total order is stored.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import NotAxiomA, NumericalDegeneracy, TransversalityError
from .fields import evaluate_field, field_values
from .flow import integrate_flow, torus_distance, DEFAULT_STEP

HYPERBOLICITY_TOL = 1e-6
MERGE_TOL = 1e-8
CAPTURE_RADIUS = 1e-2
CAPTURE_SAMPLES = 5          # consecutive time-1 samples inside the radius
SEED_OFFSET = 1e-4


@dataclass
class BasicSetRecord:
    kind: str                  # "fixed-point" | "periodic-orbit"
    location: np.ndarray       # point, or sampled orbit (m, n)
    rates: np.ndarray          # eigenvalues of DV, or Floquet exponents
    index: int                 # dim E_u
    lam: float                 # min |Re| of nonzero rates
    stable_dirs: np.ndarray    # unit columns spanning E_s at representative point
    unstable_dirs: np.ndarray
    period: float = 0.0
    ident: int = -1

    @property
    def representative(self):
        if self.kind == "fixed-point":
            return self.location
        return self.location[0]

    def to_dict(self):
        return {
            "id": self.ident, "kind": self.kind, "index": self.index,
            "lambda": self.lam, "period": self.period,
            "location": np.asarray(self.location).tolist(),
            "rates_re": np.real(self.rates).tolist(),
            "rates_im": np.imag(self.rates).tolist(),
        }


def _classify_fixed_point(spec, x):
    _, jac = evaluate_field(spec, x)
    rates = np.linalg.eigvals(jac)
    if np.any(np.abs(rates.real) < HYPERBOLICITY_TOL):
        raise NotAxiomA(
            f"fixed point at {np.round(x, 6)} not hyperbolic at tolerance "
            f"(rates {rates})")
    # eigenvectors for the stable/unstable splitting
    w, vecs = np.linalg.eig(jac)
    stable = vecs[:, w.real < 0]
    unstable = vecs[:, w.real > 0]

    def _unit_real(cols):
        if cols.shape[1] == 0:
            return np.zeros((spec.dim, 0))
        out = []
        for j in range(cols.shape[1]):
            v = cols[:, j]
            v = v.real if np.linalg.norm(v.real) > np.linalg.norm(v.imag) else v.imag
            nv = np.linalg.norm(v)
            if nv == 0:   # genuinely complex pair; keep real and imag parts once
                continue
            out.append(v / nv)
        if not out:
            v = cols[:, 0]
            out = [v.real / np.linalg.norm(v.real), v.imag / np.linalg.norm(v.imag)]
        # de-duplicate complex-conjugate copies
        uniq = []
        for v in out:
            if not any(abs(abs(v @ u) - 1.0) < 1e-9 for u in uniq):
                uniq.append(v)
        return np.array(uniq).T

    return BasicSetRecord(
        kind="fixed-point", location=np.asarray(x, float), rates=rates,
        index=int(np.sum(w.real > 0)), lam=float(np.min(np.abs(rates.real))),
        stable_dirs=_unit_real(stable), unstable_dirs=_unit_real(unstable))


def find_fixed_points(spec, grid_density=32, newton_steps=60):
    """Newton refinement from every grid cell whose |V| is a local minimum."""
    n = spec.dim
    axes = [np.arange(grid_density) / grid_density for _ in range(n)]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    speed = np.linalg.norm(field_values(spec, pts), axis=1).reshape([grid_density] * n)
    # local minima on the periodic grid
    mask = np.ones_like(speed, dtype=bool)
    for ax in range(n):
        for by in (1, -1):
            mask &= speed <= np.roll(speed, by, axis=ax)
    seeds = pts[mask.ravel()]

    found = []
    for seed in seeds:
        x = seed.copy()
        ok = False
        for _ in range(newton_steps):
            v, jac = evaluate_field(spec, x)
            if np.linalg.norm(v) < 1e-13:
                ok = True
                break
            try:
                dx = np.linalg.solve(jac, -v)
            except np.linalg.LinAlgError:
                break
            if np.linalg.norm(dx) > 0.25:   # Newton diverging off this cell
                dx *= 0.25 / np.linalg.norm(dx)
            x = np.mod(x + dx, 1.0)
        else:
            ok = np.linalg.norm(evaluate_field(spec, x)[0]) < 1e-10
        if not ok:
            continue
        if any(torus_distance(x, f) < MERGE_TOL for f in found):
            continue
        found.append(x)

    records = [_classify_fixed_point(spec, x) for x in sorted(found, key=tuple)]
    return records


def find_periodic_orbits(spec, period_cap=10.0, seeds=None, step=DEFAULT_STEP,
                         n_seeds=40, settle=20.0):
    """Isolated hyperbolic periodic orbits by forward settling + return matching.

    Seeds are integrated past a transient; a seed that neither converges to a
    fixed point nor leaves a recurrence window is refined by a Poincare-style
    period search (closest-return time), and the orbit is admitted when the
    nontrivial Floquet multiplier is off the unit circle.
    """
    if spec.dim != 2:
        return []
    rng = np.random.default_rng(0)
    if seeds is None:
        seeds = rng.random((n_seeds, 2))
    fixed = find_fixed_points(spec)
    orbits = []
    for seed in np.atleast_2d(seeds):
        x = integrate_flow(spec, seed, settle, step=step)
        if any(torus_distance(x, f.location) < 5e-3 for f in fixed):
            continue
        if np.linalg.norm(field_values(spec, x)) < 1e-8:
            continue
        period = _closest_return(spec, x, period_cap, step)
        if period is None:
            continue
        x, period = _refine_orbit(spec, x, period, step)
        if x is None:
            continue
        if any(_on_orbit(o, x) for o in orbits):
            continue
        rec = _classify_orbit(spec, x, period, step)
        if rec is not None:
            orbits.append(rec)
    return orbits


def _closest_return(spec, x, period_cap, step):
    t, pos = 0.0, np.asarray(x, float)
    best_t, best_d = None, 5e-3
    coarse = 10 * step
    left = False
    while t < period_cap:
        pos = integrate_flow(spec, pos, coarse, step=step)
        t += coarse
        d = float(torus_distance(pos, x))
        if d > 0.05:
            left = True
        if left and d < best_d:
            best_t, best_d = t, d
    return best_t


def _refine_orbit(spec, x, period, step, iters=40):
    """Newton on the return map residual phi^T(x) - x in (x, T)."""
    z = np.concatenate([x, [period]])
    for _ in range(iters):
        xt = integrate_flow(spec, z[:2], z[2], step=step)
        r = np.asarray(xt) - z[:2]
        r -= np.round(r)
        if np.linalg.norm(r) < 1e-10:
            return np.mod(z[:2], 1.0), float(z[2])
        # residual Jacobian: [Dphi - I, V(phi^T x)]
        M = _monodromy(spec, z[:2], z[2], step)
        J = np.zeros((2, 3))
        J[:, :2] = M - np.eye(2)
        J[:, 2] = field_values(spec, xt)
        dz, *_ = np.linalg.lstsq(J, -r, rcond=None)
        # gauge-fix along the flow direction to keep the base point on a section
        v0 = field_values(spec, z[:2])
        v0 /= np.linalg.norm(v0)
        dz[:2] -= (dz[:2] @ v0) * v0
        z += dz
        if z[2] <= 10 * step:
            return None, None
    return None, None


def _monodromy(spec, x, period, step):
    from .flow import cotangent_lift
    cols = []
    for v in np.eye(2):
        _, _, vt = cotangent_lift(spec, x, np.array([1.0, 0.0]), period,
                                  step=step, tangent=v)
        cols.append(vt)
    return np.array(cols).T


def _on_orbit(rec, x, tol=5e-3):
    return bool(np.min(torus_distance(rec.location, np.asarray(x))) < tol)


def _classify_orbit(spec, x, period, step):
    M = _monodromy(spec, x, period, step)
    w, vecs = np.linalg.eig(M)
    # one multiplier ~ 1 along the flow; the other decides hyperbolicity
    i_flow = int(np.argmin(np.abs(w - 1.0)))
    i_tr = 1 - i_flow
    mult = w[i_tr]
    if abs(abs(mult) - 1.0) < 1e-4:
        return None   # not hyperbolic, excluded with diagnostic upstream
    expo = np.log(abs(mult)) / period
    nsamp = max(16, int(period / 0.05))
    samples = [np.asarray(x, float)]
    for _ in range(nsamp - 1):
        samples.append(integrate_flow(spec, samples[-1], period / nsamp, step=step))
    direction = np.real(vecs[:, i_tr])
    direction /= np.linalg.norm(direction)
    stable = expo < 0
    return BasicSetRecord(
        kind="periodic-orbit", location=np.array(samples),
        rates=np.array([expo + 0j]), index=0 if stable else 1,
        lam=abs(expo),
        stable_dirs=direction.reshape(2, 1) if stable else np.zeros((2, 0)),
        unstable_dirs=np.zeros((2, 0)) if stable else direction.reshape(2, 1),
        period=period)


@dataclass
class SmaleGraph:
    nodes: list                       # BasicSetRecord, ident set
    edges: set                        # (i, j): K_i <= K_j, after pruning
    total_order: list                 # node ids, compatible with the partial order
    irreducible: bool = True

    def to_dict(self):
        return {"nodes": [n.to_dict() for n in self.nodes],
                "edges": sorted(self.edges),
                "total_order": list(self.total_order)}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1)

    def to_dot(self):
        lines = ["digraph smale {"]
        for n in self.nodes:
            lines.append(f'  k{n.ident} [label="K{n.ident} ({n.kind}, index {n.index})"];')
        for i, j in sorted(self.edges):
            lines.append(f"  k{i} -> k{j};")
        lines.append("}")
        return "\n".join(lines)


def _distance_to_set(rec, pts):
    if rec.kind == "fixed-point":
        return torus_distance(pts, rec.location)
    d = torus_distance(pts[:, None, :], rec.location[None, :, :])
    return d.min(axis=1)


def _separatrix_seeds(rec):
    base = rec.representative
    seeds = []
    for j in range(rec.unstable_dirs.shape[1]):
        u = rec.unstable_dirs[:, j]
        seeds.append(np.mod(base + SEED_OFFSET * u, 1.0))
        seeds.append(np.mod(base - SEED_OFFSET * u, 1.0))
    if rec.kind == "periodic-orbit" and rec.index > 0:
        for p in rec.location[:: max(1, len(rec.location) // 8)]:
            seeds.append(np.mod(p + SEED_OFFSET * rec.unstable_dirs[:, 0], 1.0))
            seeds.append(np.mod(p - SEED_OFFSET * rec.unstable_dirs[:, 0], 1.0))
    return seeds


TRACE_STEP = 5e-3


def build_smale_graph(basic_sets, spec, shoot_count=None, horizon=40,
                      step=TRACE_STEP):
    """Order graph from separatrix capture, pruned to the irreducible edge set."""
    nodes = []
    for i, rec in enumerate(sorted(basic_sets, key=lambda r: (-r.index, tuple(np.round(np.atleast_1d(np.asarray(r.representative)), 9))))):
        rec.ident = i
        nodes.append(rec)

    origins, seeds = [], []
    for rec in nodes:
        for seed in _separatrix_seeds(rec):
            origins.append(rec.ident)
            seeds.append(seed)
    raw_edges = set()
    if seeds:
        hits = _trace_batch(spec, np.array(seeds), nodes, horizon, step)
        for origin, hit in zip(origins, hits):
            if hit is not None and hit != origin:
                raw_edges.add((origin, hit))

    closure = _transitive_closure(raw_edges, len(nodes))
    if any((i, i) in closure for i in range(len(nodes))):
        raise TransversalityError(
            "cycle in the order relation: saddle connection or transversality "
            "failure among the detected basic sets",
            details={"edges": sorted(raw_edges)})
    edges = _transitive_reduction(closure, len(nodes))
    order = _topological_sort(edges, len(nodes))
    return SmaleGraph(nodes=nodes, edges=edges, total_order=order)


def _trace_batch(spec, seeds, nodes, horizon, step):
    """Forward-trace all seeds together; a seed is captured by the set it
    stays within CAPTURE_RADIUS of for CAPTURE_SAMPLES consecutive samples."""
    x = np.atleast_2d(np.asarray(seeds, float)).copy()
    m = len(x)
    streak = np.zeros(m, dtype=int)
    current = np.full(m, -1, dtype=int)
    result = [None] * m
    active = np.ones(m, dtype=bool)
    for _ in range(horizon):
        if not active.any():
            break
        x[active] = integrate_flow(spec, x[active], 1.0, step=step)
        dists = np.stack([_distance_to_set(r, x) for r in nodes], axis=1)
        nearest = np.argmin(dists, axis=1)
        near_enough = dists[np.arange(m), nearest] < CAPTURE_RADIUS
        same = (nearest == current) & near_enough
        streak = np.where(same, streak + 1, np.where(near_enough, 1, 0))
        current = np.where(near_enough, nearest, -1)
        done = active & (streak >= CAPTURE_SAMPLES)
        for i in np.nonzero(done)[0]:
            result[i] = int(current[i])
        active &= ~done
    return result


def _transitive_closure(edges, n):
    reach = [set() for _ in range(n)]
    for i, j in edges:
        reach[i].add(j)
    changed = True
    while changed:
        changed = False
        for i in range(n):
            new = set()
            for j in reach[i]:
                new |= reach[j]
            if not new <= reach[i]:
                reach[i] |= new
                changed = True
    out = set()
    for i in range(n):
        for j in reach[i]:
            out.add((i, j))
    return out


def _transitive_reduction(closure, n):
    """Minimal edge set with the same closure (valid for DAGs)."""
    edges = set(closure)
    for i, j in sorted(closure):
        for k in range(n):
            if (i, k) in closure and (k, j) in closure and k != i and k != j:
                edges.discard((i, j))
                break
    return edges


def _topological_sort(edges, n):
    indeg = {i: 0 for i in range(n)}
    succ = {i: [] for i in range(n)}
    for i, j in edges:
        indeg[j] += 1
        succ[i].append(j)
    ready = sorted([i for i in range(n) if indeg[i] == 0])
    order = []
    while ready:
        i = ready.pop(0)
        order.append(i)
        for j in sorted(succ[i]):
            indeg[j] -= 1
            if indeg[j] == 0:
                ready.append(j)
        ready.sort()
    if len(order) != n:
        raise TransversalityError("order graph has a cycle; no compatible total order")
    return order


def check_transversality(basic_sets, spec, step=TRACE_STEP, horizon=40):
    """Flag saddle-saddle connections (T^2 only): an unstable separatrix of
    one saddle landing on another saddle, or returning to its own.

    Report-only: returns {"ok": bool, "violations": [...]}.
    """
    report = {"ok": True, "violations": []}
    if spec.dim != 2:
        report["note"] = "transversality check restricted to dimension 2"
        return report
    saddles = [r for r in basic_sets if r.kind == "fixed-point" and r.index == 1]
    if not saddles:
        return report
    origins, seeds = [], []
    for rec in saddles:
        for seed in _separatrix_seeds(rec):
            origins.append(rec)
            seeds.append(seed)
    x = np.array(seeds)
    departed = np.zeros(len(x), dtype=bool)
    own = np.array([[r is o for r in saddles] for o in origins])
    for _ in range(horizon):
        x = integrate_flow(spec, x, 1.0, step=step)
        from_own = np.array([torus_distance(x[i], origins[i].location)
                             for i in range(len(x))])
        departed |= from_own > 0.05
        dists = np.stack(
            [torus_distance(x, r.location[None, :]) for r in saddles], axis=1)
        close = dists < CAPTURE_RADIUS
        close &= departed[:, None] | ~own   # self-hit counts once departed
        for i, j in np.argwhere(close):
            v = {"kind": "saddle-connection",
                 "from": origins[i].ident, "to": saddles[j].ident}
            if v not in report["violations"]:
                report["violations"].append(v)
    report["ok"] = not report["violations"]
    return report
