"""Three routes to projected solutions.

* :func:`solve_fixed_point` -- damped multistart iteration of the
  construction ``y <- best response by graph distance, x <- nearest choice
  point``; a heuristic whose limits are certified, never trusted.
* :func:`solve_qvi` -- grid scan of the coupled variational residual with
  operator values drawn from the unit normal sections.
* :func:`brute_force_oracle` -- exhaustive grid enumeration; the ground
  truth all other routes are compared against.

All three return a :class:`SolveResult` whose certificates passed the full
projected-solution check; an empty list is an honest outcome and comes with
an advisory rather than a fabricated answer.  Grid and multistart work units
are independent and merged in deterministic (lexicographic) order, so
repeated runs are byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InputError
from .game import (Certificate, GameInstance, MovingBox, WITNESS_GUARD,
                   check_projected_solution, constraint_set, seeded_rng)
from .geometry import (Ball, Box, constraint_axis, grid_axis, grid_points,
                       lattice_axis, probe_points, project)
from . import preferences as prefs
from .normal_op import normal_directions_batch, normal_operator

_GRID_GUARD = 10_000_000


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    """Shared knobs for all solver routes.

    ``eps`` left unset resolves to 1e-6 for analytic residuals and ``2 h``
    for grid-derived candidates; setting it overrides both.  ``strictness``
    is an extra margin a witness must clear in intersection scans.
    """

    h: float = 0.01
    eps: Optional[float] = None
    max_iter: int = 500
    damping: float = 1.0
    multistart: int = 8
    random_budget: int = 512
    seed: int = 0
    strictness: float = 0.0
    h_g: Optional[float] = None
    angular_resolution: int = 6283

    def __post_init__(self):
        if self.h <= 0:
            raise InputError("grid resolution h must be positive")
        if self.eps is not None and self.eps <= 0:
            raise InputError("residual tolerance eps must be positive")
        if not 0 < self.damping <= 1:
            raise InputError("damping must lie in (0, 1]")
        if self.max_iter < 0 or self.multistart < 1 or self.random_budget < 0:
            raise InputError("iteration, multistart and budget counts must be sensible")

    @property
    def eps_analytic(self) -> float:
        return 1e-6 if self.eps is None else self.eps

    @property
    def eps_grid(self) -> float:
        return 2.0 * self.h if self.eps is None else self.eps

    @property
    def distance_step(self) -> float:
        return self.h if self.h_g is None else self.h_g


@dataclass(frozen=True)
class QVIPoint:
    """A scanned pair with its operator selection and residual."""

    x: tuple[float, ...]
    y: tuple[float, ...]
    y_star: tuple[float, ...]
    residual: float
    witness: Optional[tuple[tuple[float, ...], tuple[float, ...]]]


@dataclass
class StartTrace:
    start: tuple[float, ...]
    iterations: int
    converged: bool
    limit_x: tuple[float, ...]
    limit_y: tuple[float, ...]
    certified: bool
    history: list = field(default_factory=list, repr=False)


@dataclass
class SolveResult:
    solver: str
    certificates: list[Certificate]
    qvi_points: list[QVIPoint] = field(default_factory=list)
    starts: list[StartTrace] = field(default_factory=list)
    cells_scanned: int = 0
    candidates: int = 0
    iterations: int = 0
    advisory: Optional[str] = None


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------

def _set_grid(s, step: float) -> np.ndarray:
    """Grid over a materialized constraint value at resolution ``step``."""
    if isinstance(s, Box):
        lo, hi = s._np
        axes = [constraint_axis(lo[j], hi[j], step) for j in range(s.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)
    bbox = s.tight_box()
    lo, hi = bbox._np
    per_axis = [min(201, grid_axis(lo[j], hi[j], step).shape[0]) for j in range(s.dim)]
    return s.project_many(grid_points(bbox, per_axis))


def _joint_axes(game: GameInstance, step: float) -> list[np.ndarray]:
    axes: list[np.ndarray] = []
    for i in range(game.player_count):
        lo, hi = game.hull_boxes[i]._np
        for j in range(game.dims[i]):
            axes.append(lattice_axis(lo[j], hi[j], step))
    return axes


def _grid_total(axes: list[np.ndarray]) -> int:
    total = 1
    for ax in axes:
        total *= ax.shape[0]
    return total


def _grid_chunks(axes: list[np.ndarray], chunk_rows: int = 65536):
    """Yield lexicographic blocks of the joint grid as (m, n) arrays."""
    shape = tuple(ax.shape[0] for ax in axes)
    total = _grid_total(axes)
    for start in range(0, total, chunk_rows):
        stop = min(total, start + chunk_rows)
        flat = np.arange(start, stop)
        coords = np.unravel_index(flat, shape)
        block = np.stack([axes[j][coords[j]] for j in range(len(axes))], axis=1)
        yield block


# ---------------------------------------------------------------------------
# Linear maxima over sets (exact for boxes and balls)
# ---------------------------------------------------------------------------

def _linear_max(s, w: np.ndarray, rng: Optional[np.random.Generator] = None,
                budget: int = 256) -> tuple[float, np.ndarray]:
    """Maximum and argmax of ``<w, .>`` over a convex set.

    Exact for boxes, balls, and polytopes with corners (attained at a
    vertex); probe-based otherwise.
    """
    if isinstance(s, Box):
        lo, hi = s._np
        arg = np.where(w >= 0, hi, lo)
        return float(arg @ w), arg
    if isinstance(s, Ball):
        c = np.array(s.center)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return float(c @ w), c
        arg = c + s.radius * w / norm
        return float(arg @ w), arg
    verts = s.vertices
    if verts.shape[0] > 0:
        vals = verts @ w
        idx = int(np.argmax(vals))
        return float(vals[idx]), verts[idx]
    if rng is None:
        rng = np.random.default_rng(0)
    pts = probe_points(s, budget, rng)
    vals = pts @ w
    idx = int(np.argmax(vals))
    return float(vals[idx]), pts[idx]


def _projection_term(game: GameInstance, x: np.ndarray, y: np.ndarray
                     ) -> tuple[float, np.ndarray]:
    """``max_{eta in X} <y - x, eta - x>`` with its maximizer."""
    w = y - x
    eta = np.empty_like(x)
    total = 0.0
    for i in range(game.player_count):
        sl = game.own_slice(i)
        val, arg = _linear_max(game.choice_sets[i], w[sl])
        eta[sl] = arg
        total += val - float(w[sl] @ x[sl])
    return total, eta


# ---------------------------------------------------------------------------
# Best response by graph distance
# ---------------------------------------------------------------------------

def best_response_distance(game: GameInstance, i: int, x, y, cfg: SolverConfig
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Grid maximizers of the graph distance over the frozen constraint.

    Returns ``(maximizers, selected)``.  When the maximum is 0 the whole
    feasible grid ties (no feasible point is strictly preferred at this
    resolution) and the selection is the projection of ``y_i`` onto the
    constraint: the iteration is stationary at true solutions.  Otherwise
    the selection is the centroid of the maximizer list, a point of the
    hull of best responses.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    k_set = constraint_set(game, i, x)
    pts = _set_grid(k_set, cfg.h)
    ctx = game.distance_context(i, cfg.distance_step)
    vals = prefs.graph_distance_many(game.preference_maps[i], ctx, y, pts)
    gmax = float(np.max(vals))
    if gmax <= 0.0:
        selected = project(k_set, y[game.own_slice(i)])
        return pts, selected
    # the zero-distance plateau is the non-preferred region, never a maximizer
    maximizers = pts[(vals >= gmax - cfg.eps_analytic) & (vals > 0.0)]
    return maximizers, np.mean(maximizers, axis=0)


def _multistart_points(game: GameInstance, cfg: SolverConfig) -> np.ndarray:
    bbox = game.x_bbox
    corners = grid_points(bbox, [2] * game.n)
    lo, hi = bbox._np
    center = (lo + hi) / 2.0
    rng = seeded_rng(cfg.seed, 37)
    extras = []
    axes = [grid_axis(lo[j], hi[j], cfg.h) for j in range(game.n)]
    for _ in range(max(0, cfg.multistart)):
        extras.append([ax[rng.integers(0, ax.shape[0])] for ax in axes])
    raw = np.vstack([corners, center[None, :], np.array(extras).reshape(-1, game.n)])
    projected = game.project_choice_many(raw)
    seen = set()
    picks = []
    for row in projected:
        key = tuple(np.round(row, 12))
        if key not in seen:
            seen.add(key)
            picks.append(row)
        if len(picks) >= cfg.multistart:
            break
    return np.array(picks)


def solve_fixed_point(game: GameInstance, cfg: SolverConfig) -> SolveResult:
    """Damped multistart iteration of the projection/best-response map.

    Every limit point is passed through the full projected-solution check;
    only certified points are returned.  Convergence is not guaranteed --
    an empty certificate list with an advisory is the honest failure mode.
    """
    result = SolveResult(solver="solve-fp", certificates=[])
    raw_certs: list[Certificate] = []
    for start in _multistart_points(game, cfg):
        x = start.copy()
        y = start.copy()
        trace = StartTrace(start=tuple(start), iterations=0, converged=False,
                           limit_x=(), limit_y=(), certified=False)
        for _ in range(cfg.max_iter):
            trace.iterations += 1
            result.iterations += 1
            target = np.empty_like(y)
            for i in range(game.player_count):
                _, selected = best_response_distance(game, i, x, y, cfg)
                target[game.own_slice(i)] = selected
            y_next = (1.0 - cfg.damping) * y + cfg.damping * target
            x_next = game.project_choice(y_next)
            delta = float(np.linalg.norm(np.concatenate([x_next - x, y_next - y])))
            trace.history.append((tuple(x_next), tuple(y_next)))
            x, y = x_next, y_next
            if delta <= cfg.eps_analytic:
                trace.converged = True
                break
        # one undamped step before certification: exact fixed points are
        # unchanged (the tie-break is stationary there), while damped limits
        # that crept up to a best-response vertex snap onto it
        target = np.empty_like(y)
        for i in range(game.player_count):
            _, selected = best_response_distance(game, i, x, y, cfg)
            target[game.own_slice(i)] = selected
        y = target
        x = game.project_choice(y)
        trace.limit_x = tuple(x)
        trace.limit_y = tuple(y)
        cert = check_projected_solution(game, x, y, cfg, eps=cfg.eps_grid)
        trace.certified = cert.passed
        if cert.passed:
            raw_certs.append(cert)
        result.starts.append(trace)
    result.certificates = _cluster_certificates(raw_certs, 2.0 * cfg.h)
    result.candidates = len(raw_certs)
    if not result.certificates:
        result.advisory = ("no multistart converged to a certified projected "
                           "solution; run the oracle at this resolution")
    return result


# ---------------------------------------------------------------------------
# QVI residual
# ---------------------------------------------------------------------------

def qvi_residual(game: GameInstance, x, y, y_star, cfg: SolverConfig
                 ) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """Worst violation of the coupled variational inequality at ``(x, y)``.

    Maximizes ``-(<x - y, eta - x> + <y_star, z - y>)`` over probed
    ``(eta, z)`` in the choice product times the frozen constraint; the two
    coordinates decouple, and for box and ball factors the maxima are exact
    (attained at extreme points, which the probe family contains).  A value
    at or below the grid tolerance certifies the pair at this resolution.
    ``y_star`` is the caller's selection from the unit normal product.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    y_star = np.asarray(y_star, dtype=np.float64).reshape(-1)
    if x.shape[0] != game.n or y.shape[0] != game.n or y_star.shape[0] != game.n:
        raise InputError("joint vector dimension mismatch")
    proj_val, eta = _projection_term(game, x, y)
    total = proj_val
    z = np.empty_like(y)
    for i in range(game.player_count):
        sl = game.own_slice(i)
        k_set = game.constraint_maps[i].materialize(x)
        resid = float(np.linalg.norm(y[sl] - project(k_set, y[sl])))
        if resid > cfg.eps_grid + 1e-12:
            raise InputError(
                f"y is infeasible for player {i + 1} (residual {resid:.3e})")
        rng = seeded_rng(cfg.seed, 41, i, arrays=(x, y))
        val, arg = _linear_max(k_set, -y_star[sl], rng=rng, budget=cfg.random_budget)
        z[sl] = arg
        total += val - float(-y_star[sl] @ y[sl])
    return total, (eta, z)


def _candidate_terms(game: GameInstance, xs: np.ndarray, ys: np.ndarray,
                     cfg: SolverConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Best per-player residual contribution over operator candidates.

    Returns ``(terms, y_star, ok)`` where ``terms[r, i]`` is the minimal
    ``max_z <-(y*_i), z - y_i>`` over the candidates at row ``r`` (the
    stored direction, plus 0 for empty-preference points), ``y_star`` the
    minimizing selection, and ``ok`` flags rows where every player offered a
    candidate.
    """
    m = xs.shape[0]
    terms = np.zeros((m, game.player_count))
    y_star = np.zeros((m, game.n))
    ok = np.ones(m, dtype=bool)
    for i in range(game.player_count):
        sl = game.own_slice(i)
        dirs, full_mask, dir_ok = normal_directions_batch(game, i, ys, cfg)
        missing = ~(full_mask | dir_ok)
        for r in np.nonzero(missing)[0]:
            sample = normal_operator(game, i, ys[r], cfg)
            if sample.is_full_space:
                full_mask[r] = True
            elif not sample.is_empty:
                dirs[r] = sample.as_array[0]
                dir_ok[r] = True
        ok &= full_mask | dir_ok
        cmap = game.constraint_maps[i]
        w = -dirs
        if isinstance(cmap, MovingBox):
            lo, hi = cmap.bounds_many(xs)
            mx = np.sum(np.where(w > 0, hi, lo) * w, axis=1)
        else:
            mx = cmap.linear_max_many(xs, w)
        term_dir = mx - np.sum(w * ys[:, sl], axis=1)
        # full-space factors admit the zero vector, whose term vanishes
        use_dir = dir_ok & (~full_mask | (term_dir < 0.0))
        terms[:, i] = np.where(use_dir, term_dir, 0.0)
        terms[~(dir_ok | full_mask), i] = np.inf
        y_star[:, sl] = np.where(use_dir[:, None], dirs, 0.0)
    return terms, y_star, ok


def _projection_term_many(game: GameInstance, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    w = ys - xs
    total = np.zeros(xs.shape[0])
    for i in range(game.player_count):
        sl = game.own_slice(i)
        s = game.choice_sets[i]
        wi = w[:, sl]
        if isinstance(s, Box):
            lo, hi = s._np
            mx = np.sum(np.where(wi > 0, hi, lo) * wi, axis=1)
        elif isinstance(s, Ball):
            c = np.array(s.center)
            mx = wi @ c + s.radius * np.linalg.norm(wi, axis=1)
        else:
            raise InputError("choice sets must be boxes or balls")
        total += mx - np.sum(wi * xs[:, sl], axis=1)
    return total


def _feasibility_mask(game: GameInstance, xs: np.ndarray, ys: np.ndarray,
                      tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Membership of ``y_i`` in ``K_i(x)`` rowwise, with residual estimates."""
    m = xs.shape[0]
    mask = np.ones(m, dtype=bool)
    residual = np.zeros((m, game.player_count))
    for i in range(game.player_count):
        sl = game.own_slice(i)
        cmap = game.constraint_maps[i]
        if isinstance(cmap, MovingBox):
            lo, hi = cmap.bounds_many(xs)
            clipped = np.clip(ys[:, sl], lo, hi)
            res = np.linalg.norm(ys[:, sl] - clipped, axis=1)
        else:
            normals = np.array(cmap.normals, dtype=np.float64)
            offs = cmap.offsets.eval_many(xs)
            viol = ys[:, sl] @ normals.T - offs
            res = np.max(np.clip(viol, 0.0, None), axis=1)
        residual[:, i] = res
        mask &= res <= tol
    return mask, residual


def _witness_prefilter(game: GameInstance, xs: np.ndarray, ys: np.ndarray,
                       cfg: SolverConfig) -> np.ndarray:
    """Rows where some player has a strictly preferred feasible point among
    the shared probe pool.  A hit is proof of a nonempty intersection, so
    filtered rows can never certify; survivors are re-checked exactly."""
    m = xs.shape[0]
    has_witness = np.zeros(m, dtype=bool)
    for i in range(game.player_count):
        sl = game.own_slice(i)
        lo_q, hi_q = game.hull_boxes[i]._np
        axes = [lattice_axis(lo_q[j], hi_q[j], cfg.h) for j in range(game.dims[i])]
        mesh = np.meshgrid(*axes, indexing="ij")
        pool = np.stack([a.reshape(-1) for a in mesh], axis=1)
        rng = seeded_rng(cfg.seed, 43, i)
        if cfg.random_budget:
            pool = np.vstack([pool, rng.uniform(lo_q, hi_q, size=(cfg.random_budget, game.dims[i]))])
        cmap = game.constraint_maps[i]
        chunk = max(1, int(4_000_000 // max(1, pool.shape[0])))
        for start in range(0, m, chunk):
            rows = slice(start, min(m, start + chunk))
            if isinstance(cmap, MovingBox):
                lo, hi = cmap.bounds_many(xs[rows])
                in_k = np.all((pool[None, :, :] >= lo[:, None, :] - 1e-12)
                              & (pool[None, :, :] <= hi[:, None, :] + 1e-12), axis=2)
            else:
                normals = np.array(cmap.normals, dtype=np.float64)
                offs = cmap.offsets.eval_many(xs[rows])
                viol = pool @ normals.T
                in_k = np.all(viol[None, :, :] <= offs[:, None, :] + 1e-12, axis=2)
            gains = prefs.strict_gain_outer(game.preference_maps[i], ys[rows], pool)
            has_witness[rows] |= np.any(
                in_k & (gains > cfg.strictness + WITNESS_GUARD), axis=1)
    return has_witness


def solve_qvi(game: GameInstance, cfg: SolverConfig) -> SolveResult:
    """Grid scan for pairs solving the coupled variational inequality.

    Scans joint points ``y`` of the hull grid with ``x`` taken as the
    nearest choice point (the projection relation is necessary, so other
    pairs cannot solve), keeps pairs whose best residual over operator
    candidates is at most the grid tolerance, and certifies each survivor
    with the full projected-solution check.  An empty result is valid.
    """
    axes = _joint_axes(game, cfg.h)
    total = _grid_total(axes)
    if total > _GRID_GUARD:
        raise InputError(
            f"scan grid of {total} cells exceeds the guard ({_GRID_GUARD}); use a coarser h")
    result = SolveResult(solver="solve-qvi", certificates=[])
    result.cells_scanned = total
    keep_x: list[np.ndarray] = []
    keep_y: list[np.ndarray] = []
    keep_star: list[np.ndarray] = []
    keep_res: list[float] = []
    eps_keep = cfg.eps_grid + 1e-12
    for block in _grid_chunks(axes):
        ys = block
        xs = game.project_choice_many(ys)
        feasible, _ = _feasibility_mask(game, xs, ys, cfg.eps_grid)
        if not np.any(feasible):
            continue
        xs_f, ys_f = xs[feasible], ys[feasible]
        terms, y_star, ok = _candidate_terms(game, xs_f, ys_f, cfg)
        residual = _projection_term_many(game, xs_f, ys_f) + np.sum(terms, axis=1)
        keep = ok & (residual <= eps_keep)
        for idx in np.nonzero(keep)[0]:
            keep_x.append(xs_f[idx])
            keep_y.append(ys_f[idx])
            keep_star.append(y_star[idx])
            keep_res.append(float(residual[idx]))
    result.candidates = len(keep_x)
    raw_certs: list[Certificate] = []
    for xv, yv, sv, rv in zip(keep_x, keep_y, keep_star, keep_res):
        res_exact, witness = qvi_residual(game, xv, yv, sv, cfg)
        result.qvi_points.append(QVIPoint(
            x=tuple(xv), y=tuple(yv), y_star=tuple(sv),
            residual=res_exact,
            witness=(tuple(witness[0]), tuple(witness[1]))))
        cert = check_projected_solution(game, xv, yv, cfg, eps=cfg.eps_grid)
        if cert.passed:
            raw_certs.append(cert)
    result.certificates = _cluster_certificates(raw_certs, 2.0 * cfg.h)
    return result


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------

def brute_force_oracle(game: GameInstance, cfg: SolverConfig) -> SolveResult:
    """Exhaustive enumeration over the hull grid.

    For each grid ``y`` the candidate ``x`` is its nearest choice point;
    pairs must pass feasibility, the shared-pool intersection prefilter
    (whose hits are proofs of non-emptiness), and finally the full
    projected-solution check at tolerance ``2 h``.  Survivors are clustered
    within radius ``2 h`` (single linkage) and reported through cluster
    representatives carrying member ranges.
    """
    axes = _joint_axes(game, cfg.h)
    total = _grid_total(axes)
    if total > _GRID_GUARD:
        raise InputError(
            f"oracle grid of {total} cells exceeds the guard ({_GRID_GUARD}); use a coarser h")
    result = SolveResult(solver="oracle", certificates=[])
    result.cells_scanned = total
    survivors: list[np.ndarray] = []
    for block in _grid_chunks(axes):
        ys = block
        xs = game.project_choice_many(ys)
        feasible, _ = _feasibility_mask(game, xs, ys, cfg.eps_grid)
        if not np.any(feasible):
            continue
        xs_f, ys_f = xs[feasible], ys[feasible]
        witnessed = _witness_prefilter(game, xs_f, ys_f, cfg)
        for idx in np.nonzero(~witnessed)[0]:
            survivors.append(np.concatenate([xs_f[idx], ys_f[idx]]))
    result.candidates = len(survivors)
    raw_certs: list[Certificate] = []
    for row in survivors:
        cert = check_projected_solution(game, row[:game.n], row[game.n:], cfg,
                                        eps=cfg.eps_grid)
        if cert.passed:
            raw_certs.append(cert)
    result.certificates = _cluster_certificates(raw_certs, 2.0 * cfg.h)
    return result


# ---------------------------------------------------------------------------
# Clustering
# ---------------------------------------------------------------------------

def _cluster_certificates(certs: list[Certificate], radius: float) -> list[Certificate]:
    """Single-linkage clustering of certificates on joint (x, y) coordinates.

    Each cluster is reported by its member with the smallest residual sum
    (ties broken lexicographically), annotated with the member count and the
    per-coordinate ranges over the cluster.
    """
    if not certs:
        return []
    pts = np.array([c.x + c.y for c in certs])
    order = np.lexsort(pts.T[::-1])
    pts = pts[order]
    certs = [certs[int(i)] for i in order]
    m, d = pts.shape
    parent = list(range(m))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    cell = np.floor(pts / max(radius, 1e-12)).astype(np.int64)
    buckets: dict[tuple, list[int]] = {}
    for r in range(m):
        buckets.setdefault(tuple(cell[r]), []).append(r)
    offsets = np.array(np.meshgrid(*([[-1, 0, 1]] * d), indexing="ij")).reshape(d, -1).T
    r2 = radius * radius + 1e-15
    for r in range(m):
        base = cell[r]
        for off in offsets:
            key = tuple(base + off)
            for s in buckets.get(key, ()):
                if s > r and float(np.sum((pts[r] - pts[s]) ** 2)) <= r2:
                    union(r, s)

    groups: dict[int, list[int]] = {}
    for r in range(m):
        groups.setdefault(find(r), []).append(r)

    out: list[Certificate] = []
    for root in sorted(groups):
        members = groups[root]
        def residual_sum(idx: int) -> float:
            c = certs[idx]
            return c.projection_residual + sum(p.membership_residual for p in c.players)
        rep_idx = min(members, key=lambda idx: (residual_sum(idx), tuple(pts[idx])))
        rep = certs[rep_idx]
        member_pts = pts[members]
        n = len(rep.x)
        out.append(Certificate(
            x=rep.x, y=rep.y, players=rep.players,
            projection_residual=rep.projection_residual,
            verdict=rep.verdict, reason=rep.reason,
            eps=rep.eps, h=rep.h, budget=rep.budget, seed=rep.seed,
            cluster_size=len(members),
            x_range=(tuple(member_pts[:, :n].min(axis=0)), tuple(member_pts[:, :n].max(axis=0))),
            y_range=(tuple(member_pts[:, n:].min(axis=0)), tuple(member_pts[:, n:].max(axis=0))),
        ))
    out.sort(key=lambda c: (c.x, c.y))
    return out


# ---------------------------------------------------------------------------
# Equivalence diagnostics
# ---------------------------------------------------------------------------

def equivalence_scan(game: GameInstance, cfg: SolverConfig
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Grid pairs passing the variational residual vs. the direct check.

    Returns two arrays of joint ``y`` grid points (with ``x`` the nearest
    choice point): those whose best operator residual is within tolerance,
    and those passing the full projected-solution check.  On instances with
    convex-valued, boundary-attained preferences the two sets coincide up
    to one grid cell.
    """
    axes = _joint_axes(game, cfg.h)
    if _grid_total(axes) > _GRID_GUARD:
        raise InputError("equivalence scan grid exceeds the guard; use a coarser h")
    qvi_rows: list[np.ndarray] = []
    nep_rows: list[np.ndarray] = []
    for block in _grid_chunks(axes):
        ys = block
        xs = game.project_choice_many(ys)
        feasible, _ = _feasibility_mask(game, xs, ys, cfg.eps_grid)
        if not np.any(feasible):
            continue
        xs_f, ys_f = xs[feasible], ys[feasible]
        terms, _, ok = _candidate_terms(game, xs_f, ys_f, cfg)
        residual = _projection_term_many(game, xs_f, ys_f) + np.sum(terms, axis=1)
        for idx in np.nonzero(ok & (residual <= cfg.eps_analytic + 1e-12))[0]:
            qvi_rows.append(ys_f[idx])
        for idx in range(xs_f.shape[0]):
            cert = check_projected_solution(game, xs_f[idx], ys_f[idx], cfg,
                                            eps=cfg.eps_grid)
            if cert.passed:
                nep_rows.append(ys_f[idx])
    to_arr = lambda rows: (np.array(rows).reshape(-1, game.n) if rows
                           else np.zeros((0, game.n)))
    return to_arr(qvi_rows), to_arr(nep_rows)
