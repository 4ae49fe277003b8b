"""Set-valued strict-preference maps and their graph-distance function.

A preference map assigns to each joint strategy ``x`` the set of own-block
strategies a player strictly prefers to the current one.  Three variants:

* ``UtilityInduced`` -- preferred points are strict upper level sets of a
  polynomial utility, ``{z : u(x_-i, z) > u(x) + margin}``.
* ``DirectionField`` -- preferred points form the open half-space
  ``{z : <c(x), z - x_i> > offset}`` for an affine field ``c``; when
  ``c(x) = 0`` the set is empty (the strict inequality has no solutions).
* ``Sampled`` -- membership is a finite table over a declared grid; queries
  off the grid are input errors.

The graph distance of a preference map is the Euclidean distance from a pair
``(y, z)`` to the closed complement of the preference graph
``{(x, z) : z preferred at x}``.  It is 0 exactly on non-preferred pairs,
positive on preferred ones, and 1-Lipschitz.  Half-space-structured variants
get exact closed forms; everything else falls back to a distance cloud built
once per context from a grid scan of the complement boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Union

import numpy as np
from scipy.optimize import linprog

from .errors import InputError
from .expressions import AffineMap, Polynomial
from .geometry import Box, ConvexSet, probe_points

_SQRT2 = math.sqrt(2.0)

#: grid-point matching tolerance for the sampled variant
GRID_MATCH_TOL = 1e-9


# ---------------------------------------------------------------------------
# Variants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UtilityInduced:
    """Preference induced by a polynomial utility over the joint vector."""

    player_index: int
    n_vars: int
    own_start: int
    own_dim: int
    utility: Polynomial
    margin: float = 0.0

    def __post_init__(self):
        if self.utility.n_vars != self.n_vars:
            raise InputError("utility arity does not match the joint dimension")
        if self.margin < 0:
            raise InputError("strictness margin must be nonnegative")

    @cached_property
    def gain(self) -> Polynomial:
        """Polynomial over (x, z) variables: u(x_-i, z) - u(x) - margin."""
        n, k = self.n_vars, self.own_dim
        identity = {j: j for j in range(n)}
        swapped = dict(identity)
        for j in range(k):
            swapped[self.own_start + j] = n + j
        u_z = self.utility.remap(swapped, n + k)
        u_x = self.utility.remap(identity, n + k)
        return u_z - u_x - Polynomial.constant(self.margin, n + k)

    @cached_property
    def own_gradient(self) -> list[Polynomial]:
        return [self.utility.partial(self.own_start + j) for j in range(self.own_dim)]


@dataclass(frozen=True)
class DirectionField:
    """Open half-space preference ``{z : <c(x), z - x_i> > offset}``."""

    player_index: int
    n_vars: int
    own_start: int
    own_dim: int
    c: AffineMap
    offset: float = 0.0

    def __post_init__(self):
        if self.c.in_dim != self.n_vars or self.c.out_dim != self.own_dim:
            raise InputError("direction field shape does not match player dimensions")
        if self.offset < 0:
            raise InputError("direction offset must be nonnegative")

    @cached_property
    def gain(self) -> Polynomial:
        n, k = self.n_vars, self.own_dim
        rows = self.c.to_polynomials(n)
        total = Polynomial.constant(-self.offset, n + k)
        identity = {j: j for j in range(n)}
        for j in range(k):
            cj = rows[j].remap(identity, n + k)
            zj = Polynomial.variable(n + j, n + k)
            xj = Polynomial.variable(self.own_start + j, n + k)
            total = total + cj * (zj - xj)
        return total


@dataclass(frozen=True)
class Sampled:
    """Tabulated preference over a declared finite grid.

    ``at_points`` are joint strategies, ``zpoints`` the own-block universe,
    ``prefers[r][c]`` says whether ``zpoints[c]`` is preferred at
    ``at_points[r]``.
    """

    player_index: int
    n_vars: int
    own_start: int
    own_dim: int
    at_points: tuple[tuple[float, ...], ...]
    zpoints: tuple[tuple[float, ...], ...]
    prefers: tuple[tuple[bool, ...], ...]

    def __post_init__(self):
        if not self.at_points or not self.zpoints:
            raise InputError("sampled preference needs at least one grid point")
        for p in self.at_points:
            if len(p) != self.n_vars:
                raise InputError("sampled at-point dimension mismatch")
        for z in self.zpoints:
            if len(z) != self.own_dim:
                raise InputError("sampled z-point dimension mismatch")
        if len(self.prefers) != len(self.at_points) or any(
                len(row) != len(self.zpoints) for row in self.prefers):
            raise InputError("sampled table shape mismatch")

    @cached_property
    def _at(self) -> np.ndarray:
        return np.array(self.at_points, dtype=np.float64)

    @cached_property
    def _z(self) -> np.ndarray:
        return np.array(self.zpoints, dtype=np.float64)

    @cached_property
    def _table(self) -> np.ndarray:
        return np.array(self.prefers, dtype=bool)

    def _locate(self, arr: np.ndarray, v: np.ndarray, what: str) -> int:
        dists = np.max(np.abs(arr - v), axis=1)
        idx = int(np.argmin(dists))
        if dists[idx] > GRID_MATCH_TOL:
            raise InputError(
                f"sampled preference queried off its declared grid ({what} {v.tolist()})")
        return idx


PreferenceMap = Union[UtilityInduced, DirectionField, Sampled]


def _own_of(p: PreferenceMap, x: np.ndarray) -> np.ndarray:
    return x[..., p.own_start:p.own_start + p.own_dim]


# ---------------------------------------------------------------------------
# Strict gain evaluation (shared core of preferred / witness scanning)
# ---------------------------------------------------------------------------

def strict_gain_pairs(p: PreferenceMap, xs: np.ndarray, zs: np.ndarray) -> np.ndarray:
    """Row-paired strict gain; positive exactly on preferred pairs.

    Utility gains are computed as two evaluations of the *same* polynomial
    through the same code path, so equal arguments cancel bitwise and the
    strict comparison at ``z == x_i`` is exactly false.  For the sampled
    variant the magnitude is conventional (+/-1); only the sign matters.
    """
    xs = np.asarray(xs, dtype=np.float64).reshape(-1, p.n_vars)
    zs = np.asarray(zs, dtype=np.float64).reshape(-1, p.own_dim)
    if isinstance(p, UtilityInduced):
        swapped = xs.copy()
        swapped[:, p.own_start:p.own_start + p.own_dim] = zs
        return p.utility.eval_many(swapped) - p.utility.eval_many(xs) - p.margin
    if isinstance(p, DirectionField):
        c = p.c.eval_many(xs)
        return np.sum(c * (zs - _own_of(p, xs)), axis=1) - p.offset
    out = np.empty(xs.shape[0])
    for r in range(xs.shape[0]):
        i = p._locate(p._at, xs[r], "at-point")
        j = p._locate(p._z, zs[r], "z-point")
        out[r] = 1.0 if p._table[i, j] else -1.0
    return out


def strict_gain_outer(p: PreferenceMap, xs: np.ndarray, zs: np.ndarray) -> np.ndarray:
    """Strict gain on the cross product of ``xs`` rows and ``zs`` rows."""
    xs = np.asarray(xs, dtype=np.float64).reshape(-1, p.n_vars)
    zs = np.asarray(zs, dtype=np.float64).reshape(-1, p.own_dim)
    if isinstance(p, UtilityInduced):
        m, k = xs.shape[0], zs.shape[0]
        base = p.utility.eval_many(xs)
        sl = slice(p.own_start, p.own_start + p.own_dim)
        out = np.empty((m, k))
        chunk = max(1, int(2_000_000 // max(1, k)))
        for start in range(0, m, chunk):
            stop = min(m, start + chunk)
            block = xs[start:stop]
            joint = np.repeat(block, k, axis=0)
            joint[:, sl] = np.tile(zs, (stop - start, 1))
            vals = p.utility.eval_many(joint).reshape(stop - start, k)
            out[start:stop] = vals - base[start:stop, None] - p.margin
        return out
    if isinstance(p, DirectionField):
        c = p.c.eval_many(xs)                      # (m, k)
        inner = c @ zs.T                           # (m, |z|)
        own = np.sum(c * _own_of(p, xs), axis=1)   # (m,)
        return inner - own[:, None] - p.offset
    out = np.empty((xs.shape[0], zs.shape[0]))
    for r in range(xs.shape[0]):
        i = p._locate(p._at, xs[r], "at-point")
        for s in range(zs.shape[0]):
            j = p._locate(p._z, zs[s], "z-point")
            out[r, s] = 1.0 if p._table[i, j] else -1.0
    return out


def preferred(p: PreferenceMap, x, z) -> bool:
    """True iff ``z`` lies in the preference set at joint strategy ``x``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if x.shape[0] != p.n_vars:
        raise InputError(f"joint strategy has dimension {x.shape[0]}, expected {p.n_vars}")
    if z.shape[0] != p.own_dim:
        raise InputError(f"own strategy has dimension {z.shape[0]}, expected {p.own_dim}")
    return bool(strict_gain_pairs(p, x[None, :], z[None, :])[0] > 0.0)


def preferred_many(p: PreferenceMap, x, zs: np.ndarray) -> np.ndarray:
    """Vector of membership flags for many candidate ``z`` at one ``x``."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return strict_gain_outer(p, x, zs)[0] > 0.0


# ---------------------------------------------------------------------------
# Convex-hull view
# ---------------------------------------------------------------------------

def _in_convex_hull(points: np.ndarray, target: np.ndarray, tol: float = 1e-9) -> bool:
    if points.shape[0] == 0:
        return False
    res = linprog(
        c=np.zeros(points.shape[0]),
        A_eq=np.vstack([points.T, np.ones(points.shape[0])]),
        b_eq=np.concatenate([target, [1.0]]),
        bounds=(0, None),
        method="highs",
    )
    if res.status != 0:
        return False
    combo = points.T @ res.x
    return float(np.max(np.abs(combo - target))) <= tol


def own_concavity_known(p: UtilityInduced) -> bool:
    """Cheap structural test that the utility is concave in the own block,
    which makes strict upper level sets convex (hull view == raw view).

    Detects own-degree <= 1, and constant-coefficient own-quadratics with a
    negative-semidefinite quadratic form.  Anything fancier takes the
    sampled-hull path.
    """
    n, k, s = p.n_vars, p.own_dim, p.own_start
    own = range(s, s + k)
    own_degree = 0
    quad = np.zeros((k, k))
    for e, c in p.utility.terms:
        deg = sum(e[j] for j in own)
        own_degree = max(own_degree, deg)
        if deg == 2:
            if sum(e) != 2:
                return False  # rival-modulated quadratic term
            idx = [j - s for j in own for _ in range(e[j])]
            if len(idx) == 1:
                quad[idx[0], idx[0]] += c
            else:
                quad[idx[0], idx[1]] += c / 2.0
                quad[idx[1], idx[0]] += c / 2.0
        elif deg > 2:
            return False
    if own_degree <= 1:
        return True
    return bool(np.all(np.linalg.eigvalsh(quad) <= 1e-12))


def hull_preferred(p: PreferenceMap, x, z, sample_budget: int = 256,
                   window: Optional[ConvexSet] = None,
                   rng: Optional[np.random.Generator] = None) -> bool:
    """True iff ``z`` lies in the convex hull of the preference set at ``x``.

    Exact for half-space variants (they equal their own hulls) and for
    utilities with a known-concave own block; otherwise a hull-of-samples
    test, which under-approximates the true hull at the stated budget.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if isinstance(p, DirectionField):
        return preferred(p, x, z)
    if isinstance(p, UtilityInduced) and own_concavity_known(p):
        return preferred(p, x, z)
    if isinstance(p, Sampled):
        # z may fall between declared grid points; the hull is continuous
        i = p._locate(p._at, x, "at-point")
        pts = p._z[p._table[i]]
        return _in_convex_hull(pts, z)
    if preferred(p, x, z):
        return True
    if window is None:
        own = _own_of(p, x)
        window = Box(tuple(own - 2.0), tuple(own + 2.0))
    samples = sample_preferred(p, x, window, sample_budget, rng=rng)
    return _in_convex_hull(samples, z)


def sample_preferred(p: PreferenceMap, x, region: ConvexSet, budget: int,
                     rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Up to ``budget`` preferred points inside ``region``.

    An empty result means no preferred point was found at this budget, not
    a proof that the preference set misses the region.
    """
    if budget < 1:
        raise InputError("sample budget must be at least 1")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if isinstance(p, Sampled):
        i = p._locate(p._at, x, "at-point")
        pts = p._z[p._table[i]]
        keep = [z for z in pts if region.contains(z, tol=GRID_MATCH_TOL)]
        return np.array(keep[:budget]).reshape(-1, p.own_dim)
    if rng is None:
        rng = np.random.default_rng(0)
    candidates = probe_points(region, budget, rng)
    mask = preferred_many(p, x, candidates)
    return candidates[mask]


# ---------------------------------------------------------------------------
# Graph distance
# ---------------------------------------------------------------------------

@dataclass
class GraphDistanceContext:
    """Bounded window and resolution for graph-distance queries.

    ``region`` is a box over the joint-times-own product space (the search
    domain inflated by ``margin``); ``h_g`` is the complement grid step used
    when no closed form applies.  The context carries the per-preference
    complement clouds so repeated queries stay cheap.
    """

    region: Box
    h_g: float
    margin: float = 1.0
    _clouds: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.h_g <= 0:
            raise InputError("distance grid step must be positive")


def context_for(joint_box: Box, own_box: Box, h_g: float, margin: float = 1.0) -> GraphDistanceContext:
    region = Box(
        tuple(joint_box.inflate(margin).lower) + tuple(own_box.inflate(margin).lower),
        tuple(joint_box.inflate(margin).upper) + tuple(own_box.inflate(margin).upper),
    )
    return GraphDistanceContext(region=region, h_g=h_g, margin=margin)


def _halfspace_form(p: PreferenceMap) -> Optional[tuple[np.ndarray, float]]:
    """Constant direction vector and offset when the complement is a global
    half-space ``{(x, z) : <c, z - x_i> <= offset}``."""
    if isinstance(p, DirectionField) and p.c.is_constant():
        c = np.array(p.c.offset, dtype=np.float64)
        if np.any(c != 0.0):
            return c, p.offset
        return None
    if isinstance(p, UtilityInduced):
        grads = p.own_gradient
        if all(g.is_constant() for g in grads):
            c = np.array([g.constant_value() for g in grads])
            if np.any(c != 0.0):
                return c, p.margin
        return None
    return None


def _rival_scalar_form(p: PreferenceMap) -> Optional[tuple[AffineMap, np.ndarray]]:
    """Affine scalar field over rival coordinates, for 1-D own blocks with
    zero offset: complement is ``{c(x_-i) * (z - x_i) <= 0}``, a union of two
    orthogonal half-space intersections with an exact distance."""
    if p.own_dim != 1:
        return None
    if isinstance(p, DirectionField):
        if p.offset != 0.0 or p.c.is_constant():
            return None
        cmap = p.c
    elif isinstance(p, UtilityInduced):
        if p.margin != 0.0:
            return None
        g = p.own_gradient[0]
        if g.is_constant() or g.degree() > 1:
            return None
        # own-linear utility: gain factors as c(x) * (z - x_i)
        cmap = AffineMap.from_polynomials([g])
    else:
        return None
    a = np.array(cmap.matrix[0], dtype=np.float64)
    if np.any(a[p.own_start:p.own_start + 1] != 0.0):
        return None
    if np.all(a == 0.0):
        return None
    return cmap, a


def _grid_axis(lo: float, hi: float, step: float) -> np.ndarray:
    n = max(2, int(math.ceil((hi - lo) / step - 1e-9)) + 1)
    return np.linspace(lo, hi, n)


class _ComplementCloud:
    """Boundary points of the complement of a preference graph on a grid.

    Built once per (preference, context); queries are vectorized minimum
    distances to the stored points.  Inactive coordinates (those the strict
    gain never reads) are dropped exactly: the nearest complement point can
    always match the query there.
    """

    def __init__(self, p: PreferenceMap, ctx: GraphDistanceContext):
        n, k = p.n_vars, p.own_dim
        lo, hi = ctx.region._np
        if isinstance(p, Sampled):
            pairs = []
            for r, xp in enumerate(p._at):
                for s, zp in enumerate(p._z):
                    if not p._table[r, s]:
                        pairs.append(np.concatenate([xp, zp]))
            self.active = np.arange(n + k)
            self.points = np.array(pairs).reshape(-1, n + k)
            return
        gain = p.gain
        active = [j for j in range(n + k) if gain.uses_variable(j)]
        for j in range(n, n + k):
            if j not in active:
                active.append(j)
        active = sorted(active)
        self.active = np.array(active, dtype=np.int64)
        axes = [_grid_axis(lo[j], hi[j], ctx.h_g) for j in active]
        shape = tuple(len(ax) for ax in axes)
        total = int(np.prod(shape))
        if total > 120_000_000:
            raise InputError(
                f"distance grid of {total} cells is too large; increase h_g")
        self.points = self._boundary_points(gain, active, axes, shape)
        if self.points.shape[0] == 0:
            raise InputError(
                "preference covers the whole distance region at this resolution; "
                "cannot build a complement cloud")

    def _boundary_points(self, gain: Polynomial, active: list[int],
                         axes: list[np.ndarray], shape: tuple[int, ...]) -> np.ndarray:
        # slab-wise scan along the first active axis keeps memory bounded
        d = len(axes)
        rest_axes = axes[1:]
        rest_mesh = np.meshgrid(*rest_axes, indexing="ij") if rest_axes else []
        rest_flat = (np.stack([m.reshape(-1) for m in rest_mesh], axis=1)
                     if rest_axes else np.zeros((1, 0)))
        m_rest = rest_flat.shape[0]
        full = np.zeros((m_rest, gain.n_vars))

        def slab_mask(i: int) -> np.ndarray:
            full[:, :] = 0.0
            full[:, active[0]] = axes[0][i]
            for col, var in enumerate(active[1:]):
                full[:, var] = rest_flat[:, col]
            return (gain.eval_many(full) <= 0.0).reshape(shape[1:] if d > 1 else (1,))

        boundary: list[np.ndarray] = []
        prev_mask = None
        cur_mask = slab_mask(0)
        for i in range(shape[0]):
            next_mask = slab_mask(i + 1) if i + 1 < shape[0] else None
            pref_here = ~cur_mask
            neighbor_pref = np.zeros_like(cur_mask)
            for axis in range(cur_mask.ndim):
                shifted = np.roll(pref_here, 1, axis=axis)
                shifted2 = np.roll(pref_here, -1, axis=axis)
                # roll wraps; kill the wrapped edge
                sl = [slice(None)] * cur_mask.ndim
                sl[axis] = 0
                shifted[tuple(sl)] = False
                sl[axis] = -1
                shifted2[tuple(sl)] = False
                neighbor_pref |= shifted | shifted2
            if prev_mask is not None:
                neighbor_pref |= ~prev_mask
            if next_mask is not None:
                neighbor_pref |= ~next_mask
            sel = cur_mask & neighbor_pref
            if np.any(sel):
                idx = np.argwhere(sel)
                coords = np.empty((idx.shape[0], d))
                coords[:, 0] = axes[0][i]
                for col in range(1, d):
                    coords[:, col] = axes[col][idx[:, col - 1]]
                boundary.append(coords)
            prev_mask, cur_mask = cur_mask, next_mask
        if not boundary:
            return np.zeros((0, d))
        return np.vstack(boundary)

    def min_distance(self, queries: np.ndarray) -> np.ndarray:
        q = queries[:, self.active]
        best = np.full(q.shape[0], np.inf)
        chunk = max(1, int(5_000_000 // max(1, q.shape[0])))
        for start in range(0, self.points.shape[0], chunk):
            block = self.points[start:start + chunk]
            d2 = np.sum((q[:, None, :] - block[None, :, :]) ** 2, axis=2)
            best = np.minimum(best, np.sqrt(np.min(d2, axis=1)))
        return best


def _cloud_for(p: PreferenceMap, ctx: GraphDistanceContext) -> _ComplementCloud:
    key = (p.player_index, hash(p), ctx.h_g)
    cloud = ctx._clouds.get(key)
    if cloud is None:
        cloud = _ComplementCloud(p, ctx)
        ctx._clouds[key] = cloud
    return cloud


def graph_distance_many(p: PreferenceMap, ctx: GraphDistanceContext,
                        y, zs: np.ndarray, _force_grid: bool = False) -> np.ndarray:
    """Graph distance for many own-block candidates at one joint ``y``."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    zs = np.asarray(zs, dtype=np.float64).reshape(-1, p.own_dim)
    queries = np.hstack([np.broadcast_to(y, (zs.shape[0], y.shape[0])), zs])
    lo, hi = ctx.region._np
    if np.any(queries < lo - GRID_MATCH_TOL) or np.any(queries > hi + GRID_MATCH_TOL):
        raise InputError("graph-distance query lies outside the context region")
    pref = preferred_many(p, y, zs)
    out = np.zeros(zs.shape[0])
    if not np.any(pref):
        return out
    own = _own_of(p, y)

    if not _force_grid:
        half = _halfspace_form(p)
        if half is not None:
            c, off = half
            gainvals = (zs - own) @ c - off
            out[pref] = gainvals[pref] / (_SQRT2 * float(np.linalg.norm(c)))
            return out
        scalar = _rival_scalar_form(p)
        if scalar is not None:
            cmap, a = scalar
            cval = float(cmap.eval(y)[0])
            anorm = float(np.linalg.norm(a))
            dz = zs[:, 0] - own[0]
            plus = np.hypot(max(0.0, -cval) / anorm, np.clip(dz, 0.0, None) / _SQRT2)
            minus = np.hypot(max(0.0, cval) / anorm, np.clip(-dz, 0.0, None) / _SQRT2)
            vals = np.minimum(plus, minus)
            out[pref] = vals[pref]
            return out

    cloud = _cloud_for(p, ctx)
    out[pref] = cloud.min_distance(queries[pref])
    return out


def graph_distance(p: PreferenceMap, ctx: GraphDistanceContext, y, z,
                   _force_grid: bool = False) -> float:
    """Euclidean distance from ``(y, z)`` to the complement of the preference
    graph; 0 whenever ``z`` is not preferred at ``y``.

    Raises :class:`InputError` when the query leaves the context region,
    where the result would be unreliable.
    """
    z = np.asarray(z, dtype=np.float64).reshape(1, -1)
    return float(graph_distance_many(p, ctx, y, z, _force_grid=_force_grid)[0])
