"""Game instances and the projected-solution certificate.

An instance bundles, per player: a closed convex choice set, a parametric
constraint map (not necessarily contained in the choice set), and a
strict-preference map.  The search domain is the choice-set product times an
axis-aligned over-approximation of the constraint hull, computed by interval
arithmetic.

A candidate pair ``(x, y)`` is certified as a projected solution when

* ``x`` is the nearest point of the choice-set product to ``y``, and
* for every player, ``y_i`` is feasible at the frozen constraint ``K_i(x)``
  and no feasible point is strictly preferred to ``y`` -- emptiness of the
  intersection is certified only up to a stated grid resolution and random
  probe budget, both recorded on the certificate.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np

from .errors import HypothesisError, InputError
from .expressions import AffineMap, Polynomial, parse_polynomial_text
from .geometry import (Box, ConvexSet, HalfspacePolytope, constraint_axis,
                       grid_points, project)
from . import preferences as prefs
from .preferences import (DirectionField, PreferenceMap, Sampled, UtilityInduced,
                          hull_preferred)

DEFAULT_PROBE_AXIS = 7

#: witnesses must clear this float guard above the strictness margin, so
#: scan points that iterative projection leaves a few ulps outside a
#: constraint boundary cannot register as intersection witnesses
WITNESS_GUARD = 1e-12


# ---------------------------------------------------------------------------
# Constraint maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MovingBox:
    """Box-valued constraint map with affine lower/upper bounds in x."""

    player_index: int
    lower: AffineMap
    upper: AffineMap

    def __post_init__(self):
        if self.lower.out_dim != self.upper.out_dim:
            raise InputError("constraint bound dimensions disagree")

    @property
    def own_dim(self) -> int:
        return self.lower.out_dim

    def materialize(self, x) -> Box:
        lo = self.lower.eval(x)
        hi = self.upper.eval(x)
        if np.any(lo > hi):
            raise InputError(
                f"constraint box for player {self.player_index + 1} is empty at x={np.asarray(x).tolist()}")
        return Box(tuple(lo), tuple(hi))

    def bounds_many(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.lower.eval_many(xs), self.upper.eval_many(xs)

    def value_range(self, x_lower, x_upper) -> Box:
        lo, _ = self.lower.range_over_box(x_lower, x_upper)
        _, hi = self.upper.range_over_box(x_lower, x_upper)
        return Box(tuple(lo), tuple(hi))

    def nonempty_gap_range(self, x_lower, x_upper) -> tuple[np.ndarray, np.ndarray]:
        """Componentwise range of upper - lower over the choice bounding box."""
        a_u, b_u = self.upper._np
        a_l, b_l = self.lower._np
        gap = AffineMap(tuple(map(tuple, a_u - a_l)), tuple(b_u - b_l))
        return gap.range_over_box(x_lower, x_upper)

    def gap_witness(self, row: int, x_lower, x_upper) -> np.ndarray:
        a_u, b_u = self.upper._np
        a_l, b_l = self.lower._np
        gap = AffineMap(tuple(map(tuple, a_u - a_l)), tuple(b_u - b_l))
        return gap.argmin_over_box(row, x_lower, x_upper)


@dataclass(frozen=True)
class MovingPolytope:
    """Polytope-valued constraint map: fixed row normals, affine offsets.

    ``bounds_hint`` must enclose every value of the map over the choice set;
    it is validated by probing at load time and drives the hull box.  The
    hint also bounds the values, so every candidate vertex of the extended
    system (rows plus hint faces) is an affine function of ``x``; linear
    maxima over the values are exact and vectorize over scan rows.
    """

    player_index: int
    normals: tuple[tuple[float, ...], ...]
    offsets: AffineMap
    bounds_hint: Box

    def __post_init__(self):
        if len(self.normals) != self.offsets.out_dim:
            raise InputError("polytope normals/offsets row count mismatch")
        if len(self.bounds_hint.lower) != self.own_dim:
            raise InputError("bounds hint dimension mismatch")

    @property
    def own_dim(self) -> int:
        return len(self.normals[0])

    def materialize(self, x) -> HalfspacePolytope:
        offs = self.offsets.eval(x)
        rows = tuple((n, float(o)) for n, o in zip(self.normals, offs))
        return HalfspacePolytope(rows, self.own_dim)

    def value_range(self, x_lower, x_upper) -> Box:
        return self.bounds_hint

    def _extended_system(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Rows ``A v <= b0 + B x`` of the values intersected with the hint."""
        k = self.own_dim
        a_rows = np.array(self.normals, dtype=np.float64)
        b_mat, b0 = self.offsets._np
        eye = np.eye(k)
        lo, hi = self.bounds_hint._np
        a_ext = np.vstack([a_rows, eye, -eye])
        b0_ext = np.concatenate([b0, hi, -lo])
        b_ext = np.vstack([b_mat, np.zeros((2 * k, b_mat.shape[1]))])
        return a_ext, b0_ext, b_ext

    @cached_property
    def _vertex_maps(self) -> list[tuple[tuple[int, ...], np.ndarray]]:
        import itertools
        a_ext, _, _ = self._extended_system()
        out = []
        for subset in itertools.combinations(range(a_ext.shape[0]), self.own_dim):
            sub = a_ext[list(subset)]
            if abs(float(np.linalg.det(sub))) < 1e-12:
                continue
            out.append((subset, np.linalg.inv(sub)))
        return out

    def linear_max_many(self, xs: np.ndarray, ws: np.ndarray) -> np.ndarray:
        """Exact rowwise ``max_z <w, z>`` over the hinted values at ``xs``."""
        a_ext, b0_ext, b_ext = self._extended_system()
        offs = xs @ b_ext.T + b0_ext                      # (m, rows)
        best = np.full(xs.shape[0], -np.inf)
        for subset, inv in self._vertex_maps:
            verts = offs[:, list(subset)] @ inv.T          # (m, k)
            feasible = np.all(verts @ a_ext.T <= offs + 1e-7, axis=1)
            vals = np.sum(verts * ws, axis=1)
            best = np.where(feasible & (vals > best), vals, best)
        return best


ConstraintMap = Union[MovingBox, MovingPolytope]


# ---------------------------------------------------------------------------
# Instance
# ---------------------------------------------------------------------------

@dataclass
class HypothesisReport:
    constraints_nonempty: bool = True
    constraint_probes: int = 0
    self_exclusion: bool = True
    self_exclusion_probes: int = 0
    hull_containment: bool = True
    notes: tuple[str, ...] = ()


@dataclass
class GameInstance:
    """A generalized Nash game plus its derived search domain."""

    dims: tuple[int, ...]
    choice_sets: tuple[ConvexSet, ...]
    constraint_maps: tuple[ConstraintMap, ...]
    preference_maps: tuple[PreferenceMap, ...]
    hull_boxes: tuple[Box, ...]            # per-player over-approx of co(cl K_i(X))
    utility_reducible: bool
    options: dict = field(default_factory=dict)
    hypotheses: HypothesisReport = field(default_factory=HypothesisReport)
    _caches: dict = field(default_factory=dict, repr=False)

    @property
    def player_count(self) -> int:
        return len(self.dims)

    @property
    def n(self) -> int:
        return sum(self.dims)

    def own_slice(self, i: int) -> slice:
        start = sum(self.dims[:i])
        return slice(start, start + self.dims[i])

    @property
    def x_bbox(self) -> Box:
        box = self._caches.get("x_bbox")
        if box is None:
            los, his = [], []
            for s in self.choice_sets:
                b = s.bounding_box()
                los.extend(b.lower)
                his.extend(b.upper)
            box = Box(tuple(los), tuple(his))
            self._caches["x_bbox"] = box
        return box

    @property
    def hull_box(self) -> Box:
        box = self._caches.get("hull_box")
        if box is None:
            los, his = [], []
            for b in self.hull_boxes:
                los.extend(b.lower)
                his.extend(b.upper)
            box = Box(tuple(los), tuple(his))
            self._caches["hull_box"] = box
        return box

    def domain_joint_box(self) -> Box:
        """Bounding box of both domain factors in joint coordinates."""
        xb, qb = self.x_bbox, self.hull_box
        lo = np.minimum(xb._np[0], qb._np[0])
        hi = np.maximum(xb._np[1], qb._np[1])
        return Box(tuple(lo), tuple(hi))

    def project_choice(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        out = np.empty_like(y)
        for i in range(self.player_count):
            sl = self.own_slice(i)
            out[sl] = project(self.choice_sets[i], y[sl])
        return out

    def project_choice_many(self, ys: np.ndarray) -> np.ndarray:
        out = np.empty_like(ys)
        for i in range(self.player_count):
            sl = self.own_slice(i)
            out[:, sl] = self.choice_sets[i].project_many(ys[:, sl])
        return out

    def in_choice(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        return all(self.choice_sets[i].contains(x[self.own_slice(i)], tol)
                   for i in range(self.player_count))

    def distance_context(self, i: int, h_g: float, margin: float = 1.0):
        key = ("ctx", i, h_g, margin)
        ctx = self._caches.get(key)
        if ctx is None:
            ctx = prefs.context_for(self.domain_joint_box(), self.hull_boxes[i],
                                    h_g, margin)
            self._caches[key] = ctx
        return ctx

    def content_key(self) -> bytes:
        key = self._caches.get("content_key")
        if key is None:
            parts = [repr(self.dims), repr(self.choice_sets),
                     repr(self.constraint_maps), repr(self.preference_maps)]
            key = hashlib.blake2b("|".join(parts).encode(), digest_size=8).digest()
            self._caches["content_key"] = key
        return key


def seeded_rng(seed: int, *tags, arrays: Sequence[np.ndarray] = ()) -> np.random.Generator:
    """Deterministic generator keyed by seed, integer tags and array contents.

    Independent of call order, so concurrent evaluation keeps byte-identical
    results.
    """
    h = hashlib.blake2b(digest_size=8)
    for a in arrays:
        h.update(np.ascontiguousarray(np.asarray(a, dtype=np.float64)).tobytes())
    entropy = [seed & 0xFFFFFFFF, int.from_bytes(h.digest(), "little")]
    entropy.extend(int(t) & 0xFFFFFFFF for t in tags)
    return np.random.default_rng(entropy)


# ---------------------------------------------------------------------------
# Construction and hypothesis checks
# ---------------------------------------------------------------------------

def _probe_grid_for_box(box: Box, per_axis: int, cap: int = 20000) -> np.ndarray:
    d = box.dim
    while per_axis > 2 and per_axis ** d > cap:
        per_axis -= 2
    per_axis = max(3, per_axis) if per_axis % 2 == 1 else max(3, per_axis - 1)
    return grid_points(box, [per_axis] * d)


def build_instance(dims: Sequence[int],
                   choice_sets: Sequence[ConvexSet],
                   constraint_maps: Sequence[ConstraintMap],
                   preference_maps: Sequence[PreferenceMap],
                   options: Optional[dict] = None,
                   probe_axis: int = DEFAULT_PROBE_AXIS) -> GameInstance:
    """Assemble and validate a game instance.

    Load-time checks (each raises :class:`HypothesisError` with the
    witnessing probe on failure):

    * every constraint map has nonempty values over the choice set, verified
      by interval arithmetic on the affine bounds plus a probe grid;
    * every hull box contains the constraint values at all probes;
    * no player's current strategy falls into the convex hull of their own
      preference set at any probe of the hull product.
    """
    dims = tuple(int(d) for d in dims)
    n = sum(dims)
    if len(choice_sets) != len(dims) or len(constraint_maps) != len(dims) \
            or len(preference_maps) != len(dims):
        raise InputError("per-player sequences must all have one entry per player")
    for i, (d, s) in enumerate(zip(dims, choice_sets)):
        if s.dim != d:
            raise InputError(f"choice set for player {i + 1} has dimension {s.dim}, expected {d}")
        if isinstance(s, HalfspacePolytope):
            raise InputError("choice sets must be boxes or balls")
    for i, p in enumerate(preference_maps):
        if p.n_vars != n or p.own_dim != dims[i]:
            raise InputError(f"preference map for player {i + 1} has inconsistent dimensions")

    report = HypothesisReport()
    notes: list[str] = []

    # X bounding box (exact for boxes, enclosing for balls)
    x_lo, x_hi = [], []
    for s in choice_sets:
        b = s.bounding_box()
        x_lo.extend(b.lower)
        x_hi.extend(b.upper)
    x_lo = np.array(x_lo)
    x_hi = np.array(x_hi)
    x_probes = _probe_grid_for_box(Box(tuple(x_lo), tuple(x_hi)), probe_axis)
    # keep only probes inside X (matters for ball factors)
    tmp = GameInstance(dims, tuple(choice_sets), tuple(constraint_maps),
                       tuple(preference_maps), tuple(Box((0,), (1,)) for _ in dims),
                       utility_reducible=False)
    keep = [r for r in range(x_probes.shape[0]) if tmp.in_choice(x_probes[r])]
    x_probes = x_probes[keep]
    report.constraint_probes = x_probes.shape[0]

    hull_boxes: list[Box] = []
    for i, cmap in enumerate(constraint_maps):
        if cmap.own_dim != dims[i]:
            raise InputError(f"constraint map for player {i + 1} has wrong value dimension")
        if isinstance(cmap, MovingBox):
            gap_lo, _ = cmap.nonempty_gap_range(x_lo, x_hi)
            if np.any(gap_lo < -1e-12):
                row = int(np.argmin(gap_lo))
                witness = cmap.gap_witness(row, x_lo, x_hi)
                if all(choice_sets[j].contains(witness[tmp.own_slice(j)]) for j in range(len(dims))):
                    raise HypothesisError(
                        f"constraint map for player {i + 1} is empty on a probe "
                        f"(component {row + 1} has lower > upper)",
                        witness=witness.tolist())
                # interval bound inconclusive on a non-box choice set: fall
                # back to the probe grid
                lo_p, hi_p = cmap.bounds_many(x_probes)
                bad = np.where(np.any(lo_p > hi_p + 1e-12, axis=1))[0]
                if bad.size:
                    raise HypothesisError(
                        f"constraint map for player {i + 1} is empty on a probe",
                        witness=x_probes[bad[0]].tolist())
                notes.append(
                    f"player {i + 1}: interval bound inconclusive, probes pass")
        else:
            for r in range(x_probes.shape[0]):
                try:
                    val = cmap.materialize(x_probes[r])
                except InputError as exc:
                    raise HypothesisError(
                        f"constraint map for player {i + 1} is infeasible on a probe: {exc}",
                        witness=x_probes[r].tolist()) from exc
                bb = val.bounding_box()
                hint = cmap.bounds_hint
                if not (np.all(np.array(bb.lower) >= np.array(hint.lower) - 1e-6)
                        and np.all(np.array(bb.upper) <= np.array(hint.upper) + 1e-6)):
                    notes.append(
                        f"player {i + 1}: bounds hint may be loose at a probe")
        hull_boxes.append(cmap.value_range(x_lo, x_hi))

    # hull containment probes (exact for box values)
    for i, cmap in enumerate(constraint_maps):
        if isinstance(cmap, MovingBox) and x_probes.size:
            lo_p, hi_p = cmap.bounds_many(x_probes)
            q = hull_boxes[i]
            if np.any(lo_p < np.array(q.lower) - 1e-9) or np.any(hi_p > np.array(q.upper) + 1e-9):
                report.hull_containment = False

    instance = GameInstance(
        dims=dims,
        choice_sets=tuple(choice_sets),
        constraint_maps=tuple(constraint_maps),
        preference_maps=tuple(preference_maps),
        hull_boxes=tuple(hull_boxes),
        utility_reducible=all(isinstance(p, UtilityInduced) for p in preference_maps),
        options=dict(options or {}),
        hypotheses=report,
    )

    # self-exclusion over the hull product (plus choice corners)
    q_probes = _probe_grid_for_box(instance.hull_box, probe_axis)
    checked = 0
    for i, p in enumerate(preference_maps):
        sl = instance.own_slice(i)
        if isinstance(p, DirectionField):
            continue  # <c(x), x_i - x_i> = 0 is never > offset >= 0
        if isinstance(p, UtilityInduced) and prefs.own_concavity_known(p):
            continue  # strict upper level sets are convex and exclude x_i
        if isinstance(p, Sampled):
            for r, xp in enumerate(p._at):
                checked += 1
                if hull_preferred(p, np.array(xp), np.array(xp)[sl]):
                    raise HypothesisError(
                        f"self-exclusion fails for player {i + 1}",
                        witness=list(xp))
            continue
        for r in range(q_probes.shape[0]):
            checked += 1
            window = instance.hull_boxes[i].inflate(1.0)
            if hull_preferred(p, q_probes[r], q_probes[r, sl], window=window,
                              rng=seeded_rng(0, 7, i, r)):
                raise HypothesisError(
                    f"self-exclusion fails for player {i + 1}",
                    witness=q_probes[r].tolist())
    report.self_exclusion_probes = checked if checked else q_probes.shape[0]
    report.notes = tuple(notes)
    return instance


def from_utilities(dims: Sequence[int],
                   choice_sets: Sequence[ConvexSet],
                   constraint_maps: Sequence[ConstraintMap],
                   utilities: Sequence[Union[Polynomial, str]],
                   strictness: float = 0.0,
                   options: Optional[dict] = None) -> GameInstance:
    """Build an instance whose preferences are strict upper level sets of
    one polynomial utility per player.  The result is flagged
    ``utility_reducible``."""
    dims = tuple(int(d) for d in dims)
    n = sum(dims)
    if len(utilities) != len(dims):
        raise InputError("need exactly one utility per player")
    maps: list[PreferenceMap] = []
    for i, u in enumerate(utilities):
        poly = parse_polynomial_text(u, n) if isinstance(u, str) else u
        maps.append(UtilityInduced(
            player_index=i, n_vars=n, own_start=sum(dims[:i]), own_dim=dims[i],
            utility=poly, margin=strictness))
    return build_instance(dims, choice_sets, constraint_maps, maps, options=options)


# ---------------------------------------------------------------------------
# Certification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlayerCheck:
    membership_residual: float
    witness: Optional[tuple[float, ...]]
    emptiness_resolution: float
    points_scanned: int


@dataclass(frozen=True)
class Certificate:
    """Candidate pair with per-player residuals and a verdict.

    ``pass`` requires the projection residual and every membership residual
    at or below ``eps`` and no intersection witness at the stated resolution
    (grid step ``h`` plus ``budget`` seeded samples under ``seed``).
    """

    x: tuple[float, ...]
    y: tuple[float, ...]
    players: tuple[PlayerCheck, ...]
    projection_residual: float
    verdict: str                      # "pass" | "fail"
    reason: Optional[str]
    eps: float
    h: float
    budget: int
    seed: int
    cluster_size: int = 1
    x_range: Optional[tuple[tuple[float, ...], tuple[float, ...]]] = None
    y_range: Optional[tuple[tuple[float, ...], tuple[float, ...]]] = None

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


def constraint_set(game: GameInstance, i: int, x) -> ConvexSet:
    """Materialize the feasible set of player ``i`` at joint strategy ``x``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != game.n:
        raise InputError(f"joint strategy has dimension {x.shape[0]}, expected {game.n}")
    if not game.in_choice(x, tol=1e-9):
        raise InputError("joint strategy lies outside the choice-set product")
    return game.constraint_maps[i].materialize(x)


def _scan_points(k_set: ConvexSet, h: float, budget: int,
                 rng: np.random.Generator) -> np.ndarray:
    """Grid at step ``h`` over the constraint value plus seeded samples.

    Box grids carry their exact endpoints and are enriched with the
    zero-anchored lattice, matching the solvers' scan axes.
    """
    if isinstance(k_set, Box):
        lo, hi = k_set._np
        axes = [constraint_axis(lo[j], hi[j], h) for j in range(k_set.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        grid = np.stack([m.reshape(-1) for m in mesh], axis=1)
    else:
        bbox = k_set.tight_box()
        lo, hi = bbox._np
        per_axis = [min(201, max(2, int(np.ceil((hi[j] - lo[j]) / h - 1e-9)) + 1))
                    for j in range(k_set.dim)]
        grid = k_set.project_many(grid_points(bbox, per_axis))
    if budget > 0:
        bb = k_set.bounding_box()
        lo, hi = bb._np
        randoms = k_set.project_many(rng.uniform(lo, hi, size=(budget, k_set.dim)))
        return np.vstack([grid, randoms])
    return grid


def check_nep(game: GameInstance, x_fix, y, cfg) -> list[PlayerCheck]:
    """Per-player feasibility and intersection report at frozen constraints.

    For each player: the distance of ``y_i`` to ``K_i(x_fix)``, and either the
    first strictly preferred feasible point found (a witness against
    equilibrium) or a record that none was found at resolution ``cfg.h``
    with ``cfg.random_budget`` extra samples.
    """
    x_fix = np.asarray(x_fix, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x_fix.shape[0] != game.n or y.shape[0] != game.n:
        raise InputError("joint strategy dimension mismatch")
    out: list[PlayerCheck] = []
    for i in range(game.player_count):
        k_set = game.constraint_maps[i].materialize(x_fix)
        sl = game.own_slice(i)
        yi = y[sl]
        residual = float(np.linalg.norm(yi - project(k_set, yi)))
        pref = game.preference_maps[i]
        if isinstance(pref, Sampled):
            # the declared table is the scan resolution for tabulated maps
            pts = np.array([z for z in pref._z if k_set.contains(z, tol=1e-9)])
            pts = pts.reshape(-1, game.dims[i])
        else:
            rng = seeded_rng(cfg.seed, 11, i, arrays=(x_fix, y))
            pts = _scan_points(k_set, cfg.h, cfg.random_budget, rng)
        if pts.shape[0] == 0:
            out.append(PlayerCheck(membership_residual=residual, witness=None,
                                   emptiness_resolution=cfg.h, points_scanned=0))
            continue
        gains = prefs.strict_gain_outer(game.preference_maps[i], y[None, :], pts)[0]
        hits = np.nonzero(gains > cfg.strictness + WITNESS_GUARD)[0]
        witness = tuple(pts[hits[0]]) if hits.size else None
        out.append(PlayerCheck(
            membership_residual=residual,
            witness=witness,
            emptiness_resolution=cfg.h,
            points_scanned=pts.shape[0],
        ))
    return out


def check_projected_solution(game: GameInstance, x_tilde, y_tilde, cfg,
                             eps: Optional[float] = None) -> Certificate:
    """Full certificate for a candidate pair.

    Combines the nearest-point condition on the choice-set product with the
    per-player feasibility and empty-intersection checks of
    :func:`check_nep`; tolerances default to the analytic epsilon of ``cfg``.
    """
    x_tilde = np.asarray(x_tilde, dtype=np.float64).reshape(-1)
    y_tilde = np.asarray(y_tilde, dtype=np.float64).reshape(-1)
    eps = cfg.eps_analytic if eps is None else float(eps)
    projection_residual = float(np.linalg.norm(game.project_choice(y_tilde) - x_tilde))
    players = tuple(check_nep(game, x_tilde, y_tilde, cfg))
    reason = None
    if projection_residual > eps:
        reason = "projection"
    else:
        for i, pc in enumerate(players):
            if pc.membership_residual > eps:
                reason = f"membership[{i}]"
                break
            if pc.witness is not None:
                reason = f"intersection[{i}]"
                break
    return Certificate(
        x=tuple(x_tilde), y=tuple(y_tilde), players=players,
        projection_residual=projection_residual,
        verdict="pass" if reason is None else "fail",
        reason=reason, eps=eps, h=cfg.h, budget=cfg.random_budget, seed=cfg.seed,
    )
