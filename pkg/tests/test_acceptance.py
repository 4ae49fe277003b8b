"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they
complete.  Tolerances are pinned here and nowhere else.
"""

import io
import time

import numpy as np

from projnash.cli import run
from projnash.fixtures import EQUIVALENCE_FIXTURES, fixture_path, load_fixture
from projnash.geometry import (Ball, Box, HalfspacePolytope, grid_points,
                               project, projection_vi_residual)
from projnash.normal_op import normal_operator, unit_normal_product
from projnash.preferences import (DirectionField, UtilityInduced,
                                  graph_distance, sample_preferred)
from projnash.solvers import (SolverConfig, brute_force_oracle,
                              equivalence_scan, solve_fixed_point, solve_qvi)

SOLVER_FIXTURES = ("expand", "selfmap", "spin", "chase", "corner", "offside")


def _report(name: str, ok: bool, detail: str = "") -> None:
    tag = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[{tag}] {name}{suffix}")
    assert ok, f"{name}{suffix}"


def _within(vec, target, tol) -> bool:
    return bool(np.all(np.abs(np.asarray(vec) - np.asarray(target)) <= tol))


# -- criterion 1: expand ------------------------------------------------------------

def test_criterion_1_expand_all_routes():
    g = load_fixture("expand")
    cfg = SolverConfig(h=0.01)

    t0 = time.monotonic()
    oracle = brute_force_oracle(g, cfg)
    t_oracle = time.monotonic() - t0
    ok = (len(oracle.certificates) == 1
          and _within(oracle.certificates[0].x, (1.0, 1.0), 0.02)
          and _within(oracle.certificates[0].y, (2.0, 2.0), 0.02)
          and t_oracle < 10.0)

    t0 = time.monotonic()
    fp = solve_fixed_point(g, cfg)
    t_fp = time.monotonic() - t0
    ok = ok and len(fp.certificates) >= 1 and t_fp < 10.0
    ok = ok and _within(fp.certificates[0].x, oracle.certificates[0].x, 2 * cfg.h)

    t0 = time.monotonic()
    qvi = solve_qvi(g, cfg)
    t_qvi = time.monotonic() - t0
    ok = ok and len(qvi.certificates) >= 1 and t_qvi < 10.0
    ok = ok and _within(qvi.certificates[0].x, oracle.certificates[0].x, 2 * cfg.h)

    _report("criterion 1: expand oracle/fp/qvi agree at (1,1),(2,2)", ok,
            f"oracle {t_oracle:.1f}s fp {t_fp:.1f}s qvi {t_qvi:.1f}s")


# -- criterion 2: selfmap ------------------------------------------------------------

def test_criterion_2_selfmap_collapse():
    g = load_fixture("selfmap")
    cfg = SolverConfig(h=0.01)
    ok = True
    times = []
    for solver in (brute_force_oracle, solve_fixed_point, solve_qvi):
        t0 = time.monotonic()
        res = solver(g, cfg)
        times.append(time.monotonic() - t0)
        ok = ok and len(res.certificates) >= 1 and times[-1] < 10.0
        cert = res.certificates[0]
        ok = ok and _within(cert.x, (0.5, 0.5), 2 * cfg.h)
        ok = ok and _within(cert.y, (0.5, 0.5), 2 * cfg.h)
        gap = np.linalg.norm(np.array(cert.x) - np.array(cert.y))
        ok = ok and gap <= 2 * cfg.h
    _report("criterion 2: selfmap collapses onto (0.5,0.5)", ok,
            "times " + " ".join(f"{t:.1f}s" for t in times))


# -- criterion 3: spin ----------------------------------------------------------------

def test_criterion_3_spin_degenerate_cluster():
    g = load_fixture("spin")
    cfg = SolverConfig(h=0.01)

    t0 = time.monotonic()
    oracle = brute_force_oracle(g, cfg)
    t_oracle = time.monotonic() - t0
    ok = len(oracle.certificates) == 1 and t_oracle < 30.0
    cert = oracle.certificates[0]
    ok = ok and _within(cert.x, (1.0, 0.5), 0.02)
    ok = ok and abs(cert.y[1] - 0.5) <= 0.02
    ok = ok and 1.0 - 0.02 <= cert.y[0] <= 1.25 + 0.02
    lo_y, hi_y = np.array(cert.y_range[0]), np.array(cert.y_range[1])
    ok = ok and lo_y[0] >= 1.0 - 0.02 and hi_y[0] <= 1.25 + 0.02
    ok = ok and abs(lo_y[1] - 0.5) <= 0.02 and abs(hi_y[1] - 0.5) <= 0.02

    t0 = time.monotonic()
    fp = solve_fixed_point(g, cfg)
    t_fp = time.monotonic() - t0
    ok = ok and t_fp < 30.0 and len(fp.certificates) >= 1
    fcert = fp.certificates[0]
    ok = ok and _within(fcert.x, (1.0, 0.5), 0.02)
    ok = ok and abs(fcert.y[1] - 0.5) <= 0.02
    ok = ok and 1.0 - 0.02 <= fcert.y[0] <= 1.25 + 0.02

    _report("criterion 3: spin cluster x=(1,0.5), y1 in [1,1.25]", ok,
            f"oracle {t_oracle:.1f}s fp {t_fp:.1f}s")


# -- criterion 4: graph-distance Lipschitz suite ---------------------------------------

def test_criterion_4_graph_distance_lipschitz():
    violations = 0
    pairs_per_fixture = 1000
    for name in SOLVER_FIXTURES:
        g = load_fixture(name)
        rng = np.random.default_rng(42)
        for i in range(g.player_count):
            p = g.preference_maps[i]
            ctx = g.distance_context(i, 0.02)
            lo, hi = ctx.region._np
            per_player = pairs_per_fixture // g.player_count
            qa = rng.uniform(lo + 0.1, hi - 0.1, size=(per_player, lo.shape[0]))
            qb = rng.uniform(lo + 0.1, hi - 0.1, size=(per_player, lo.shape[0]))
            for a, b in zip(qa, qb):
                ga = graph_distance(p, ctx, a[:g.n], a[g.n:])
                gb = graph_distance(p, ctx, b[:g.n], b[g.n:])
                if abs(ga - gb) > np.linalg.norm(a - b) + 1e-9:
                    violations += 1
    _report("criterion 4: graph distance is 1-Lipschitz (1000 pairs/fixture)",
            violations == 0, f"{violations} violations")


# -- criterion 5: projection suite -------------------------------------------------------

def test_criterion_5_projection_suite():
    rng = np.random.default_rng(2024)
    violations = 0
    for trial in range(1000):
        kind = trial % 3
        d = int(rng.integers(1, 4))
        if kind == 0:
            lo = rng.uniform(-2, 0, d)
            hi = lo + rng.uniform(0.1, 2, d)
            s = Box(tuple(lo), tuple(hi))
        elif kind == 1:
            s = Ball(tuple(rng.uniform(-1, 1, d)), float(rng.uniform(0.1, 2)))
        else:
            center = rng.uniform(-1, 1, d)
            rows = []
            for _ in range(int(rng.integers(2, 6))):
                a = rng.normal(size=d)
                a /= np.linalg.norm(a)
                rows.append((tuple(a), float(a @ center + rng.uniform(0.1, 1.5))))
            s = HalfspacePolytope(tuple(rows), d)
        y = rng.uniform(-4, 4, d)
        y2 = rng.uniform(-4, 4, d)
        px, px2 = project(s, y), project(s, y2)
        if np.linalg.norm(project(s, px) - px) > 1e-9:
            violations += 1
        if np.linalg.norm(px - px2) > np.linalg.norm(y - y2) + 1e-9:
            violations += 1
        if projection_vi_residual(s, y, px, 500,
                                  rng=np.random.default_rng(trial)) < -1e-9:
            violations += 1
    _report("criterion 5: projection idempotent, 1-Lipschitz, VI >= -1e-9",
            violations == 0, f"{violations} violations over 1000 sets")


# -- criterion 6: normal-operator polar suite ---------------------------------------------

def test_criterion_6_normal_operator_polar_suite():
    cfg = SolverConfig(h=0.05, random_budget=128)
    ok = True
    full_space_points = 0
    directions_checked = 0
    for name in SOLVER_FIXTURES + ("vacuous",):
        g = load_fixture(name)
        pts = grid_points(g.hull_box, [21] * g.n)
        for i in range(g.player_count):
            p = g.preference_maps[i]
            sl = g.own_slice(i)
            window = g.hull_boxes[i].inflate(1.0)
            open_half_space = (isinstance(p, DirectionField)
                               or (isinstance(p, UtilityInduced)
                                   and all(gr.is_constant() for gr in p.own_gradient)))
            for x in pts:
                sample = normal_operator(g, i, x, cfg)
                if sample.is_full_space:
                    full_space_points += 1
                    product = unit_normal_product(g, x, cfg)
                    ok = ok and product.contains_factor(i, np.zeros(g.dims[i]))
                    continue
                zs = sample_preferred(p, x, window, 128,
                                      rng=np.random.default_rng(99))
                for d in sample.as_array:
                    directions_checked += 1
                    inner = (zs - x[sl]) @ d
                    ok = ok and bool(np.all(inner <= 1e-9))
                    if open_half_space and zs.shape[0] > 0:
                        ok = ok and bool(np.all(inner < 0.0))
    ok = ok and full_space_points > 0 and directions_checked > 0
    _report("criterion 6: normal directions polar-valid on 21x21 grids", ok,
            f"{directions_checked} directions, {full_space_points} full-space points")


# -- criterion 7: equivalence suite ---------------------------------------------------------

def test_criterion_7_equivalence_suite():
    t0 = time.monotonic()
    ok = True
    details = []
    for name in EQUIVALENCE_FIXTURES:
        g = load_fixture(name)
        cfg = SolverConfig(h=0.05)
        qvi_set, nep_set = equivalence_scan(g, cfg)
        slack = cfg.h + 1e-9

        def covered(points, other):
            for q in points:
                if other.shape[0] == 0:
                    return False
                cheb = np.max(np.abs(other - q), axis=1)
                if float(np.min(cheb)) > slack:
                    return False
            return True

        fixture_ok = (qvi_set.shape[0] > 0 and nep_set.shape[0] > 0
                      and covered(qvi_set, nep_set) and covered(nep_set, qvi_set))
        ok = ok and fixture_ok
        details.append(f"{name}:{qvi_set.shape[0]}/{nep_set.shape[0]}")
    elapsed = time.monotonic() - t0
    ok = ok and elapsed < 60.0
    _report("criterion 7: residual set matches direct check within one cell", ok,
            f"{elapsed:.1f}s " + " ".join(details))


# -- criterion 8: determinism -----------------------------------------------------------------

def test_criterion_8_byte_identical_reports():
    ok = True
    for argv in (
        ["oracle", str(fixture_path("expand")), "--h", "0.05"],
        ["solve-fp", str(fixture_path("spin")), "--h", "0.02", "--seed", "11"],
        ["solve-qvi", str(fixture_path("selfmap")), "--h", "0.05", "--seed", "5"],
        ["verify", str(fixture_path("expand")), "--x", "1,1", "--y", "2,2"],
    ):
        buf_a, buf_b = io.StringIO(), io.StringIO()
        code_a = run(list(argv), stdout=buf_a)
        code_b = run(list(argv), stdout=buf_b)
        ok = ok and code_a == code_b and buf_a.getvalue() == buf_b.getvalue()
    _report("criterion 8: repeated runs regenerate byte-identical reports", ok)
