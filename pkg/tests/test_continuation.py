"""Weight continuation toward cusps, mollification, concentration scans."""

import math

import numpy as np
import pytest

from cmlab.continuation import (
    ContinuationSchedule,
    ScheduleStep,
    cusp_schedule,
    mollify_curvature,
    no_bubble_scan,
    run_continuation,
)
from cmlab.errors import InfeasibleTopology, StageFailure
from cmlab.grids import TAU, DiskChart, Field, TorusChart, constant, sample
from cmlab.measures import Divisor
from cmlab.models import cap_disk_area, cap_profile
from cmlab.solver import solve_divisor


def test_cusp_schedule_weights():
    target = Divisor(((0.3, 0.7),), (-1.0,))
    sched = cusp_schedule(target, k_max=5)
    assert len(sched.steps) == 5
    for k, step in enumerate(sched.steps, start=1):
        assert step.betas == (pytest.approx(-1.0 + 2.0 ** -k),)
    mixed = Divisor(((0.3, 0.7), (0.1, 0.2)), (-1.0, -0.5))
    sm = cusp_schedule(mixed, k_max=3)
    for step in sm.steps:
        assert step.betas[1] == -0.5  # conical atoms keep their weight
    conical = Divisor(((0.3, 0.7),), (-0.5,))
    assert len(cusp_schedule(conical).steps) == 1


def test_schedule_validation():
    target = Divisor(((0.3, 0.7),), (-0.5,))
    with pytest.raises(ValueError):
        ContinuationSchedule(target, ())
    with pytest.raises(ValueError):
        ContinuationSchedule(target, (ScheduleStep((-0.5, -0.5), -1.0),))
    with pytest.raises(ValueError):
        ContinuationSchedule(target, (ScheduleStep((-1.0,), -1.0),))
    with pytest.raises(ValueError):
        ContinuationSchedule(target, (ScheduleStep((-0.75,), -1.0),))  # undershoot
    with pytest.raises(ValueError):
        ContinuationSchedule(target, (ScheduleStep((-0.75 + 0.5,), -1.0),
                                      ScheduleStep((-0.1,), -1.0)))  # increasing
    with pytest.raises(ValueError):
        ContinuationSchedule(target, (ScheduleStep((-0.5,), -2.0),), lam=1.0)


def test_single_stage_matches_direct_solve():
    res = run_continuation(cusp_schedule(Divisor(((0.3, 0.7),), (-0.5,))), n=64)
    direct = solve_divisor(((0.3, 0.7),), (-0.5,), n=64)
    np.testing.assert_allclose(res.final.v.values, direct.v.values, atol=1e-9)
    assert res.extrapolated_area == res.stages[0].area


def test_continuation_stage_ladder():
    target = Divisor(((0.3, 0.7),), (-1.0,))
    res = run_continuation(cusp_schedule(target, k_max=4), n=128)
    assert len(res.stages) == 4
    areas = res.areas
    assert all(b > a for a, b in zip(areas, areas[1:]))
    for k, st in enumerate(res.stages, start=1):
        assert st.k == k
        assert st.chi == pytest.approx(-1.0 + 2.0 ** -k)
        assert st.area == pytest.approx(TAU * (1.0 - 2.0 ** -k), rel=1e-2)
        assert st.gb_defect <= 1e-9
        assert st.residual_norm <= 1e-10
        assert st.max_local_mass < 1.0
    # 2 a_4 - a_3 cancels the 2^{-k} tail of the constant-curvature ladder
    assert res.extrapolated_area == pytest.approx(TAU, rel=1e-3)


def test_warm_and_cold_starts_agree():
    target = Divisor(((0.3, 0.7),), (-1.0,))
    warm = run_continuation(cusp_schedule(target, k_max=3), n=64)
    cold_sched = ContinuationSchedule(
        target, cusp_schedule(target, k_max=3).steps, warm_start=False, lam=1.0)
    cold = run_continuation(cold_sched, n=64)
    assert float(np.abs(warm.final.v.values - cold.final.v.values).max()) < 1e-8


def test_continuation_infeasible_target():
    target = Divisor(((0.3, 0.7),), (0.5,))
    with pytest.raises(InfeasibleTopology):
        run_continuation(cusp_schedule(target), n=64)


def test_stage_failure_carries_stage_index():
    sched = cusp_schedule(Divisor(((0.3, 0.7),), (-0.5,)))
    with pytest.raises(StageFailure) as exc:
        run_continuation(sched, n=64, tol=1e-16)  # unreachable tolerance
    assert exc.value.stage == 1


def test_mollify_curvature():
    n = 128
    const = constant(-1.0, TorusChart(), n)
    out = mollify_curvature(const, 3, 2.0)
    np.testing.assert_allclose(out.values, -1.0, atol=1e-13)

    K = sample(lambda x, y: -1.0 + 0.4 * np.cos(TAU * x) * np.cos(TAU * y),
               TorusChart(), n)
    dists = []
    for k in range(2, 7):
        m = mollify_curvature(K, k, 2.0)
        assert m.values.min() >= -2.0 and m.values.max() <= -0.5
        dists.append(float(np.abs(m.values - K.values).mean()))
    assert all(b < a for a, b in zip(dists, dists[1:]))
    # heat time 4^{-k} gives an asymptotic quartering per step
    assert dists[-1] / dists[-2] < 0.35 and dists[-2] / dists[-3] < 0.35

    bad = constant(-3.0, TorusChart(), n)
    with pytest.raises(ValueError):
        mollify_curvature(bad, 3, 2.0)
    with pytest.raises(ValueError):
        mollify_curvature(constant(-1.0, DiskChart(1.0), 32), 3, 2.0)


def test_no_bubble_scan_flags_concentration():
    # a lam = 0.05 spherical bump inside a 1/8 disk carries curvature mass
    # 4 pi r^2 / (lam^2 + r^2), far above the threshold
    lam = 0.05
    u = sample(cap_profile(lam, center=(0.5, 0.5)), TorusChart(), 256)
    rep = no_bubble_scan(u, radii=(0.125,), curvature=1.0)
    want = cap_disk_area(lam, 0.125)
    assert rep.max_mass == pytest.approx(want, rel=2e-2)
    assert rep.flags
    assert any(c == (0.5, 0.5) for c, _, _ in rep.flags)
    assert rep.centers_scanned == 256  # all 16 x 16 centers, no atoms to skip


def test_no_bubble_scan_clean_solution():
    sol = solve_divisor(((0.3, 0.7),), (-0.5,), n=128)
    rep = no_bubble_scan(sol, radii=(1.0 / 16.0, 1.0 / 8.0))
    assert rep.flags == ()
    assert rep.max_mass < 1.0
    assert rep.max_area < rep.max_mass + 1e-12  # |K| = 1 makes them equal
    with pytest.raises(ValueError):
        no_bubble_scan(sol.v, radii=(0.1,))  # bare field needs a curvature
    with pytest.raises(ValueError):
        no_bubble_scan(constant(0.0, DiskChart(1.0), 32), radii=(0.1,),
                       curvature=-1.0)
