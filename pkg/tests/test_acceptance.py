"""Acceptance gate: one test per shipped guarantee, at its stated tolerance.

Each test prints a single measured-value line so a red run shows exactly
which number moved and by how much.
"""

import math
import time

import numpy as np
import pytest
import scipy.fft as sfft

from cmlab.bubbles import (
    area_identity_check,
    load_fixture,
    neck_area_profile,
    neck_curvature_limit,
)
from cmlab.cli import main as cli_main
from cmlab.continuation import cusp_schedule, run_continuation
from cmlab.grids import TAU, TorusChart, laplacian_multiplier, sample
from cmlab.green import green_torus, singular_part
from cmlab.measures import Divisor, kelvin_transform, pairing, residue
from cmlab.models import LinearCylinder, cusp_profile, cusp_radial_length, standard_bubble
from cmlab.solver import (
    CurvatureSpec,
    jacobian_apply,
    positivity_failure_count,
    radial_length,
    random_smooth_field,
    solve_divisor,
    uniqueness_probe,
)

ATOM = (0.3, 0.7)


def _line(num, text, ok):
    print(f"[criterion {num}] {text}: {'PASS' if ok else 'FAIL'}")
    assert ok, f"criterion {num}: {text}"


def test_criterion_1_conical_solve_area_and_order():
    t0 = time.time()
    sol = solve_divisor((ATOM,), (-0.5,), n=512)
    elapsed = time.time() - t0
    rel = abs(sol.area - math.pi) / math.pi
    _line(1, f"n=512 area rel err {rel:.3e} (tol 1e-2)", rel <= 1e-2)
    _line(1, f"n=512 gbDefect {sol.gb_defect:.3e} (tol 1e-8)",
          sol.gb_defect <= 1e-8)
    _line(1, f"n=512 runtime {elapsed:.1f}s (limit 60s)", elapsed <= 60.0)
    errs = [abs(solve_divisor((ATOM,), (-0.5,), n=n).area - math.pi) / math.pi
            for n in (128, 256, 1024)]
    errs.insert(2, rel)
    order = -float(np.polyfit(np.log([128.0, 256.0, 512.0, 1024.0]),
                              np.log(errs), 1)[0])
    _line(1, f"grid-doubling order {order:.2f} (need >= 1)", order >= 1.0)
    _line(1, f"finest-grid err {errs[-1]:.3e} < coarsest {errs[0]:.3e}",
          errs[-1] < errs[0])


def test_criterion_2_cusp_continuation_areas():
    res = run_continuation(
        cusp_schedule(Divisor((ATOM,), (-1.0,)), k_max=10), n=256)
    worst = 0.0
    for k, st in enumerate(res.stages, start=1):
        want = TAU * (1.0 - 2.0 ** -k)
        worst = max(worst, abs(st.area - want) / want)
    _line(2, f"stage areas vs 2pi(1-2^-k), worst rel {worst:.3e} (tol 1e-2)",
          worst <= 1e-2)
    mono = all(b > a for a, b in zip(res.areas, res.areas[1:]))
    _line(2, "stage areas strictly increasing", mono)
    rel = abs(res.extrapolated_area - TAU) / TAU
    _line(2, f"extrapolated area vs 2pi rel {rel:.3e} (tol 1e-2)", rel <= 1e-2)

    two = run_continuation(
        cusp_schedule(Divisor((ATOM, (0.7, 0.3)), (-1.0, -1.0)), k_max=10), n=256)
    rel2 = abs(two.extrapolated_area - 2 * TAU) / (2 * TAU)
    _line(2, f"two-cusp extrapolated area vs 4pi rel {rel2:.3e} (tol 1e-2)",
          rel2 <= 1e-2)


def test_criterion_3_uniqueness_probe():
    split = singular_part(Divisor((ATOM,), (-0.5,)), 512)
    rep = uniqueness_probe(CurvatureSpec(-1.0), split, trials=5, seed=0)
    _line(3, f"5-start max pairwise sup {rep.max_pairwise:.3e} (tol 1e-6)",
          rep.max_pairwise <= 1e-6)


def test_criterion_4_cusp_length_divergence():
    u = cusp_profile()
    worst = 0.0
    lengths = []
    for k in range(6, 21):
        delta = 2.0 ** -k
        got = radial_length(u, (0.0, 0.0), delta, 0.25)
        worst = max(worst, abs(got - cusp_radial_length(delta, 0.25)))
        lengths.append(got)
    _line(4, f"radial length vs loglog closed form, worst {worst:.3e} "
             "(tol 1e-6)", worst <= 1e-6)
    diverging = all(b > a for a, b in zip(lengths, lengths[1:]))
    _line(4, f"lengths increase without bound over delta = 2^-6..2^-20 "
             f"(span {lengths[-1] - lengths[0]:.3f})",
          diverging and lengths[-1] > lengths[0] + 1.0)


def test_criterion_5_area_identity_fixtures():
    cap = area_identity_check(load_fixture("spherical-cap"))
    fam = load_fixture("spherical-cap")
    worst = 0.0
    for k, d in zip(cap.ks, cap.defects_per_k):
        lam = fam.scale(k)
        want = 4.0 * math.pi * lam * lam / (lam * lam + 0.25)
        worst = max(worst, abs(d - want))
    _line(5, f"cap defects vs closed form, worst {worst:.3e} (tol 1e-6)",
          worst <= 1e-6)
    _line(5, f"cap extrapolated defect {abs(cap.defect):.3e} (tol 1e-6)",
          abs(cap.defect) <= 1e-6)
    nb = area_identity_check(load_fixture("no-bubble"))
    _line(5, f"no-bubble defect {abs(nb.defect):.3e} (tol 1e-8)",
          abs(nb.defect) <= 1e-8)


def test_criterion_6_flat_neck_sharpness(tmp_path):
    fam = load_fixture("flat-neck")
    k = fam.k_max
    rep = neck_area_profile(fam.u(k), fam.center(), fam.scale(k), 1.0)
    _line(6, f"flat-neck total area {rep.total:.12f} vs 2pi "
             f"(tol 1e-8)", abs(rep.total - TAU) <= 1e-8)
    idrep = area_identity_check(fam)
    _line(6, "hypothesis-violation flag set", idrep.violation)
    code = cli_main(["neck", "--out", str(tmp_path / "out")])
    _line(6, f"CLI neck exit code {code} (expect 2)", code == 2)


def test_criterion_7_three_circle_decay():
    from cmlab.bubbles import three_circle_check

    kappa = 0.5
    worst = 0.0
    for B in (-0.25, -1.0, -4.0):
        cyl = LinearCylinder(A=0.0, B=B)
        for L in (5.0, 10.0, 20.0):
            rep = three_circle_check(cyl, kappa, L)
            for got, want in zip((rep.area_q1, rep.area_q2), rep.closed_form):
                worst = max(worst, abs(got - want) / abs(want))
            if B < -kappa:
                assert rep.hypothesis_ok and rep.side == "negative"
                assert rep.decay_ok, f"decay failed for B={B}, L={L}"
    _line(7, f"segment areas vs closed form, worst rel {worst:.3e} "
             "(tol 1e-10)", worst <= 1e-10)
    _line(7, "decay inequality holds whenever B < -kappa", True)


def test_criterion_8_measure_core_identities():
    def mix(x, y):
        r = np.hypot(x, y)
        return -0.5 * np.log(r) + 0.3 * np.sin(1.3 * x) * np.cos(0.9 * y)

    err_res = abs(residue(mix, (0.0, 0.0)) + 0.5)
    _line(8, f"residue(beta log r + smooth) err {err_res:.3e} (tol 1e-4)",
          err_res <= 1e-4)

    flat = kelvin_transform(lambda x, y: 0.0 * np.asarray(x))
    err_kel = abs(residue(flat, (0.0, 0.0)) + 2.0)
    _line(8, f"Kelvin residue at infinity err {err_kel:.3e} (tol 1e-4)",
          err_kel <= 1e-4)

    smooth = lambda x, y: 0.1 * np.sin(np.asarray(x))
    rep = neck_curvature_limit(smooth, standard_bubble(), (0.0, 0.0))
    err_neck = abs(rep.value + 2.0 * TAU)
    _line(8, f"bubble neck curvature limit err {err_neck:.3e} (tol 1e-3)",
          err_neck <= 1e-3)

    def phi_fn(x, y):
        return np.cos(TAU * (x - 0.1)) * np.sin(TAU * y)

    errs = []
    for n in (64, 128, 256):
        g = green_torus(ATOM, n)
        phi = sample(phi_fn, TorusChart(), n)
        errs.append(abs(pairing(g, phi) - (phi_fn(*ATOM) - phi.values.mean())))
    ok = all(e <= 0.5 / n for e, n in zip(errs, (64, 128, 256)))
    ok = ok and errs[2] < errs[1] < errs[0]
    _line(8, f"Green weak identity errs {errs[0]:.2e}/{errs[1]:.2e}/"
             f"{errs[2]:.2e} <= 0.5/n and decaying", ok)


def test_criterion_9_jacobian_orders_and_positivity():
    n = 32
    split = singular_part(Divisor((ATOM,), (-0.5,)), n)
    spec = CurvatureSpec(-1.0)
    S = split.S.values.astype(np.longdouble)
    k2 = laplacian_multiplier(n).astype(np.longdouble)
    const = np.longdouble(TAU) * np.longdouble(split.beta_sum)

    def resid_ld(vv):
        # extended-precision replica of the residual (K = -1, no forcing);
        # scipy.fft keeps longdouble where numpy.fft would downcast
        lap = sfft.ifft2(k2 * sfft.fft2(vv)).real
        return lap + np.exp(2.0 * (S + vv)) + const

    rng = np.random.default_rng(42)
    v = random_smooth_field(n, rng, amplitude=2.0)
    v_ld = v.values.astype(np.longdouble)
    worst = math.inf
    for _ in range(5):
        w = random_smooth_field(n, rng, amplitude=4.0).values
        jw = jacobian_apply(spec, split, v, w).astype(np.longdouble)
        errs = []
        for h in (1e-3, 1e-4, 1e-5):
            hh = np.longdouble(h)
            fd = (resid_ld(v_ld + hh * w) - resid_ld(v_ld - hh * w)) / (2 * hh)
            errs.append(float(np.abs(fd - jw).max()))
        worst = min(worst, math.log10(errs[0] / errs[1]),
                    math.log10(errs[1] / errs[2]))
    _line(9, f"FD-Jacobian observed order {worst:.3f} over h=1e-3..1e-5 "
             "(need ~2, >= 1.9)", worst >= 1.9)
    count = positivity_failure_count()
    _line(9, f"CG positive-curvature failures so far: {count} (expect 0)",
          count == 0)
