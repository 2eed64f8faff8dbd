import numpy as np
import pytest
from scipy.stats import ks_2samp, kstest

from foliadyn import foliation as fo, hyperbolic as hyp, leafwise as lw
from foliadyn.errors import InputError, NumericalError


def _rand_model(rng, im_lo=0.2, im_hi=3.0, r_hi=0.85):
    lam = rng.uniform(-2, 2) + 1j * rng.uniform(im_lo, im_hi)
    z = (0.03 + r_hi * rng.random()) * np.exp(2j * np.pi * rng.random())
    w = (0.03 + r_hi * rng.random()) * np.exp(2j * np.pi * rng.random())
    return fo.LocalModelPoint(lam, z, w)


def test_flow_matches_local_model_leaf():
    rng = np.random.default_rng(21)
    for _ in range(25):
        m = _rand_model(rng, r_hi=0.5)
        lm = fo.linear_model(m.lam)
        zeta = complex(rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8))
        exact = fo.local_model_leaf(m, zeta)
        if max(abs(exact[0]), abs(exact[1])) > 0.97:
            continue
        seg = lw.flow_step(lm, fo.ChartPoint("PLANE", m.z, m.w), 1j * zeta)
        assert abs(seg.end.z - exact[0]) < 1e-9
        assert abs(seg.end.w - exact[1]) < 1e-9


def test_flow_step_identity_and_reversibility():
    lm = fo.linear_model(0.5 + 1.5j)
    p = fo.ChartPoint("PLANE", 0.2, -0.1 + 0.2j)
    seg0 = lw.flow_step(lm, p, 0.0)
    assert seg0.end == p and seg0.trace_integral == 0 and seg0.log_h == 0.0
    seg = lw.flow_step(lm, p, 0.3 - 0.4j)
    back = lw.flow_step(lm, seg.end, -(0.3 - 0.4j))
    assert abs(back.end.z - p.z) < 1e-8 and abs(back.end.w - p.w) < 1e-8


def test_flow_step_singular_proximity_error():
    lm = fo.linear_model(1j)
    p = fo.ChartPoint("PLANE", 1e-7, 1e-7)
    with pytest.raises(NumericalError):
        lw.flow_step(lm, p, 1.0, prox_radius=1e-6)


def test_holonomy_matches_closed_form_randomized():
    rng = np.random.default_rng(22)
    worst = 0.0
    n_done = 0
    while n_done < 200:
        m = _rand_model(rng)
        zeta = complex(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5))
        end = fo.local_model_leaf(m, zeta)
        if max(abs(end[0]), abs(end[1])) > 0.97:
            continue
        lm = fo.linear_model(m.lam)
        try:
            seg = lw.flow_step(lm, fo.ChartPoint("PLANE", m.z, m.w),
                               1j * zeta, prox_radius=0.0)
        except NumericalError:
            continue  # the segment crossed outside the bidisc mid-flight
        diff = abs(seg.log_h - fo.log_local_model_holonomy(m, zeta))
        worst = max(worst, diff)
        n_done += 1
    assert worst < 1e-8


def test_holonomy_variational_oracle_agrees():
    rng = np.random.default_rng(23)
    worst = 0.0
    n_done = 0
    while n_done < 60:
        m = _rand_model(rng)
        zeta = complex(rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2))
        end = fo.local_model_leaf(m, zeta)
        if max(abs(end[0]), abs(end[1])) > 0.97:
            continue
        lm = fo.linear_model(m.lam)
        p = fo.ChartPoint("PLANE", m.z, m.w)
        try:
            seg = lw.flow_step(lm, p, 1j * zeta, prox_radius=0.0)
            var = lw.holonomy_variational(lm, p, 1j * zeta)
        except NumericalError:
            continue
        worst = max(worst, abs(seg.log_h - var))
        n_done += 1
    assert worst < 1e-8


def test_holonomy_empty_path_is_zero():
    ps = lw.PathSample(start=fo.ChartPoint("PLANE", 0.1, 0.1),
                       nodes=[(0.0, fo.ChartPoint("PLANE", 0.1, 0.1), 0.0,
                               0j)], termination=lw.HORIZON)
    assert lw.holonomy_along(None, ps) == 0.0
    assert lw.holonomy_along(None, []) == 0.0


def test_holonomy_concatenation_exact():
    lm = fo.linear_model(1j)
    p = fo.ChartPoint("PLANE", 0.2, 0.1)
    seg1 = lw.flow_step(lm, p, 0.2 + 0.1j)
    seg2 = lw.flow_step(lm, seg1.end, -0.1 + 0.3j)
    whole = lw.flow_step(lm, p, 0.2 + 0.1j)  # same first leg
    assert lw.holonomy_along(lm, [seg1, seg2]) == pytest.approx(
        seg1.log_h + seg2.log_h)
    # multiplicative law against the closed form on the composite
    m = fo.LocalModelPoint(1j, 0.2, 0.1)
    z1, z2 = (0.2 + 0.1j) / 1j, (-0.1 + 0.3j) / 1j
    m2 = fo.LocalModelPoint(1j, *fo.local_model_leaf(m, z1))
    assert seg1.log_h + seg2.log_h == pytest.approx(
        fo.log_local_model_holonomy(m, z1)
        + fo.log_local_model_holonomy(m2, z2), abs=1e-9)


def test_integrator_order_under_tolerance():
    lm = fo.linear_model(0.3 + 1.1j)
    p = fo.ChartPoint("PLANE", 0.15, 0.1)
    m = fo.LocalModelPoint(0.3 + 1.1j, 0.15, 0.1)
    zeta = 0.6 - 0.5j
    exact = fo.local_model_leaf(m, zeta)
    errs = []
    for rtol in (1e-6, 1e-8, 1e-10):
        seg = lw.flow_step(lm, p, 1j * zeta, rtol=rtol)
        errs.append(abs(seg.end.z - exact[0]) + abs(seg.end.w - exact[1]))
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] < 1e-10


def test_curvature_matches_local_model_numerator():
    rng = np.random.default_rng(24)
    for _ in range(25):
        m = _rand_model(rng, r_hi=0.5)
        lm = fo.linear_model(m.lam)
        p = fo.ChartPoint("PLANE", m.z, m.w)
        eta = 0.1 + 0.5 * rng.random()
        k = lw.curvature_density(lm, p, eta)
        absz2 = abs(m.z) ** 2 + abs(m.lam * m.w) ** 2
        target = 8.0 * np.pi * fo.local_model_curvature_numerator(m)
        assert k * absz2 / eta ** 2 == pytest.approx(target, rel=2e-4,
                                                     abs=1e-9)
        assert k <= 0.0


def test_curvature_section_independence():
    lm = fo.linear_model(0.8 + 1.7j)
    p = fo.ChartPoint("PLANE", 0.35, 0.15)   # asymmetric components
    kz = lw.curvature_density(lm, p, 0.2, section="z")
    kw = lw.curvature_density(lm, p, 0.2, section="w")
    assert kz == pytest.approx(kw, rel=1e-5)


def test_curvature_rejects_vanishing_field():
    lm = fo.linear_model(1j)
    with pytest.raises(InputError):
        lw.curvature_density(lm, fo.ChartPoint("PLANE", 0.0, 0.0), 0.2)


def _product_eta(chart, z, w):
    return (1.0 - np.minimum(np.abs(z), 1.0 - 1e-12) ** 2) / 2.0


def test_product_disc_radial_law_medium():
    # chained sampler vs the exact kernel radial law (full-size run in the
    # acceptance suite; this is the same check at reduced n)
    pd = fo.product_disc()
    start = fo.ChartPoint("PLANE", 0.0, 0.0)
    out = lw.sample_paths(pd, start, 1.0, _product_eta, seed=101,
                          n_paths=12_000)
    assert set(out["reason"]) == {lw.HORIZON}
    rho = hyp.radius_to_hyperbolic(np.minimum(np.abs(out["z"]), 1 - 1e-12))
    tab = hyp.HeatKernelTable.build(1.0)
    ks = kstest(rho, lambda r: tab.cdf(r)).statistic
    assert ks < 0.03


def test_bm_step_small_dt_concentrates():
    # displacement -> 0 in probability as dt -> 0 (scale ~ eta sqrt(dt))
    pd = fo.product_disc()
    rng = np.random.default_rng(31)
    p = fo.ChartPoint("PLANE", 0.3, 0.0)
    eta = float(_product_eta(None, np.array([0.3]), None)[0])
    q90 = {}
    for dt in (1e-2, 1e-4):
        disp = []
        for _ in range(200):
            seg, _ = lw.bm_step_leafwise(pd, p, dt, eta, rng)
            disp.append(abs(seg.end.z - p.z))
        q90[dt] = np.quantile(disp, 0.9)
    assert q90[1e-4] < 0.3 * q90[1e-2]
    assert q90[1e-4] < 6.0 * eta * np.sqrt(2e-4)


def test_bm_step_dynkin_sign_and_size():
    # mean log H increment over many steps matches kappa * dt within 3 sigma
    lam = 1j
    lm = fo.linear_model(lam)
    p = fo.ChartPoint("PLANE", 0.25, 0.2)
    eta = 0.15
    dt = 0.01
    kappa = lw.curvature_density(lm, p, eta)
    rng = np.random.default_rng(32)
    incs = []
    for _ in range(3000):
        seg, _ = lw.bm_step_leafwise(lm, p, dt, eta, rng)
        incs.append(seg.log_h)
    incs = np.asarray(incs)
    se = incs.std(ddof=1) / np.sqrt(len(incs))
    assert abs(incs.mean() - kappa * dt) < 3.0 * se
    assert np.sign(incs.mean()) == np.sign(kappa)


def test_sample_leaf_path_nodes_and_termination():
    lm = fo.linear_model(1j)
    start = fo.ChartPoint("PLANE", 0.3, 0.2)
    eta_fn = lambda c, z, w: np.full(len(z), 0.05)
    ps = lw.sample_leaf_path(lm, start, 0.0, eta_fn, seed=5)
    assert len(ps.nodes) == 1 and ps.log_h == 0.0
    ps = lw.sample_leaf_path(lm, start, 2.0, eta_fn, seed=5)
    times = [nd[0] for nd in ps.nodes]
    assert all(b > a for a, b in zip(times, times[1:]))
    assert ps.termination in (lw.HORIZON, lw.CHART_FAILURE,
                              lw.SINGULAR_PROXIMITY)
    assert all(np.isfinite(nd[2]) for nd in ps.nodes)


def test_path_segments_reintegrate():
    # consecutive nodes lie on the same leaf: re-integration of the flow
    # time between nodes reproduces the next node
    lm = fo.linear_model(1j)
    start = fo.ChartPoint("PLANE", 0.3, 0.2)
    eta_fn = lambda c, z, w: np.full(len(z), 0.05)
    ps = lw.sample_leaf_path(lm, start, 1.0, eta_fn, seed=7)
    if ps.termination != lw.HORIZON:
        pytest.skip("path left the bidisc; nothing to re-integrate")
    checked = 0
    for (t0, p0, _, tau0), (t1, p1, _, tau1) in zip(ps.nodes, ps.nodes[1:]):
        seg = lw.flow_step(lm, p0, tau1 - tau0, prox_radius=0.0)
        assert abs(seg.end.z - p1.z) < 1e-8
        assert abs(seg.end.w - p1.w) < 1e-8
        checked += 1
        if checked > 20:
            break
    assert checked > 0


def test_markov_shift_property():
    # the law after time 1 equals the law of a fresh path of length 1/2
    # started from the time-1/2 marginal (memoryless construction)
    pd = fo.product_disc()
    start = fo.ChartPoint("PLANE", 0.0, 0.0)
    n = 4000
    direct = lw.sample_paths(pd, start, 1.0, _product_eta, seed=1000,
                             n_paths=n)
    half = lw.sample_paths(pd, start, 0.5, _product_eta, seed=2000,
                           n_paths=n)
    mids = [fo.ChartPoint("PLANE", z, w) for z, w in zip(half["z"],
                                                         half["w"])]
    rest = lw.sample_paths(pd, mids, 0.5, _product_eta, seed=3000,
                           n_paths=n)
    ks = ks_2samp(np.abs(direct["z"]), np.abs(rest["z"])).statistic
    assert ks < 0.04


def test_shift_path_basics():
    lm = fo.linear_model(1j)
    start = fo.ChartPoint("PLANE", 0.3, 0.2)
    eta_fn = lambda c, z, w: np.full(len(z), 0.05)
    ps = lw.sample_leaf_path(lm, start, 2.0, eta_fn, seed=11)
    assert lw.shift_path(ps, 0.0) is ps
    # composition is exact when the shifts land on recorded nodes
    s = ps.nodes[len(ps.nodes) // 3][0]
    shifted = lw.shift_path(ps, s)
    t = shifted.nodes[len(shifted.nodes) // 3][0]
    twice = lw.shift_path(shifted, t)
    once = lw.shift_path(ps, s + t)
    assert [nd[0] for nd in twice.nodes] == pytest.approx(
        [nd[0] for nd in once.nodes], abs=1e-12)
    assert twice.nodes[0][1] == once.nodes[0][1]
    # log H additivity across the cut reproduces the multiplicative law
    cut = lw.shift_path(ps, s)
    head_lh = ps.log_h - cut.log_h
    assert head_lh + cut.log_h == pytest.approx(ps.log_h, abs=1e-12)
    with pytest.raises(InputError):
        lw.shift_path(ps, ps.total_time + 1.0)


def test_jouanolou_terminations_mostly_horizon():
    f = fo.jouanolou(2)
    start = fo.ChartPoint("AFF0", 0.3 + 0.2j, -0.4 + 0.1j)
    eta_fn = lambda c, z, w: np.full(len(z), 0.2)
    out = lw.sample_paths(f, start, 10.0, eta_fn, seed=3, n_paths=256)
    frac_sing = np.mean(out["reason"] == lw.SINGULAR_PROXIMITY)
    assert frac_sing < 0.01
    assert np.mean(out["reason"] == lw.HORIZON) > 0.95


def test_sample_paths_deterministic_per_stream():
    f = fo.jouanolou(2)
    start = fo.ChartPoint("AFF0", 0.3 + 0.2j, -0.4 + 0.1j)
    eta_fn = lambda c, z, w: np.full(len(z), 0.2)
    a = lw.sample_paths(f, start, 1.0, eta_fn, seed=9, n_paths=32)
    b = lw.sample_paths(f, start, 1.0, eta_fn, seed=9, n_paths=32)
    assert np.array_equal(a["z"], b["z"]) and np.array_equal(a["log_h"],
                                                             b["log_h"])
    c = lw.sample_paths(f, start, 1.0, eta_fn, seed=9, n_paths=32,
                        stream_id=1)
    assert not np.array_equal(a["z"], c["z"])


def test_export_paths_csv(tmp_path):
    lm = fo.linear_model(1j)
    start = fo.ChartPoint("PLANE", 0.3, 0.2)
    eta_fn = lambda c, z, w: np.full(len(z), 0.05)
    ps = lw.sample_leaf_path(lm, start, 0.5, eta_fn, seed=13, node_stride=5)
    out = tmp_path / "paths.csv"
    lw.export_paths_csv([ps], out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "path_id,t,chart,re0,im0,re1,im1,logH"
    assert len(lines) == len(ps.nodes) + 1
