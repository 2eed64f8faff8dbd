import numpy as np
import pytest

from foliadyn import foliation as fo, poincare_metric as pm
from foliadyn.errors import InputError


def exact_product_eta(z):
    return (1.0 - abs(z) ** 2) / 2.0


def test_flow_disc_product_reference():
    pd = fo.product_disc()
    # the straight flow disc recovers 1/(1+|z|) of the exact value
    for az in (0.0, 0.2, 0.4):
        p = fo.ChartPoint("PLANE", az, 0.1)
        est = pm.eta_flow_disc(pd, p)
        assert est.method == pm.FLOW_DISC
        ratio = est.lower / exact_product_eta(az)
        assert 0.7 <= ratio <= 1.0


def test_chain_refined_product_reference():
    pd = fo.product_disc()
    for az in (0.0, 0.3, 0.6, 0.8):
        p = fo.ChartPoint("PLANE", az, 0.1)
        est = pm.eta_chain_refine(pd, p, depth=8)
        ratio = est.lower / exact_product_eta(az)
        assert 0.93 <= ratio <= 1.01
        assert est.method == pm.CHAIN_REFINED


def test_chain_dominates_flow_disc():
    pd = fo.product_disc()
    lm = fo.linear_model(1j)
    for folx, pt in ((pd, fo.ChartPoint("PLANE", 0.5, 0.0)),
                     (lm, fo.ChartPoint("PLANE", 0.05, 0.08))):
        flow = pm.eta_flow_disc(folx, pt)
        chain = pm.eta_chain_refine(folx, pt, depth=6)
        assert chain.lower >= flow.lower * (1.0 - 1e-12)
        zero = pm.eta_chain_refine(folx, pt, depth=0)
        assert zero.lower == pytest.approx(flow.lower, rel=1e-9)


def test_chain_monotone_in_depth_jouanolou():
    f = fo.jouanolou(2)
    p = fo.ChartPoint("AFF0", 0.3 + 0.2j, -0.4 + 0.1j)
    prev = 0.0
    for depth in (0, 2, 5):
        est = pm.eta_chain_refine(f, p, depth=depth)
        assert est.lower >= prev * (1.0 - 1e-12)
        prev = est.lower


def test_flow_disc_monotone_in_radius_ladder():
    # sup over a finer certified candidate set can only grow
    pd = fo.product_disc()
    p = fo.ChartPoint("PLANE", 0.4, 0.0)
    coarse = np.geomspace(1e-3, 4.0, 16)
    fine = np.geomspace(1e-3, 4.0, 256)
    e_coarse = pm.eta_flow_disc(pd, p, radius_ladder=coarse)
    e_fine = pm.eta_flow_disc(pd, p, radius_ladder=fine)
    assert e_fine.lower >= e_coarse.lower


def test_linear_model_band_near_singularity():
    lm = fo.linear_model(1j)
    ratios = []
    for s in np.geomspace(1e-4, 1e-1, 7):
        p = fo.ChartPoint("PLANE", s / np.sqrt(2), s / np.sqrt(2))
        est = pm.eta_chain_refine(lm, p, depth=4)
        ratios.append(est.lower / (s * pm.log_star(s)))
    assert max(ratios) / min(ratios) < 3.0
    # estimates stay below the exact quadrant value (lower-bound honesty)
    for s, r in zip(np.geomspace(1e-4, 1e-1, 7), ratios):
        wall = abs(np.log(s / np.sqrt(2)))
        exact = 0.5 * np.sqrt(2.0) * wall * s
        assert r * s * pm.log_star(s) <= exact * 1.01


def test_eta_grid_cache_product_disc():
    pd = fo.product_disc()
    grid = pm.GridEta2D(pd, n=64, depth=6, radius=0.9)
    assert grid.validation_defect < 0.07
    zs = np.array([0.1 + 0.2j, -0.5 + 0.1j, 0.3 - 0.6j])
    vals = grid(np.zeros(3, dtype=np.int8), zs, np.zeros(3, dtype=complex))
    for z, v in zip(zs, vals):
        assert v == pytest.approx(exact_product_eta(z), rel=0.07)


def test_exact_product_eta_field():
    field = pm.ExactProductEta()
    z = np.array([0.0, 0.5 + 0.1j])
    out = field(None, z, None)
    assert out[0] == pytest.approx(0.5)
    assert field.method == pm.REFERENCE_EXACT


def test_log_star():
    assert pm.log_star(1.0) == 1.0
    assert pm.log_star(np.e) == 2.0
    assert pm.log_star(1.0 / np.e) == 2.0


def test_build_eta_field_plane_raises_for_linear_model():
    with pytest.raises(InputError):
        pm.build_eta_field(fo.linear_model(1j))


def test_knn_eta_field_round_trip(tmp_path):
    f = fo.jouanolou(2)
    field = pm.build_eta_field(f, depth=2, n_cloud=60, seed=11,
                               cache_dir=str(tmp_path), pilot_horizon=2.0,
                               pilot_paths=16)
    # cached reload gives identical values
    field2 = pm.build_eta_field(f, depth=2, n_cloud=60, seed=11,
                                cache_dir=str(tmp_path), pilot_horizon=2.0,
                                pilot_paths=16)
    q = (np.zeros(4, dtype=np.int8),
         np.array([0.3 + 0.2j, 0.1 - 0.5j, -0.6 + 0.1j, 0.05 + 0.05j]),
         np.array([-0.4 + 0.1j, 0.5j, 0.2 - 0.3j, 0.6 + 0.1j]))
    v1 = field(*q)
    v2 = field2(*q)
    assert np.array_equal(v1, v2)
    assert np.all(v1 > 0)
    assert np.isfinite(pm.brody_sup(field))


def test_eta_near_singularity_uses_asymptotics():
    f = fo.jouanolou(2)
    recs = f.singularities()
    rec = recs[0]
    sing = {fo.AFFINE_CHARTS.index(rec.location.chart):
            (np.array([[rec.location.z, rec.location.w]]), np.array([0.4]))}
    field = pm.KnnEtaField(f, np.zeros(2, dtype=np.int8),
                           np.array([0.3 + 0.2j, 0.4 - 0.1j]),
                           np.array([-0.4 + 0.1j, 0.3 + 0.2j]),
                           np.array([0.8, 0.9]), sing, 0.0)
    ci = fo.AFFINE_CHARTS.index(rec.location.chart)
    s = 1e-3
    v = field(np.array([ci]), np.array([rec.location.z + s]),
              np.array([rec.location.w]))
    assert v[0] == pytest.approx(0.4 * s * pm.log_star(s), rel=1e-6)
