import json

import numpy as np
import pytest

from foliadyn import foliation as fo
from foliadyn.errors import InputError


def _random_chart_point(rng, chart="AFF0", scale=0.8):
    z = scale * (rng.random() + 1j * rng.random() - 0.5 - 0.5j) * 2
    w = scale * (rng.random() + 1j * rng.random() - 0.5 - 0.5j) * 2
    return fo.ChartPoint(chart, z, w)


# --- charts ----------------------------------------------------------------

def test_chart_round_trips():
    rng = np.random.default_rng(1)
    for _ in range(200):
        p = _random_chart_point(rng)
        for target in fo.AFFINE_CHARTS:
            h = fo.to_homogeneous(p)
            if abs(h[fo.AFFINE_CHARTS.index(target)]) < 0.2:
                continue  # stay away from the chart boundary collar
            q = fo.transition_point(p, target)
            back = fo.transition_point(q, p.chart)
            assert abs(back.z - p.z) < 1e-12 and abs(back.w - p.w) < 1e-12


def test_chart_point_validation():
    with pytest.raises(InputError):
        fo.ChartPoint("AFF7", 0, 0)
    with pytest.raises(InputError):
        fo.ChartPoint("AFF0", np.inf, 0)


# --- fields ------------------------------------------------------------------

def test_jouanolou_field_at_origin():
    f = fo.jouanolou(2)
    assert fo.evaluate_field(f, fo.ChartPoint("AFF0", 0, 0)) == (0, 1)


def test_linear_model_field():
    lm = fo.linear_model(1j)
    vz, vw = fo.evaluate_field(lm, fo.ChartPoint("PLANE", 0.2, 0.1))
    assert vz == pytest.approx(0.2)
    assert vw == pytest.approx(0.1j)


def test_linear_model_rejects_real_lambda():
    with pytest.raises(InputError):
        fo.linear_model(2.0)


def test_chart_compatibility_of_directions():
    # pushed-forward field directions agree projectively across charts, and
    # the pushed field equals x_b^{d-1} times the target-chart field
    f = fo.jouanolou(2)
    rng = np.random.default_rng(7)
    for _ in range(100):
        p = _random_chart_point(rng, "AFF0")
        vu, vv = f.field("AFF0", p.z, p.w)
        for target in ("AFF1", "AFF2"):
            h = fo.to_homogeneous(p)
            if abs(h[fo.AFFINE_CHARTS.index(target)]) < 0.2:
                continue
            q = fo.transition_point(p, target)
            pu, pv = fo.transition_tangent(p, vu, vv, target)
            wu, wv = f.field(target, q.z, q.w)
            cross = pu * wv - pv * wu
            scale = max(abs(pu), abs(pv), abs(wu), abs(wv), 1e-30)
            assert abs(cross) / scale ** 2 < 1e-10
            fac = fo.chart_switch_time_factor(p, target, f.degree)
            assert abs(pu - fac * wu) <= 1e-10 * max(1.0, abs(pu))
            assert abs(pv - fac * wv) <= 1e-10 * max(1.0, abs(pv))


def test_radial_field_rejected():
    with pytest.raises(InputError):
        fo.PolyFoliation(kind="projective", degree=1, homog=(
            {(1, 0, 0): 1.0}, {(0, 1, 0): 1.0}, {(0, 0, 1): 1.0}))


def test_degree_mismatch_rejected():
    with pytest.raises(InputError):
        fo.PolyFoliation(kind="projective", degree=2,
                         homog=({(1, 0, 0): 1.0}, {(0, 0, 2): 1.0},
                                {(2, 0, 0): 1.0}))


# --- singularities ------------------------------------------------------------

def _oracle_jouanolou_count(d):
    """Independent root count: the AFF0 system reduces to u^N = 1 with
    N = d^2+d+1 and v = u^{-d}; roots via the companion matrix, residuals
    verified; no roots lie on the line z0 = 0."""
    N = d * d + d + 1
    coeffs = np.zeros(N + 1)
    coeffs[0], coeffs[-1] = 1.0, -1.0
    u = np.roots(coeffs)
    v = u ** (-d)
    ok = (np.abs(v ** d - u ** (d + 1)) < 1e-9) & (np.abs(1 - v * u ** d) < 1e-9)
    assert ok.all()
    return len(np.unique(np.round(u, 8)))


@pytest.mark.parametrize("d", [2, 3])
def test_jouanolou_singularities(d):
    f = fo.jouanolou(d)
    recs = f.singularities()
    assert len(recs) == _oracle_jouanolou_count(d)
    for rec in recs:
        assert rec.classification is fo.SingClass.HYPERBOLIC
        assert abs(rec.ratio.imag) > fo.TOL_IMAG
        vu, vv = f.field(rec.location.chart, rec.location.z, rec.location.w)
        assert abs(vu) + abs(vv) < 1e-8 * f.field_scale(rec.location.chart)


def test_linear_model_singularity():
    recs = fo.linear_model(1j).singularities()
    assert len(recs) == 1
    assert recs[0].location.coords == (0, 0)
    evs = sorted(recs[0].eigenvalues, key=lambda e: e.real, reverse=True)
    assert evs[0] == pytest.approx(1.0) and evs[1] == pytest.approx(1j)


def test_product_disc_has_no_singularity():
    assert fo.product_disc().singularities() == []


# --- local model ---------------------------------------------------------------

def test_local_model_point_validation():
    with pytest.raises(InputError):
        fo.LocalModelPoint(1.0, 0.1, 0.1)   # real lambda
    with pytest.raises(InputError):
        fo.LocalModelPoint(1j, 1.0, 0.1)    # on the bidisc boundary


def test_local_model_leaf():
    m = fo.LocalModelPoint(1j, 0.1, 0.1)
    assert fo.local_model_leaf(m, 0.0) == (m.z, m.w)
    z1, w1 = fo.local_model_leaf(m, 1.0)
    assert z1 == pytest.approx(0.1 * np.exp(1j))
    assert w1 == pytest.approx(0.1 * np.exp(-1.0))
    m0 = fo.LocalModelPoint(1j, 0.0, 0.3)
    for zeta in (0.5, 1j, 2 - 3j):
        assert fo.local_model_leaf(m0, zeta)[0] == 0.0  # separatrix invariant


def test_sector_contains_origin_and_matches_leaf():
    rng = np.random.default_rng(5)
    for _ in range(40):
        m = fo.LocalModelPoint(rng.uniform(-1, 1) + 1j * rng.uniform(0.2, 3),
                               0.8 * rng.random() * np.exp(2j * np.pi * rng.random()),
                               0.8 * rng.random() * np.exp(2j * np.pi * rng.random()))
        if m.z == 0 or m.w == 0:
            continue
        assert fo.local_model_sector_contains(m, 0.0)
        for _ in range(250):
            zeta = complex(rng.uniform(-6, 6), rng.uniform(-6, 6))
            z1, w1 = fo.local_model_leaf(m, zeta)
            inside = abs(z1) < 1 and abs(w1) < 1
            assert fo.local_model_sector_contains(m, zeta) == inside


def test_sector_fails_deep_below():
    m = fo.LocalModelPoint(1j, 0.5, 0.5)
    assert not fo.local_model_sector_contains(m, -40j)


def test_holonomy_identity_and_separatrix():
    m = fo.LocalModelPoint(1j, 0.1, 0.1)
    assert fo.local_model_holonomy(m, 0.0) == pytest.approx(1.0, abs=1e-15)
    mw0 = fo.LocalModelPoint(0.7 + 1.3j, 0.4, 0.0)
    for zeta in (1.0, 1j, -2.0 + 0.5j):
        expect = np.exp(-np.imag(mw0.lam * zeta))
        assert fo.local_model_holonomy(mw0, zeta) == pytest.approx(
            expect, rel=1e-14)


def test_holonomy_against_flow_time_form():
    # independent algebraic route: log Phi = Re(i zeta (1 + lam))
    #   + log|Z(x)| - log|Z(psi_x(zeta))| with |Z|^2 = |z|^2 + |lam w|^2
    rng = np.random.default_rng(6)
    for _ in range(300):
        lam = rng.uniform(-2, 2) + 1j * rng.uniform(0.2, 3)
        m = fo.LocalModelPoint(
            lam, 0.9 * rng.random() * np.exp(2j * np.pi * rng.random()),
            0.9 * rng.random() * np.exp(2j * np.pi * rng.random()))
        if m.z == 0 and m.w == 0:
            continue
        zeta = complex(rng.uniform(-2, 2), rng.uniform(-2, 2))
        z1, w1 = fo.local_model_leaf(m, zeta)
        other = (np.real(1j * zeta * (1 + lam))
                 + 0.5 * np.log(abs(m.z) ** 2 + abs(lam * m.w) ** 2)
                 - 0.5 * np.log(abs(z1) ** 2 + abs(lam * w1) ** 2))
        assert fo.log_local_model_holonomy(m, zeta) == pytest.approx(
            other, abs=1e-12)


def test_holonomy_multiplicative():
    rng = np.random.default_rng(8)
    for _ in range(100):
        lam = rng.uniform(-2, 2) + 1j * rng.uniform(0.2, 3)
        m = fo.LocalModelPoint(lam, 0.5 * np.exp(2j * np.pi * rng.random()),
                               0.5 * np.exp(2j * np.pi * rng.random()))
        z1, z2 = (complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
                  for _ in range(2))
        mid = fo.local_model_leaf(m, z1)
        if max(abs(mid[0]), abs(mid[1])) >= 1:
            continue
        m2 = fo.LocalModelPoint(lam, *mid)
        whole = fo.log_local_model_holonomy(m, z1 + z2)
        parts = (fo.log_local_model_holonomy(m, z1)
                 + fo.log_local_model_holonomy(m2, z2))
        assert whole == pytest.approx(parts, abs=1e-12)


def test_holonomy_rejects_origin():
    with pytest.raises(InputError):
        fo.local_model_holonomy(fo.LocalModelPoint(1j, 0.0, 0.0), 1.0)


def _fd_flat_laplacian(f, h=1e-3):
    def lap(hh):
        return (f(hh) + f(-hh) + f(1j * hh) + f(-1j * hh) - 4 * f(0.0)) / hh ** 2
    l1, l2 = lap(h), lap(h / 2)
    return (4.0 * l2 - l1) / 3.0


def test_curvature_numerator_separatrix_and_sign():
    assert fo.local_model_curvature_numerator(
        fo.LocalModelPoint(1j, 0.0, 0.5)) == 0.0
    assert fo.local_model_curvature_numerator(
        fo.LocalModelPoint(1j, 0.5, 0.0)) == 0.0
    # the |lam-1|^2 factor vanishes as lam -> 1 (real lam itself is rejected)
    near_one = fo.local_model_curvature_numerator(
        fo.LocalModelPoint(1.0 + 1e-6j, 0.3, 0.3))
    assert abs(near_one) < 1e-12
    with pytest.raises(InputError):
        fo.LocalModelPoint(1.0, 0.3, 0.3)


def test_curvature_numerator_matches_finite_differences():
    rng = np.random.default_rng(9)
    for _ in range(100):
        lam = rng.uniform(-2, 2) + 1j * rng.uniform(0.2, 3)
        m = fo.LocalModelPoint(
            lam, (0.05 + 0.6 * rng.random()) * np.exp(2j * np.pi * rng.random()),
            (0.05 + 0.6 * rng.random()) * np.exp(2j * np.pi * rng.random()))
        fd = _fd_flat_laplacian(lambda zz: fo.log_local_model_holonomy(m, zz))
        closed = fo.local_model_curvature_numerator(m)
        assert fd / (8.0 * np.pi) == pytest.approx(closed, rel=1e-4)
        assert closed <= 0.0


# --- spec files ------------------------------------------------------------------

def test_spec_builtin_round_trip(tmp_path):
    path = tmp_path / "fol.json"
    path.write_text(json.dumps({"builtin": "jouanolou", "degree": 2}))
    f = fo.load_foliation(path)
    assert f.name == "jouanolou-2" and f.degree == 2


def test_spec_toml(tmp_path):
    path = tmp_path / "fol.toml"
    path.write_text('builtin = "linear_model"\n"lambda" = [0.0, 1.0]\n')
    f = fo.load_foliation(path)
    assert f.kind == "plane"


def test_spec_explicit_components():
    f = fo.foliation_from_dict({
        "degree": 2,
        "components": [
            [{"exponents": [0, 2, 0], "coeff": [1.0, 0.0]}],
            [{"exponents": [0, 0, 2], "coeff": [1.0, 0.0]}],
            [{"exponents": [2, 0, 0], "coeff": [1.0, 0.0]}],
        ]})
    assert len(f.singularities()) == 7


def test_spec_rejects_unknown_keys_and_bad_degree():
    with pytest.raises(InputError):
        fo.foliation_from_dict({"builtin": "jouanolou", "degree": 2,
                                "typo": 1})
    with pytest.raises(InputError):
        fo.foliation_from_dict({
            "degree": 2,
            "components": [
                [{"exponents": [0, 1, 0], "coeff": [1.0, 0.0]}],
                [{"exponents": [0, 0, 2], "coeff": [1.0, 0.0]}],
                [{"exponents": [2, 0, 0], "coeff": [1.0, 0.0]}],
            ]})
