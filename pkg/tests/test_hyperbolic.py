import numpy as np
import pytest
from scipy.stats import kstest

from foliadyn import constants, hyperbolic as hyp
from foliadyn.errors import InputError

# Frozen reference values computed by independent high-precision quadrature
# (scipy.quad / mpmath oracles) before this module was written.
P_1_1 = 4.149118395782223e-02
P_2_1 = 1.591411576891043e-02
P_05_05 = 1.168162239484122e-01
RHO_MED_1 = 1.930540473491
RHO_MED_4 = 5.184516462407
MEAN_RHO_1 = 2.037133978399
MEAN_ABS2_1 = 0.531225559017
MEAN_ABS2_2 = 0.733911672395


def test_disc_point_rejects_boundary():
    with pytest.raises(InputError):
        hyp.DiscPoint(1.0)
    with pytest.raises(InputError):
        hyp.DiscPoint(0.8 + 0.7j)
    assert hyp.DiscPoint(0.3 + 0.4j).value == 0.3 + 0.4j


def test_radius_convert_fixed_points_and_log3():
    assert hyp.radius_to_hyperbolic(0.0) == 0.0
    assert hyp.radius_from_hyperbolic(0.0) == 0.0
    assert hyp.radius_to_hyperbolic(0.5) == pytest.approx(np.log(3.0),
                                                          abs=1e-15)


def test_radius_convert_round_trip():
    r = np.linspace(0.0, 0.999, 257)
    back = hyp.radius_from_hyperbolic(hyp.radius_to_hyperbolic(r))
    assert np.max(np.abs(back - r)) < 1e-14


def test_radius_convert_domain_errors():
    with pytest.raises(InputError):
        hyp.radius_to_hyperbolic(1.0)
    with pytest.raises(InputError):
        hyp.radius_from_hyperbolic(-0.1)


def test_dist_hyperbolic_basic():
    o = hyp.DiscPoint(0.0)
    assert hyp.dist_hyperbolic(o, o) == 0.0
    assert hyp.dist_hyperbolic(o, hyp.DiscPoint(0.5)) == pytest.approx(
        np.log(3.0), abs=1e-14)
    a, b = hyp.DiscPoint(0.3), hyp.DiscPoint(-0.3)
    expect = hyp.dist_hyperbolic(o, hyp.DiscPoint(0.6 / 1.09))
    assert hyp.dist_hyperbolic(a, b) == pytest.approx(expect, abs=1e-14)
    assert hyp.dist_hyperbolic(a, b) == pytest.approx(
        hyp.dist_hyperbolic(b, a), abs=1e-15)


def test_dist_symmetric_zero_iff_equal():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a = hyp.DiscPoint(0.95 * (rng.random() * np.exp(2j * np.pi * rng.random())))
        b = hyp.DiscPoint(0.95 * (rng.random() * np.exp(2j * np.pi * rng.random())))
        dab = hyp.dist_hyperbolic(a, b)
        assert dab == pytest.approx(hyp.dist_hyperbolic(b, a), rel=1e-13)
        assert dab > 0.0 or a.value == b.value
    assert hyp.dist_hyperbolic(a, a) == 0.0


def test_geodesic_ray():
    assert hyp.geodesic_ray(0.37, 0.0).value == 0.0
    assert hyp.geodesic_ray(0.0, np.log(3.0)).value == pytest.approx(0.5,
                                                                     abs=1e-15)
    assert hyp.geodesic_ray(0.25, 1.0).value == pytest.approx(
        1j * np.tanh(0.5), abs=1e-15)
    # beyond R ~ 9 the euclidean radius tanh(R/2) is within float eps of 1
    # and the round trip cannot resolve 1e-12 anymore
    for theta in (0.0, 0.13, 0.77):
        for R in (0.2, 1.0, 5.0, 8.0):
            p = hyp.geodesic_ray(theta, R)
            assert hyp.dist_hyperbolic(hyp.DiscPoint(0.0), p) == pytest.approx(
                R, abs=1e-12)


def test_heat_kernel_reference_values():
    assert hyp.heat_kernel(1.0, 1.0) == pytest.approx(P_1_1, rel=1e-8)
    assert hyp.heat_kernel(2.0, 1.0) == pytest.approx(P_2_1, rel=1e-8)
    assert hyp.heat_kernel(0.5, 0.5) == pytest.approx(P_05_05, rel=1e-8)


def test_heat_kernel_monotone_in_rho():
    assert hyp.heat_kernel(2.0, 1.0) < hyp.heat_kernel(1.0, 1.0)
    rho = np.linspace(0.0, 6.0, 61)
    p = hyp.heat_kernel(rho, 1.0)
    assert np.all(np.diff(p) < 0.0)
    assert np.all(p > 0.0)


def test_heat_kernel_normalization():
    for t in (0.1, 0.5, 1.0, 4.0):
        assert abs(hyp.kernel_normalization_residual(t)) < 1e-6


def test_heat_kernel_rejects_bad_args():
    with pytest.raises(InputError):
        hyp.heat_kernel(1.0, 0.0)
    with pytest.raises(InputError):
        hyp.heat_kernel(-1.0, 1.0)


def test_green_identity():
    for ay in (0.3, 0.5, 0.9):
        res, bound = hyp.green_identity_residual(ay)
        assert abs(res) < 1e-5
        assert bound < 1e-6
    # closed form vanishes as |y| -> 1-
    assert np.log(1.0 / 0.999999) / (2 * np.pi) < 1e-6


def test_table_build_invariants():
    tab = hyp.HeatKernelTable.build(1.0, n=1024)
    assert tab.radial_cdf[-1] == pytest.approx(1.0, abs=1e-6)
    assert tab.radial_cdf[0] == pytest.approx(0.0, abs=1e-9)
    assert np.all(np.diff(tab.radial_cdf) >= -1e-12)
    assert np.all(tab.density >= 0.0)
    assert tab.mass_defect < 1e-4
    with pytest.raises(InputError):
        hyp.HeatKernelTable.build(1.0, n=32)


def test_table_median_matches_oracle():
    tab1 = hyp.HeatKernelTable.build(1.0, n=2048)
    tab4 = hyp.HeatKernelTable.build(4.0, n=2048)
    assert tab1.median_radius() == pytest.approx(RHO_MED_1, abs=2e-6)
    assert tab4.median_radius() == pytest.approx(RHO_MED_4, abs=2e-6)
    assert tab4.median_radius() > tab1.median_radius()


def test_table_csv_round_trip(tmp_path):
    tab = hyp.HeatKernelTable.build(0.5, n=256)
    path = tmp_path / "table.csv"
    tab.to_csv(path)
    tab2 = hyp.HeatKernelTable.from_csv(path, 0.5)
    assert np.array_equal(tab.rho_grid, tab2.rho_grid)
    assert np.array_equal(tab.radial_cdf, tab2.radial_cdf)


def test_sample_bm_step_radial_law():
    tab = hyp.HeatKernelTable.build(1.0)
    rng = np.random.default_rng(11)
    pts = hyp.sample_bm_step(0.0, 1.0, tab, rng, n=100_000)
    rho = hyp.radius_to_hyperbolic(np.abs(pts))
    ks = kstest(rho, lambda r: tab.cdf(r)).statistic
    assert ks < 0.01


def test_sample_bm_step_mobius_invariance():
    tab = hyp.HeatKernelTable.build(1.0)
    rng = np.random.default_rng(12)
    base = hyp.DiscPoint(0.7)
    pts = hyp.sample_bm_step(base, 1.0, tab, rng, n=100_000)
    rho = np.array([hyp.dist_hyperbolic(base, hyp.DiscPoint(p)) for p in
                    pts[:20_000]])
    ks = kstest(rho, lambda r: tab.cdf(r)).statistic
    assert ks < 0.012


def test_sample_bm_step_small_time_concentrates():
    tab = hyp.HeatKernelTable.build(1e-3)
    rng = np.random.default_rng(13)
    pts = hyp.sample_bm_step(0.5, 1e-3, tab, rng, n=2000)
    assert np.quantile(np.abs(pts - 0.5), 0.95) < 0.1


def test_chapman_kolmogorov_two_steps():
    tab1 = hyp.HeatKernelTable.build(1.0)
    tab2 = hyp.HeatKernelTable.build(2.0)
    rng = np.random.default_rng(14)
    n = 100_000
    mid = hyp.sample_bm_step(0.0, 1.0, tab1, rng, n=n)
    theta = rng.random(n) * 2 * np.pi
    zeta = np.tanh(tab1.sample_rho(rng, n) / 2.0) * np.exp(1j * theta)
    end = (zeta + mid) / (1.0 + np.conj(mid) * zeta)
    rho = hyp.radius_to_hyperbolic(np.minimum(np.abs(end), 1 - 1e-15))
    ks = kstest(rho, lambda r: tab2.cdf(r)).statistic
    assert ks < 0.01


def test_diffusion_average_constant_and_oracle():
    rng = np.random.default_rng(15)
    tab = hyp.HeatKernelTable.build(1.0)
    mean, err = hyp.diffusion_average(lambda z: np.ones_like(np.real(z)),
                                      0.0, 1.0, 1000, rng, table=tab)
    assert mean == 1.0 and err == 0.0
    f = lambda z: hyp.radius_to_hyperbolic(np.minimum(np.abs(z), 1 - 1e-15))
    mean, err = hyp.diffusion_average(f, 0.0, 1.0, 100_000, rng, table=tab)
    assert abs(mean - MEAN_RHO_1) < 3.0 * err


def test_diffusion_semigroup_monte_carlo():
    rng = np.random.default_rng(16)
    tab1 = hyp.HeatKernelTable.build(1.0)
    n = 100_000
    # one t=2 step vs two chained t=1 steps, f(z)=|z|^2
    tab2 = hyp.HeatKernelTable.build(2.0)
    one = np.abs(hyp.sample_bm_step(0.0, 2.0, tab2, rng, n=n)) ** 2
    mid = hyp.sample_bm_step(0.0, 1.0, tab1, rng, n=n)
    theta = rng.random(n) * 2 * np.pi
    zeta = np.tanh(tab1.sample_rho(rng, n) / 2.0) * np.exp(1j * theta)
    two = np.abs((zeta + mid) / (1.0 + np.conj(mid) * zeta)) ** 2
    se = np.hypot(one.std(ddof=1), two.std(ddof=1)) / np.sqrt(n)
    assert abs(one.mean() - two.mean()) < 3.0 * se
    # and both match the quadrature oracle value
    assert abs(one.mean() - MEAN_ABS2_2) < 4.0 * one.std(ddof=1) / np.sqrt(n)


def test_diffusion_average_quad_matches_oracle():
    v = hyp.diffusion_average_quad(lambda r: r, 1.0)
    assert v == pytest.approx(MEAN_RHO_1, abs=1e-8)
    v2 = hyp.diffusion_average_quad(lambda r: np.tanh(r / 2) ** 2, 1.0)
    assert v2 == pytest.approx(MEAN_ABS2_1, abs=1e-8)


def test_generator_constant_is_one():
    assert constants.measure_c_gen() == pytest.approx(1.0, abs=5e-3)
    assert constants.C_GEN == 1.0


def test_nevanlinna_weight():
    assert hyp.nevanlinna_weight(0.9, 1.0) == 0.0  # |zeta| >= r_R
    r = hyp.radius_from_hyperbolic(2.0)
    assert hyp.nevanlinna_weight(r, 2.0) == 0.0
    assert hyp.nevanlinna_weight(r / 2, 2.0) == pytest.approx(np.log(2.0),
                                                              abs=1e-14)
    assert np.isinf(hyp.nevanlinna_weight(0.0, 1.0))


def test_nevanlinna_mass_defect_bounded():
    # frozen oracle: sup over R in [1,20] equals 8.7103...
    sup = hyp.nevanlinna_mass_defect_sup(np.array([1.0, 2.0, 5.0, 10.0, 20.0]))
    assert sup < 8.75
    assert abs(hyp.nevanlinna_mass(10.0) - 2 * np.pi * 10.0) == pytest.approx(
        8.709774, abs=1e-3)


def test_birkhoff_constants_invisible():
    assert hyp.birkhoff_average(lambda r: np.ones_like(r), 5.0) == \
        pytest.approx(1.0, abs=1e-8)


def test_birkhoff_discrepancy_decay_and_oracle():
    f = lambda r: np.minimum(r, 1.0)
    d10 = hyp.birkhoff_discrepancy(f, 10.0, points=[1.0])
    d40 = hyp.birkhoff_discrepancy(f, 40.0, points=[1.0])
    assert d40 < d10
    # frozen oracle value at R=10
    assert d10 == pytest.approx(2.403090e-4, rel=5e-3)
    for R, d in ((10.0, d10), (40.0, d40)):
        assert d / (R ** -0.5 * np.sqrt(np.log(R))) < 0.05
