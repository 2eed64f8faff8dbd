"""Leaf navigation: complex-time flow integration, holonomy accumulation,
and leafwise Brownian sampling.

Holonomy is reduced to a scalar quadrature along flow segments: with the
2x2 wedge identity d(V ^ Z)/d tau = tr(DZ) (V ^ Z) and the euclidean
quotient norm |V ^ Z|/|Z| of a normal class,

    log H = Re int tr DZ d tau + log|Z(start)| - log|Z(end)|

per chart segment (an independent variational integrator is kept as an
oracle; the two agree to 1e-8 in the tests).  Chart switches rescale the
residual flow time by the x_b^(d-1) factor of foliation.py and contribute
the O(1) metric jumps of the chartwise-euclidean ambient metric.

All integrations run batched over paths with per-path adaptive
Dormand-Prince 5(4) steps; sampling takes explicit seeds and splits work
into spawned substreams, so results do not depend on worker count or
scheduling.
"""

from dataclasses import dataclass

import numpy as np

from . import foliation as fo
from .constants import C0, C_GEN
from .errors import InputError, NumericalError

# termination reasons
HORIZON = "HORIZON"
SINGULAR_PROXIMITY = "SINGULAR_PROXIMITY"
CHART_FAILURE = "CHART_FAILURE"

_CODE = {HORIZON: 1, SINGULAR_PROXIMITY: 2, CHART_FAILURE: 3}
_REASON = {0: "RUNNING", 1: HORIZON, 2: SINGULAR_PROXIMITY, 3: CHART_FAILURE}

# 1e-6 in chart units terminated ~10% of T=20 bulk runs (log-distance to E
# performs an O(1)-per-unit-time random walk); 1e-8 keeps terminations rare
# while the dt schedule still shrinks steps near E
PROXIMITY_RADIUS = 1e-8
DT_MAX = 0.01
DT_BETA = 0.05
CHART_SWITCH_OUT = 1.6
ESCAPE_RADIUS = 1e5

# Dormand-Prince 5(4) tableau
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176,
              -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784,
                   11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])


@dataclass(frozen=True)
class FlowSegment:
    """One integrated complex-time flow segment.

    trace_integral accumulates int tr DZ d tau (per-chart pieces in their
    own chart times); log_h is the full log-holonomy along the segment.
    """

    start: fo.ChartPoint
    dtau: complex
    end: fo.ChartPoint
    trace_integral: complex
    log_h: float


@dataclass
class PathSample:
    """A leafwise Brownian trajectory with hyperbolic clock.

    nodes: list of (t, ChartPoint, logH, tau), t strictly increasing, tau
    the accumulated complex flow time of the current flow chart (reset at
    chart switches).
    """

    start: fo.ChartPoint
    nodes: list
    termination: str
    rng_stream_id: int = 0

    @property
    def total_time(self):
        return self.nodes[-1][0] if self.nodes else 0.0

    @property
    def log_h(self):
        return self.nodes[-1][2] if self.nodes else 0.0


def holonomy_weight(fol, z, w, fz, fw):
    """Holonomy norm weight W(x) of the quotient-norm reduction
    (log H per chart segment = Re int tr DZ + W(start) - W(end)).

    Plane foliations use the euclidean log|Z|.  Projective foliations use
    the Fubini-Study weight log ||Z||_FS + (3/2) log s, s = 1+|u|^2+|v|^2:
    it is continuous across chart switches (the transition Jacobian
    determinant is exactly (s_B/s_A)^{3/2}), so chart crossings add no
    hysteresis drift to log H.
    """
    z = np.asarray(z)
    w = np.asarray(w)
    with np.errstate(divide="ignore"):
        e2 = np.abs(fz) ** 2 + np.abs(fw) ** 2
        if fol.kind != "projective":
            return 0.5 * np.log(e2)
        s = 1.0 + np.abs(z) ** 2 + np.abs(w) ** 2
        inner = np.conj(z) * fz + np.conj(w) * fw
        fs2 = (s * e2 - np.abs(inner) ** 2) / (s * s)
        return 0.5 * np.log(fs2) + 1.5 * np.log(s)


class _BatchState:
    """Mutable state of a batch of leaf points."""

    def __init__(self, fol, chart_ids, z, w, track_variational=False):
        self.fol = fol
        self.chart = np.asarray(chart_ids, dtype=np.int8).copy()
        self.z = np.asarray(z, dtype=complex).copy()
        self.w = np.asarray(w, dtype=complex).copy()
        n = len(self.z)
        self.closed_log_h = np.zeros(n)
        self.trace = np.zeros(n, dtype=complex)
        self.seg_log_absz = self.log_absz()
        self.reason = np.zeros(n, dtype=np.int8)
        self.switches = np.zeros(n, dtype=np.int16)
        self.track_variational = track_variational
        if track_variational:
            fz, fw = self.field_here()
            az = np.sqrt(np.abs(fz) ** 2 + np.abs(fw) ** 2)
            if np.any(az == 0.0):
                raise InputError("field vanishes at a variational start")
            self.v1 = -np.conj(fw) / az
            self.v2 = np.conj(fz) / az
            self.v_start_norm = self.wedge_norm()

    def field_here(self):
        out_z = np.zeros_like(self.z)
        out_w = np.zeros_like(self.w)
        for ci, cname in enumerate(self.fol.charts):
            idx = np.nonzero(self.chart == ci)[0]
            if idx.size:
                out_z[idx], out_w[idx] = self.fol.field(cname, self.z[idx],
                                                        self.w[idx])
        return out_z, out_w

    def log_absz(self):
        fz, fw = self.field_here()
        return holonomy_weight(self.fol, self.z, self.w, fz, fw)

    def abs_field(self):
        fz, fw = self.field_here()
        return np.sqrt(np.abs(fz) ** 2 + np.abs(fw) ** 2)

    def wedge_norm(self):
        fz, fw = self.field_here()
        az = np.sqrt(np.abs(fz) ** 2 + np.abs(fw) ** 2)
        return np.abs(self.v1 * fw - self.v2 * fz) / az

    def total_log_h(self):
        return self.closed_log_h + self.trace.real + self.seg_log_absz \
            - self.log_absz()

    def sing_distance(self):
        out = np.full(len(self.z), np.inf)
        for ci, cname in enumerate(self.fol.charts):
            idx = np.nonzero(self.chart == ci)[0]
            if idx.size == 0:
                continue
            sp = self.fol.singular_points_in_chart(cname)
            if sp.shape[0] == 0:
                continue
            d2 = np.abs(self.z[idx, None] - sp[None, :, 0]) ** 2 \
                + np.abs(self.w[idx, None] - sp[None, :, 1]) ** 2
            out[idx] = np.sqrt(d2.min(axis=1))
        return out

    def points(self):
        charts = self.fol.charts
        return [fo.ChartPoint(charts[c], zz, ww)
                for c, zz, ww in zip(self.chart, self.z, self.w)]


def integrate_flow(state, dtau, rtol=1e-10, atol=0.0,
                   allow_chart_switch=True, prox_radius=PROXIMITY_RADIUS,
                   escape_radius=ESCAPE_RADIUS, record_progress=False,
                   max_steps=60_000):
    """Integrate each live path of ``state`` along its straight segment
    [0, dtau_i] in flow time, with per-path adaptive DP5(4) steps.

    Failures set the path's reason code (SINGULAR_PROXIMITY on step
    collapse or proximity, CHART_FAILURE on escape/thrashing) instead of
    raising.  With record_progress=True returns the per-path fraction of
    |dtau_i| actually covered (the flow-disc probes rely on it).
    """
    fol = state.fol
    n = len(state.z)
    dtau = np.asarray(dtau, dtype=complex) * np.ones(n)
    charts = fol.charts
    is_projective = fol.kind == "projective"
    dom_r = fol.domain_radius if fol.kind == "plane" else np.inf

    length = np.abs(dtau)
    direction = np.where(length > 0, dtau / np.where(length > 0, length,
                                                     1.0), 0.0)
    sigma = np.zeros(n)
    h = np.maximum(length * 0.5, 1e-30)
    active = (state.reason == 0) & (length > 0)
    track_v = state.track_variational
    ncomp = 5 if track_v else 3

    sing_cache = {}
    if prox_radius > 0:
        for ci, cname in enumerate(charts):
            sing_cache[ci] = fol.singular_points_in_chart(cname)

    steps = 0
    while np.any(active) and steps < max_steps:
        steps += 1
        idx = np.nonzero(active)[0]
        h_try = np.minimum(h[idx], length[idx] - sigma[idx])
        zi, wi = state.z[idx], state.w[idx]
        ei = direction[idx]
        ci_arr = state.chart[idx]
        if track_v:
            v1i, v2i = state.v1[idx], state.v2[idx]

        ks = np.zeros((7, ncomp, idx.size), dtype=complex)
        with np.errstate(over="ignore", invalid="ignore"):
            for s in range(7):
                coeff = _DP_A[s]
                yz, yw = zi, wi
                if track_v:
                    yv1, yv2 = v1i, v2i
                if coeff.size:
                    acc = np.tensordot(coeff, ks[:coeff.size], axes=(0, 0))
                    yz = zi + h_try * acc[0]
                    yw = wi + h_try * acc[1]
                    if track_v:
                        yv1 = v1i + h_try * acc[3]
                        yv2 = v2i + h_try * acc[4]
                for cj, cname in enumerate(charts):
                    sub = np.nonzero(ci_arr == cj)[0]
                    if sub.size == 0:
                        continue
                    fz, fw = fol.field(cname, yz[sub], yw[sub])
                    tr = fol.trace_jacobian(cname, yz[sub], yw[sub])
                    e = ei[sub]
                    ks[s, 0, sub] = e * fz
                    ks[s, 1, sub] = e * fw
                    ks[s, 2, sub] = e * tr
                    if track_v:
                        j11, j12, j21, j22 = fol.jacobian(cname, yz[sub],
                                                          yw[sub])
                        ks[s, 3, sub] = e * (j11 * yv1[sub] + j12 * yv2[sub])
                        ks[s, 4, sub] = e * (j21 * yv1[sub] + j22 * yv2[sub])

            y5 = np.tensordot(_DP_B5, ks, axes=(0, 0))
            y4 = np.tensordot(_DP_B4, ks, axes=(0, 0))
            z5 = zi + h_try * y5[0]
            w5 = wi + h_try * y5[1]
            scale = np.maximum(np.abs(zi), np.abs(z5)) \
                + np.maximum(np.abs(wi), np.abs(w5)) + 1e-3
            err = h_try * (np.abs(y5[0] - y4[0]) + np.abs(y5[1] - y4[1])) \
                / (atol + rtol * scale)
        err = np.where(np.isfinite(err), err, np.inf)
        accept = err <= 1.0

        # a step that lands outside the admissible region (chart escape or
        # plane-domain exit) is rolled back and bisected towards the
        # boundary, so probe reaches are exact, not overshooting
        biga5 = np.maximum(np.abs(z5), np.abs(w5))
        lim = escape_radius if is_projective or not np.isfinite(dom_r) \
            else dom_r
        blocked = accept & (biga5 >= lim)
        accept = accept & ~blocked

        acc_idx = idx[accept]
        if acc_idx.size:
            state.z[acc_idx] = z5[accept]
            state.w[acc_idx] = w5[accept]
            state.trace[acc_idx] += (h_try * y5[2])[accept]
            if track_v:
                state.v1[acc_idx] = (v1i + h_try * y5[3])[accept]
                state.v2[acc_idx] = (v2i + h_try * y5[4])[accept]
            sigma[acc_idx] += h_try[accept]

        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            fac = 0.9 * err ** -0.2
        fac = np.where(err == 0.0, 5.0, fac)          # exact step: grow
        fac = np.clip(np.where(np.isfinite(fac), fac, 0.2), 0.2, 5.0)
        fac = np.where(blocked, 0.25, fac)
        h[idx] = np.maximum(h_try * fac, 1e-300)

        # collapsed step: stuck against a boundary or a singular time
        tiny = h_try < 1e-13 * np.maximum(length[idx], 1.0)
        dead_dom = idx[blocked & tiny]
        if dead_dom.size:
            state.reason[dead_dom] = _CODE[CHART_FAILURE]
            active[dead_dom] = False
        dead_err = idx[~accept & ~blocked & tiny]
        if dead_err.size:
            state.reason[dead_err] = _CODE[SINGULAR_PROXIMITY]
            active[dead_err] = False

        if acc_idx.size:
            _post_step_checks(state, acc_idx, active, length, direction,
                              sigma, sing_cache, prox_radius, escape_radius,
                              allow_chart_switch, is_projective, dom_r)

        finished = idx[sigma[idx] >= length[idx] * (1.0 - 1e-14)]
        active[finished] = False
    if steps >= max_steps:
        state.reason[active] = _CODE[CHART_FAILURE]

    if record_progress:
        with np.errstate(invalid="ignore"):
            return np.where(length > 0,
                            np.minimum(sigma / np.where(length > 0, length,
                                                        1.0), 1.0), 1.0)
    return None


def _post_step_checks(state, acc_idx, active, length, direction, sigma,
                      sing_cache, prox_radius, escape_radius,
                      allow_chart_switch, is_projective, dom_r):
    fol = state.fol
    biga = np.maximum(np.abs(state.z[acc_idx]), np.abs(state.w[acc_idx]))
    if is_projective and allow_chart_switch:
        need = acc_idx[(biga > CHART_SWITCH_OUT)
                       & (state.reason[acc_idx] == 0)]
        for k in need:
            _switch_chart(state, int(k), length, direction, sigma)
            state.switches[k] += 1
            if state.switches[k] > 200:
                state.reason[k] = _CODE[CHART_FAILURE]
                active[k] = False
    if prox_radius > 0:
        for cj, sp in sing_cache.items():
            if sp.shape[0] == 0:
                continue
            sub = acc_idx[(state.chart[acc_idx] == cj)
                          & (state.reason[acc_idx] == 0)]
            if sub.size == 0:
                continue
            d2 = np.abs(state.z[sub, None] - sp[None, :, 0]) ** 2 \
                + np.abs(state.w[sub, None] - sp[None, :, 1]) ** 2
            near = sub[np.sqrt(d2.min(axis=1)) < prox_radius]
            if near.size:
                state.reason[near] = _CODE[SINGULAR_PROXIMITY]
                active[near] = False


def _switch_chart(state, k, length, direction, sigma):
    """Move path k to its canonical chart: close the holonomy segment,
    transform the point and rescale the residual flow time."""
    fol = state.fol
    charts = fol.charts
    cname = charts[state.chart[k]]
    p = fo.ChartPoint(cname, state.z[k], state.w[k])
    h = fo.to_homogeneous(p)
    b = fo.canonical_chart_index(h)
    if charts[b] == cname:
        return
    fz, fw = fol.field(cname, state.z[k], state.w[k])
    w_here = float(holonomy_weight(fol, state.z[k], state.w[k], fz, fw))
    state.closed_log_h[k] += state.trace[k].real \
        + state.seg_log_absz[k] - w_here
    state.trace[k] = 0.0
    fac = complex(fo.chart_switch_time_factor(p, charts[b], fol.degree))
    q = fo.from_homogeneous(h, charts[b])
    state.chart[k] = b
    state.z[k] = q.z
    state.w[k] = q.w
    # residual flow time in the new chart: d tau_new = fac * d tau_old
    rem = (length[k] - sigma[k]) * abs(fac)
    length[k] = sigma[k] + rem
    direction[k] = direction[k] * fac / abs(fac)
    if state.track_variational:
        raise NumericalError("variational transport does not cross charts")
    fz, fw = fol.field(charts[b], state.z[k], state.w[k])
    state.seg_log_absz[k] = float(holonomy_weight(fol, state.z[k],
                                                  state.w[k], fz, fw))


# ---------------------------------------------------------------------------
# scalar operations
# ---------------------------------------------------------------------------

def flow_step(fol, p, dtau, rtol=1e-10, allow_chart_switch=True,
              prox_radius=PROXIMITY_RADIUS):
    """Integrate one flow segment from a chart point; returns a FlowSegment.

    Raises NumericalError carrying the closest-approach distance when the
    step collapses near a singularity, or on chart failure.
    """
    ci = fol.charts.index(p.chart)
    state = _BatchState(fol, [ci], [p.z], [p.w])
    integrate_flow(state, [complex(dtau)], rtol=rtol,
                   allow_chart_switch=allow_chart_switch,
                   prox_radius=prox_radius)
    reason = _REASON[int(state.reason[0])]
    if reason == SINGULAR_PROXIMITY:
        raise NumericalError(
            "flow step collapsed near a singularity "
            f"(closest approach {state.sing_distance()[0]:.3e})",
            residual=float(state.sing_distance()[0]))
    if reason == CHART_FAILURE:
        raise NumericalError("flow step failed (chart thrashing or escape)")
    end = state.points()[0]
    return FlowSegment(p, complex(dtau), end, complex(state.trace[0]),
                       float(state.total_log_h()[0]))


def holonomy_along(fol, seg_or_path):
    """Log of the holonomy norm along a FlowSegment, a list of segments, or
    a PathSample.  The empty path gives 0."""
    if isinstance(seg_or_path, FlowSegment):
        return seg_or_path.log_h
    if isinstance(seg_or_path, PathSample):
        return seg_or_path.log_h
    if isinstance(seg_or_path, (list, tuple)):
        return float(sum(s.log_h for s in seg_or_path))
    raise InputError("expected a FlowSegment, PathSample or segment list")


def holonomy_variational(fol, p, dtau, rtol=1e-11):
    """Independent holonomy oracle: integrates the variational equation
    V' = (DZ)V and evaluates the quotient norm |V ^ Z|/|Z| (single chart)."""
    ci = fol.charts.index(p.chart)
    state = _BatchState(fol, [ci], [p.z], [p.w], track_variational=True)
    integrate_flow(state, [complex(dtau)], rtol=rtol,
                   allow_chart_switch=False, prox_radius=0.0)
    if state.reason[0] != 0:
        raise NumericalError("variational integration failed")
    return float(np.log(state.wedge_norm()[0] / state.v_start_norm[0]))


def curvature_density_batch(fol, chart_ids, z, w, eta, h=1e-2, c_gen=C_GEN,
                            rtol=1e-10):
    """Curvature density at a batch of points.

    kappa = -c_gen (eta^2/|Z|^2) * [flat Laplacian at 0 of
    phi(tau) = log|Z| - log|Z_c| along the flow parametrization], by
    Richardson-extrapolated central differences with steps h and h/2.
    The section component Z_c is the larger field component at the base
    point, held fixed across the stencil; kappa <= 0 near hyperbolic
    singularities.
    """
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    chart_ids = np.asarray(chart_ids, dtype=np.int8)
    n = len(z)
    base = _BatchState(fol, chart_ids, z, w)
    fz, fw = base.field_here()
    absz2 = np.abs(fz) ** 2 + np.abs(fw) ** 2
    if np.any(absz2 < 1e-300):
        raise InputError("field vanishes at a curvature evaluation point")
    use_w = np.abs(fw) >= np.abs(fz)

    offs = np.array([h, -h, 1j * h, -1j * h,
                     h / 2, -h / 2, 1j * h / 2, -1j * h / 2])
    big_chart = np.repeat(chart_ids[None, :], 8, axis=0).ravel()
    big_z = np.repeat(z[None, :], 8, axis=0).ravel()
    big_w = np.repeat(w[None, :], 8, axis=0).ravel()
    big_dtau = np.repeat(offs[:, None], n, axis=1).ravel()
    st = _BatchState(fol, big_chart, big_z, big_w)
    integrate_flow(st, big_dtau, rtol=rtol, allow_chart_switch=False,
                   prox_radius=0.0)
    if np.any(st.reason != 0):
        raise NumericalError("curvature stencil integration failed")
    gz, gw = st.field_here()
    big_use_w = np.repeat(use_w[None, :], 8, axis=0).ravel()
    comp = np.where(big_use_w, gw, gz)
    with np.errstate(divide="ignore"):
        phi = holonomy_weight(fol, st.z, st.w, gz, gw) \
            - np.log(np.abs(comp))
        comp0 = np.where(use_w, fw, fz)
        phi0 = holonomy_weight(fol, z, w, fz, fw) - np.log(np.abs(comp0))
    phi = phi.reshape(8, n)
    lap_h = (phi[0] + phi[1] + phi[2] + phi[3] - 4 * phi0) / h ** 2
    lap_h2 = (phi[4] + phi[5] + phi[6] + phi[7] - 4 * phi0) / (h / 2) ** 2
    lap = (4.0 * lap_h2 - lap_h) / 3.0
    return -c_gen * (np.asarray(eta, dtype=float) ** 2 / absz2) * lap


def curvature_density(fol, p, eta, h=1e-2, c_gen=C_GEN, section=None):
    """Scalar curvature density at a chart point.

    With section="z" or "w" the transversal section is forced (the
    default picks the larger field component)."""
    ci = fol.charts.index(p.chart)
    if section is None:
        out = curvature_density_batch(fol, [ci], [p.z], [p.w], [float(eta)],
                                      h=h, c_gen=c_gen)
        return float(out[0])
    return _curvature_forced_section(fol, p, float(eta), section, h, c_gen)


def _curvature_forced_section(fol, p, eta, section, h, c_gen):
    if section not in ("z", "w"):
        raise InputError("section must be 'z' or 'w'")
    ci = fol.charts.index(p.chart)
    vz, vw = fo.evaluate_field(fol, p)
    comp0 = vw if section == "z" else vz   # d/dz-section pairs with Z_w
    if abs(comp0) < 1e-300:
        raise InputError("forced section component vanishes")
    absz2 = abs(vz) ** 2 + abs(vw) ** 2
    offs = np.array([h, -h, 1j * h, -1j * h,
                     h / 2, -h / 2, 1j * h / 2, -1j * h / 2])
    st = _BatchState(fol, [ci] * 8, [p.z] * 8, [p.w] * 8)
    integrate_flow(st, offs, rtol=1e-10, allow_chart_switch=False,
                   prox_radius=0.0)
    if np.any(st.reason != 0):
        raise NumericalError("curvature stencil integration failed")
    gz, gw = st.field_here()
    comp = gw if section == "z" else gz
    phi = holonomy_weight(fol, st.z, st.w, gz, gw) - np.log(np.abs(comp))
    phi0 = float(holonomy_weight(fol, np.array([p.z]), np.array([p.w]),
                                 np.array([vz]), np.array([vw]))[0]) \
        - np.log(abs(comp0))
    lap_h = (phi[0] + phi[1] + phi[2] + phi[3] - 4 * phi0) / h ** 2
    lap_h2 = (phi[4] + phi[5] + phi[6] + phi[7] - 4 * phi0) / (h / 2) ** 2
    lap = (4.0 * lap_h2 - lap_h) / 3.0
    return float(-c_gen * (eta ** 2 / absz2) * lap)


# ---------------------------------------------------------------------------
# Brownian sampling
# ---------------------------------------------------------------------------

@dataclass
class StepPolicy:
    dt_max: float = DT_MAX
    beta: float = DT_BETA
    prox_radius: float = PROXIMITY_RADIUS
    rtol: float = 1e-10
    c0: float = C0


def _dt_schedule(policy, t, horizon, s_dist, eta):
    dt = np.full(len(t), policy.dt_max)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        cap = policy.beta * (s_dist / np.maximum(eta, 1e-300)) ** 2
    dt = np.minimum(dt, np.where(np.isfinite(cap), cap, policy.dt_max))
    dt = np.maximum(dt, policy.dt_max * 1e-6)
    return np.minimum(dt, np.maximum(horizon - t, 0.0))


def sample_paths(fol, start, horizon, eta_fn, seed, n_paths,
                 policy=None, observer=None, kappa_every=0, c_gen=C_GEN,
                 stream_id=0):
    """Run a batch of leafwise Brownian paths to the hyperbolic horizon.

    eta_fn(chart_ids, z, w) -> eta array (the hyperbolic clock scale).
    The optional observer is called after every step with a dict of batch
    arrays.  Paths never abort the batch: termination reasons are recorded
    per path.  Identical (seed, stream_id) reproduce identical batches.
    """
    policy = policy or StepPolicy()
    rng = np.random.default_rng(np.random.SeedSequence(
        entropy=int(seed), spawn_key=(int(stream_id),)))
    if isinstance(start, fo.ChartPoint):
        starts = [start] * n_paths
    else:
        starts = list(start)
        if len(starts) != n_paths:
            raise InputError("need one start per path")
    charts = fol.charts
    chart_ids = np.array([charts.index(p.chart) for p in starts],
                         dtype=np.int8)
    st = _BatchState(fol, chart_ids,
                     np.array([p.z for p in starts], dtype=complex),
                     np.array([p.w for p in starts], dtype=complex))
    n = n_paths
    t = np.zeros(n)
    steps = 0
    max_rounds = int(horizon / policy.dt_max * 16) + 4000

    while steps < max_rounds:
        alive = (st.reason == 0) & (t < horizon * (1.0 - 1e-12))
        if not np.any(alive):
            break
        eta = np.asarray(eta_fn(st.chart, st.z, st.w), dtype=float)
        s_dist = st.sing_distance()
        too_close = np.nonzero(alive & (s_dist < policy.prox_radius))[0]
        if too_close.size:
            st.reason[too_close] = _CODE[SINGULAR_PROXIMITY]
            alive[too_close] = False
            if not np.any(alive):
                break
        idx = np.nonzero(alive)[0]
        dt = _dt_schedule(policy, t, horizon, s_dist, eta)
        absz = st.abs_field()
        with np.errstate(divide="ignore", invalid="ignore"):
            sig = np.sqrt(policy.c0 * dt) * eta / np.maximum(absz, 1e-300)
        xi = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        dtau = np.zeros(n, dtype=complex)
        dtau[idx] = sig[idx] * xi[idx]

        prev_chart = st.chart.copy()
        prev_z = st.z.copy()
        prev_w = st.w.copy()
        prev_lh = st.total_log_h()

        integrate_flow(st, dtau, rtol=policy.rtol,
                       prox_radius=policy.prox_radius)
        t[idx] += dt[idx]
        new_lh = st.total_log_h()

        kappa = None
        if kappa_every and steps % kappa_every == 0:
            ok = st.reason == 0
            kappa = np.full(n, np.nan)
            if np.any(ok):
                kappa[ok] = curvature_density_batch(
                    fol, st.chart[ok], st.z[ok], st.w[ok], eta[ok],
                    c_gen=c_gen)
        if observer is not None:
            observer(dict(step=steps, idx=idx, t=t, dt=dt, dtau=dtau,
                          chart=st.chart, z=st.z, w=st.w,
                          prev_chart=prev_chart, prev_z=prev_z,
                          prev_w=prev_w, log_h=new_lh,
                          d_log_h=new_lh - prev_lh, eta=eta, kappa=kappa,
                          alive=(st.reason == 0)))
        steps += 1
    st.reason[(st.reason == 0) & (t >= horizon * (1.0 - 1e-12))] = \
        _CODE[HORIZON]
    st.reason[st.reason == 0] = _CODE[CHART_FAILURE]  # round budget hit
    return dict(chart=st.chart, z=st.z, w=st.w, t=t,
                log_h=st.total_log_h(),
                reason=np.array([_REASON[int(r)] for r in st.reason]),
                steps=steps)


def bm_step_leafwise(fol, p, dt, eta, rng, policy=None):
    """One leafwise Brownian step of hyperbolic duration dt from p.

    Draws a complex flow-time increment with independent real/imaginary
    parts of std sqrt(c0*dt)*eta/|Z(p)| each and advances along the leaf.
    Returns (FlowSegment, dt).
    """
    policy = policy or StepPolicy()
    if dt <= 0:
        raise InputError("dt must be positive")
    vz, vw = fo.evaluate_field(fol, p)
    absz = np.hypot(abs(vz), abs(vw))
    if absz == 0:
        raise InputError("field vanishes at the base point")
    sig = np.sqrt(policy.c0 * dt) * float(eta) / absz
    dtau = sig * complex(rng.standard_normal(), rng.standard_normal())
    seg = flow_step(fol, p, dtau, rtol=policy.rtol,
                    prox_radius=policy.prox_radius)
    return seg, float(dt)


def sample_leaf_path(fol, start, horizon, eta_fn, seed, policy=None,
                     node_stride=1, stream_id=0):
    """Scalar path sampler recording nodes; returns a PathSample."""
    captured = []

    def observer(data):
        captured.append((float(data["t"][0]), int(data["chart"][0]),
                         complex(data["z"][0]), complex(data["w"][0]),
                         float(data["log_h"][0]), complex(data["dtau"][0]),
                         int(data["prev_chart"][0])))

    out = sample_paths(fol, start, horizon, eta_fn, seed, 1, policy=policy,
                       observer=observer, stream_id=stream_id)
    charts = fol.charts
    nodes = [(0.0, start, 0.0, 0.0 + 0.0j)]
    tau = 0.0 + 0.0j
    for k, (tt, ci, zz, ww, lh, dtau, prev_ci) in enumerate(captured):
        if ci != prev_ci:
            tau = 0.0 + 0.0j     # flow chart changed mid-step
        else:
            tau += dtau
        if k % node_stride and k != len(captured) - 1:
            continue
        if tt <= nodes[-1][0]:
            continue
        nodes.append((tt, fo.ChartPoint(charts[ci], zz, ww), lh, tau))
    return PathSample(start=start, nodes=nodes,
                      termination=str(out["reason"][0]),
                      rng_stream_id=stream_id)


def shift_path(ps, s):
    """Suffix of a path from time s, re-based, log H zeroed at the cut.

    The cut snaps to the first recorded node with t >= s."""
    if s < 0 or s > ps.total_time + 1e-12:
        raise InputError("shift time outside the recorded horizon")
    if s == 0:
        return ps
    cut = next(i for i, nd in enumerate(ps.nodes) if nd[0] >= s - 1e-12)
    t0, p0, lh0, _ = ps.nodes[cut]
    nodes = [(nd[0] - t0, nd[1], nd[2] - lh0, nd[3])
             for nd in ps.nodes[cut:]]
    return PathSample(start=p0, nodes=nodes, termination=ps.termination,
                      rng_stream_id=ps.rng_stream_id)


def export_paths_csv(paths, path):
    """Write path traces: path_id, t, chart, re0, im0, re1, im1, logH."""
    with open(path, "w") as fh:
        fh.write("path_id,t,chart,re0,im0,re1,im1,logH\n")
        for pid, ps in enumerate(paths):
            for (t, pt, lh, _tau) in ps.nodes:
                fh.write(f"{pid},{t:.17g},{pt.chart},"
                         f"{pt.z.real:.17g},{pt.z.imag:.17g},"
                         f"{pt.w.real:.17g},{pt.w.imag:.17g},{lh:.17g}\n")
