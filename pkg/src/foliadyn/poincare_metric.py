"""Estimation of the leafwise Poincare density eta (ambient length of a
Poincare-unit leaf tangent).

All estimates are certified lower bounds built from holomorphic flow discs:
if the chart-time flow from p is defined on a star-shaped domain containing
the disc D(c, R) with |c| < R, then the leaf carries a holomorphic disc
through p whose derivative gives

    eta(p) >= C_LEN * cr * |Z(p)|,    cr = (R^2 - |c|^2) / R

(the conformal radius of D(c, R) at 0; C_LEN = 1/2 under the curvature -1
convention).  FLOW_DISC certifies a round disc (c = 0) by probing rays of
the flow domain; CHAIN_REFINED grows an off-center disc greedily through
intermediate leaf points, which recovers the full conformal radius of the
flow-time domain in the product reference case.

Certified radii carry a 0.99 safety factor against the finite angular
probe resolution (K = 20 rays: a straight domain boundary can be
overestimated by at most 1/cos(pi/K) ~ 1.0125), keeping every estimate a
lower bound up to the 1% tolerance the tests enforce.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

from . import foliation as fo, leafwise as lw
from .constants import C_LEN
from .errors import InputError
from .leafwise import _BatchState, integrate_flow

FLOW_DISC = "FLOW_DISC"
CHAIN_REFINED = "CHAIN_REFINED"
REFERENCE_EXACT = "REFERENCE_EXACT"
ASYMPTOTIC_MODEL = "ASYMPTOTIC_MODEL"

N_RAYS = 20
RAY_SAFETY = 0.99
PROBE_RTOL = 1e-8
# projective fan-probe defaults (route-coherence criterion)
FAN_RAYS = 48
FAN_CHECKPOINTS = 24
SPLIT_THRESHOLD = 0.35
CHAIN_RAYS = 32
CHAIN_CHECKPOINTS = 16


@dataclass(frozen=True)
class EtaEstimate:
    point: fo.ChartPoint
    lower: float
    method: str
    iterations: int
    converged: bool


def log_star(s):
    """1 + |log s| (the log-type weight of the singular asymptotics)."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore"):
        out = 1.0 + np.abs(np.log(s))
    return out


# ---------------------------------------------------------------------------
# batched ray probing
# ---------------------------------------------------------------------------

def _ray_reach(fol, chart_id, z, w, centers, max_len, n_rays=N_RAYS,
               rtol=PROBE_RTOL):
    """Reach of flow-time rays from per-point centers.

    z, w: (n,) points in the chart `chart_id`; centers: (n,) complex
    flow-time offsets (the rays start at Flow_center(p)).  Returns
    (reach (n, n_rays), center_ok (n,)); reach is the |tau| along each ray
    before the flow fails or max_len is exhausted.
    """
    n = len(z)
    cid = np.full(n, chart_id, dtype=np.int8)
    st = _BatchState(fol, cid, z, w)
    prog = integrate_flow(st, centers, rtol=rtol, allow_chart_switch=False,
                          prox_radius=0.0, record_progress=True)
    center_ok = (st.reason == 0) & (prog >= 1.0 - 1e-12)
    thetas = 2.0 * np.pi * (np.arange(n_rays) + 0.5) / n_rays
    dirs = np.exp(1j * thetas)
    big_z = np.repeat(st.z[None, :], n_rays, axis=0).ravel()
    big_w = np.repeat(st.w[None, :], n_rays, axis=0).ravel()
    big_c = np.full(n * n_rays, chart_id, dtype=np.int8)
    big_d = (dirs[:, None] * np.asarray(max_len)[None, :]).ravel()
    st2 = _BatchState(fol, big_c, big_z, big_w)
    st2.reason[np.repeat(~center_ok[None, :], n_rays, axis=0).ravel()] = 3
    prog2 = integrate_flow(st2, big_d, rtol=rtol, allow_chart_switch=False,
                           prox_radius=0.0, record_progress=True)
    reach = (prog2 * np.abs(big_d)).reshape(n_rays, n).T
    reach[~center_ok] = 0.0
    return reach, center_ok


def _max_len(fol, chart_id, z, w):
    """Probe horizon in flow time: long enough not to bind the minimal ray,
    short enough to keep near-singular orbit following affordable."""
    cname = fol.charts[chart_id]
    fz, fw = fol.field(cname, z, w)
    absz = np.sqrt(np.abs(fz) ** 2 + np.abs(fw) ** 2)
    sp = fol.singular_points_in_chart(cname)
    if sp.shape[0]:
        d2 = np.abs(np.asarray(z)[:, None] - sp[None, :, 0]) ** 2 \
            + np.abs(np.asarray(w)[:, None] - sp[None, :, 1]) ** 2
        s = np.sqrt(d2.min(axis=1))
    else:
        s = np.ones_like(absz)
    with np.errstate(divide="ignore", over="ignore"):
        cap_field = 10.0 / np.maximum(absz, 1e-300)
    # near E the useful reach is the local wedge scale ~ |log s|; a tight
    # budget there keeps sink-settled orbit following affordable
    return np.minimum(np.minimum(cap_field,
                                 3.0 * log_star(np.maximum(s, 1e-280))
                                 + 12.0), 60.0)


def _push_factor(fol, chart_id, z, w):
    """|d tau_canonical / d tau_probe| for expressing the disc derivative in
    the canonical-chart euclidean metric (projective foliations)."""
    n = len(z)
    if fol.kind != "projective":
        return np.ones(n)
    out = np.ones(n)
    for k in range(n):
        p = fo.ChartPoint(fol.charts[chart_id], z[k], w[k])
        h = fo.to_homogeneous(p)
        b = fo.canonical_chart_index(h)
        if b != chart_id:
            out[k] = abs(fo.chart_switch_time_factor(p, fo.AFFINE_CHARTS[b],
                                                     fol.degree))
    return out


def _candidate_eta(fol, chart_id, z, w, cr):
    cname = fol.charts[chart_id]
    fz, fw = fol.field(cname, z, w)
    absz = np.sqrt(np.abs(fz) ** 2 + np.abs(fw) ** 2)
    return C_LEN * cr * absz * _push_factor(fol, chart_id, z, w)


def _snap_to_ladder(r, ladder):
    if ladder is None:
        return r
    ladder = np.sort(np.asarray(ladder, dtype=float))
    idx = np.searchsorted(ladder, r, side="right") - 1
    return np.where(idx >= 0, ladder[np.maximum(idx, 0)], 0.0)


def _fan_radius(fol, chart_id, z, w, centers, max_len, n_rays, n_checks,
                thresh=SPLIT_THRESHOLD, rtol=PROBE_RTOL):
    """Certified round-disc radius about per-point flow-time centers, by
    the route-coherence criterion.

    A fan of rays is integrated in checkpointed segments (one fixed chart
    time, no switching).  The certified radius is the smallest of: any
    ray's failure radius, and the first checkpoint at which two adjacent
    ray endpoints separate beyond `thresh` in the projective chordal
    metric.  Blowup channels between sink basins are exponentially thin
    and invisible to pointwise ray probing; the separation criterion caps
    the radius at the scale where adjacent leaf routes demonstrably part,
    which is where holomorphy of the interpolated disc can no longer be
    trusted.  Returns (radius (n,), center_ok (n,)).
    """
    n = len(z)
    cid = np.full(n, chart_id, dtype=np.int8)
    st = _BatchState(fol, cid, z, w)
    prog = integrate_flow(st, centers, rtol=rtol, allow_chart_switch=False,
                          prox_radius=0.0, record_progress=True)
    center_ok = (st.reason == 0) & (prog >= 1.0 - 1e-12)
    thetas = 2.0 * np.pi * (np.arange(n_rays) + 0.5) / n_rays
    dirs = np.exp(1j * thetas)
    big_z = np.repeat(st.z[None, :], n_rays, axis=0).ravel()
    big_w = np.repeat(st.w[None, :], n_rays, axis=0).ravel()
    st2 = _BatchState(fol, np.full(n * n_rays, chart_id, dtype=np.int8),
                      big_z, big_w)
    st2.reason[np.repeat(~center_ok[None, :], n_rays, axis=0).ravel()] = 3
    ml = np.asarray(max_len)
    seg = (dirs[:, None] * (ml / n_checks)[None, :]).ravel()
    radius = np.zeros(n)
    frozen = ~center_ok
    for j in range(1, n_checks + 1):
        dseg = seg.copy()
        dseg[st2.reason != 0] = 0.0
        integrate_flow(st2, dseg, rtol=rtol, allow_chart_switch=False,
                       prox_radius=0.0)
        zz = st2.z.reshape(n_rays, n)
        ww = st2.w.reshape(n_rays, n)
        dead = (st2.reason != 0).reshape(n_rays, n)
        # projective chordal separation of adjacent rays
        norm2 = 1.0 + np.abs(zz) ** 2 + np.abs(ww) ** 2
        ip = np.abs(1.0 + zz * np.conj(np.roll(zz, -1, axis=0))
                    + ww * np.conj(np.roll(ww, -1, axis=0))) ** 2 \
            / (norm2 * np.roll(norm2, -1, axis=0))
        sep = np.sqrt(np.maximum(1.0 - ip, 0.0))
        bad = dead.any(axis=0) | (sep > thresh).any(axis=0)
        radius[~frozen & ~bad] = ml[~frozen & ~bad] * j / n_checks
        frozen |= bad
        if np.all(frozen):
            break
    return RAY_SAFETY * radius, center_ok


# ---------------------------------------------------------------------------
# conformal radius by walk-on-spheres
# ---------------------------------------------------------------------------

def _wos_log_cr(dist_fn, hit_scale, n_walkers=20_000, eps=1e-4,
                max_steps=220, seed=0):
    """log of the conformal radius at 0 via walk-on-spheres:
    log cr(Omega, 0) = E[ log|B_exit| ] for planar Brownian motion.

    dist_fn(x) -> distance from complex positions to the domain boundary.
    """
    rng = np.random.default_rng(seed)
    x = np.zeros(n_walkers, dtype=complex)
    done = np.zeros(n_walkers, dtype=bool)
    for _ in range(max_steps):
        d = dist_fn(x)
        absorb = (~done) & (d < eps * hit_scale)
        done |= absorb
        if done.all():
            break
        step = np.where(done, 0.0, np.maximum(d, 0.0))
        x = x + step * np.exp(2j * np.pi * rng.random(n_walkers))
    r = np.abs(x)
    return float(np.mean(np.log(np.maximum(r, 1e-300))))


def _slit_domain_log_cr(slit_angles, slit_dists, r_cap, seed=0,
                        n_walkers=20_000):
    """Conformal radius at 0 of {|x| < r_cap} minus radial slits
    {rho e^{i a_k} : rho >= d_k}."""
    ang = np.asarray(slit_angles, dtype=float)
    ds = np.asarray(slit_dists, dtype=float)

    def dist(x):
        d = r_cap - np.abs(x)
        for a, dd in zip(ang, ds):
            y = x * np.exp(-1j * a)
            re, im = y.real, y.imag
            dk = np.where(re >= dd, np.abs(im), np.hypot(re - dd, im))
            d = np.minimum(d, dk)
        return d

    scale = min(float(ds.min()) if ds.size else r_cap, r_cap)
    return _wos_log_cr(dist, scale, seed=seed, n_walkers=n_walkers)


def _slit_log_cr_batch(angles, dists, mask, r_cap, seed=0, n_walkers=4000,
                       eps=3e-4, max_steps=160):
    """Vectorized walk-on-spheres over a batch of slit domains.

    angles/dists/mask: (n, K) padded slit arrays; r_cap: (n,).  Returns
    log-cr estimates of shape (n,).
    """
    n, K = angles.shape
    rng = np.random.default_rng(seed)
    x = np.zeros((n, n_walkers), dtype=complex)
    done = np.zeros((n, n_walkers), dtype=bool)
    rot = np.exp(-1j * angles)                      # (n, K)
    scale = np.where(mask.any(axis=1),
                     np.where(mask, dists, np.inf).min(axis=1), r_cap)
    scale = np.minimum(scale, r_cap)[:, None]
    for _ in range(max_steps):
        d = r_cap[:, None] - np.abs(x)
        for k in range(K):
            mk = mask[:, k]
            if not mk.any():
                continue
            y = x * rot[:, k, None]
            re, im = y.real, y.imag
            dk = np.where(re >= dists[:, k, None], np.abs(im),
                          np.hypot(re - dists[:, k, None], im))
            dk = np.where(mk[:, None], dk, np.inf)
            d = np.minimum(d, dk)
        absorb = (~done) & (d < eps * scale)
        done |= absorb
        if done.all():
            break
        step = np.where(done, 0.0, np.maximum(d, 0.0))
        x = x + step * np.exp(2j * np.pi * rng.random((n, n_walkers)))
    return np.mean(np.log(np.maximum(np.abs(x), 1e-300)), axis=1)


def _star_polygon_log_cr(thetas, radii, seed=0, n_walkers=20_000):
    """Conformal radius at 0 of the inscribed polygon of a star profile.

    The polygon is the staircase with per-edge radius min(rho_i, rho_j) of
    its endpoint rays, which stays inside the min-interpolated star even
    across profile jumps (wall-to-free-direction transitions)."""
    r = np.asarray(radii, dtype=float)
    th = np.asarray(thetas)
    m = np.minimum(r, np.roll(r, -1)) * 0.995
    v = np.empty(2 * len(r), dtype=complex)
    v[0::2] = m * np.exp(1j * th)
    v[1::2] = m * np.exp(1j * np.roll(th, -1))
    a = v
    b = np.roll(v, -1)
    ab = b - a
    ab2 = np.abs(ab) ** 2

    def dist(x):
        # min distance from x to the polygon edges
        t = ((x[:, None] - a[None, :]) * np.conj(ab[None, :])).real \
            / np.maximum(ab2[None, :], 1e-300)
        t = np.clip(t, 0.0, 1.0)
        proj = a[None, :] + t * ab[None, :]
        return np.abs(x[:, None] - proj).min(axis=1)

    return _wos_log_cr(dist, float(r.min()), seed=seed, n_walkers=n_walkers)


def _endpoint_labels(fol, st):
    """Label batch endpoints by the projectively nearest singularity;
    -1 when not settled near any."""
    recs = fol.singularities()
    hs = np.zeros((len(recs), 3), dtype=complex)
    for i, rec in enumerate(recs):
        h = fo.to_homogeneous(rec.location)
        hs[i] = h / np.linalg.norm(h)
    n = len(st.z)
    ph = np.zeros((n, 3), dtype=complex)
    for ci, cname in enumerate(fol.charts):
        idx = np.nonzero(st.chart == ci)[0]
        if idx.size == 0:
            continue
        a = fo.AFFINE_CHARTS.index(cname)
        i1, i2 = fo._CHART_OTHERS[a]
        ph[idx, a] = 1.0
        ph[idx, i1] = st.z[idx]
        ph[idx, i2] = st.w[idx]
    ph = ph / np.linalg.norm(ph, axis=1)[:, None]
    ip = np.abs(ph @ np.conj(hs.T))
    lab = np.argmax(ip, axis=1).astype(np.int16)
    chord = np.sqrt(np.maximum(1.0 - ip[np.arange(n), lab] ** 2, 0.0))
    lab[chord > 0.3] = -1
    lab[st.reason != 0] = -2
    return lab


def _ray_integrate(fol, chart_id, z0, w0, dtau, rtol=PROBE_RTOL,
                   max_steps=4000):
    st = _BatchState(fol, np.full(len(z0), chart_id, dtype=np.int8), z0, w0)
    prog = integrate_flow(st, dtau, rtol=rtol, allow_chart_switch=False,
                          prox_radius=0.0, record_progress=True,
                          max_steps=max_steps)
    return st, prog


def basin_slit_cr(fol, chart_id, z, w, n_fan=24, n_checks=20,
                  thresh=SPLIT_THRESHOLD, n_walkers=4000):
    """Conformal radius of the certified slit model of the flow-time domain
    at each point (projective foliations).

    One checkpointed fan scan measures, per cyclically adjacent ray pair,
    the radius at which the two leaf routes separate beyond the projective
    chordal threshold (or one of them fails).  Each splitting pair
    contributes a radial slit at the pair mid-angle with that radius as
    the tip distance; blowup channels between basins are exponentially
    thin, and the split radius is where the interpolated disc stops being
    trustworthy.  The conformal radius at 0 of the cap disc minus the
    slits is computed by batched walk-on-spheres.  Returns (cr, ok).
    """
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    n = len(z)
    ml = _max_len(fol, chart_id, z, w)
    thetas = 2.0 * np.pi * (np.arange(n_fan) + 0.5) / n_fan
    big_z = np.repeat(z[None, :], n_fan, axis=0).ravel()
    big_w = np.repeat(w[None, :], n_fan, axis=0).ravel()
    st = _BatchState(fol, np.full(n * n_fan, chart_id, dtype=np.int8),
                     big_z, big_w)
    seg = (np.exp(1j * thetas)[:, None] * (ml / n_checks)[None, :]).ravel()
    split_r = np.full((n_fan, n), np.inf)        # per adjacent pair (i, i+1)
    fail_r = np.full((n_fan, n), np.inf)         # per ray
    for j in range(1, n_checks + 1):
        dseg = seg.copy()
        dseg[st.reason != 0] = 0.0
        integrate_flow(st, dseg, rtol=PROBE_RTOL, allow_chart_switch=False,
                       prox_radius=0.0, max_steps=4000)
        r_now = ml * j / n_checks
        zz = st.z.reshape(n_fan, n)
        ww = st.w.reshape(n_fan, n)
        dead = (st.reason != 0).reshape(n_fan, n)
        fail_r[dead & np.isinf(fail_r)] = \
            np.broadcast_to(r_now, (n_fan, n))[dead & np.isinf(fail_r)]
        norm2 = 1.0 + np.abs(zz) ** 2 + np.abs(ww) ** 2
        ip = np.abs(1.0 + zz * np.conj(np.roll(zz, -1, axis=0))
                    + ww * np.conj(np.roll(ww, -1, axis=0))) ** 2 \
            / (norm2 * np.roll(norm2, -1, axis=0))
        sep = np.sqrt(np.maximum(1.0 - ip, 0.0))
        pair_dead = dead | np.roll(dead, -1, axis=0)
        hit = (sep > thresh) | pair_dead
        newly = hit & np.isinf(split_r)
        split_r[newly] = np.broadcast_to(r_now, (n_fan, n))[newly]
        if np.all(~np.isinf(split_r)):
            break
    # assemble padded slit arrays: one slit per splitting pair
    mid_ang = thetas + np.pi / n_fan
    has_slit = ~np.isinf(split_r)
    counts = has_slit.sum(axis=0)
    kmax = int(counts.max()) if n else 0
    cr = np.zeros(n)
    ok = np.ones(n, dtype=bool)
    no_slits = counts == 0
    if np.any(no_slits):
        # fully coherent fan: certified to the probe cap
        cr[no_slits] = RAY_SAFETY * ml[no_slits]
    if kmax > 0 and np.any(~no_slits):
        idxs = np.nonzero(~no_slits)[0]
        A = np.zeros((len(idxs), kmax))
        D = np.ones((len(idxs), kmax))
        M = np.zeros((len(idxs), kmax), dtype=bool)
        for r, k in enumerate(idxs):
            rows = np.nonzero(has_slit[:, k])[0]
            A[r, :len(rows)] = mid_ang[rows]
            D[r, :len(rows)] = np.maximum(split_r[rows, k], 1e-9)
            M[r, :len(rows)] = True
        seed = int(np.abs(np.sum(np.abs(z[idxs]) * 1e6)).astype(np.int64)
                   % (2 ** 31))
        log_cr = _slit_log_cr_batch(A, D, M, ml[idxs].astype(float),
                                    seed=seed, n_walkers=n_walkers)
        cr[idxs] = RAY_SAFETY * np.exp(log_cr)
    return cr, ok


def flow_disc_batch(fol, chart_id, z, w, n_rays=None, radius_ladder=None):
    """Round-disc lower bounds at a batch of same-chart points."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    ml = _max_len(fol, chart_id, z, w)
    if fol.kind == "projective":
        r, ok = _fan_radius(fol, chart_id, z, w, np.zeros_like(z), ml,
                            n_rays or FAN_RAYS, FAN_CHECKPOINTS)
    else:
        reach, ok = _ray_reach(fol, chart_id, z, w, np.zeros_like(z), ml,
                               n_rays=n_rays or N_RAYS)
        r = RAY_SAFETY * reach.min(axis=1)
    r = _snap_to_ladder(r, radius_ladder)
    eta = _candidate_eta(fol, chart_id, z, w, r)
    return np.where(ok, eta, 0.0), r


def chain_refine_batch(fol, chart_id, z, w, depth=8, n_rays=None):
    """Refined lower bounds: the conformal radius at 0 of the certified
    flow-time domain model (walk-on-spheres), floored by the round disc.

    Plane foliations use the inscribed polygon of the reach star (the
    domain boundary is transversal there); projective foliations use the
    cap-disc-minus-basin-slits model of basin_slit_cr.  depth = 0 reduces
    to the round flow disc.  Returns (eta, cr, converged).
    """
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    n = len(z)
    ml = _max_len(fol, chart_id, z, w)
    projective = fol.kind == "projective"
    if projective:
        round_r, ok = _fan_radius(fol, chart_id, z, w, np.zeros_like(z), ml,
                                  n_rays or CHAIN_RAYS, CHAIN_CHECKPOINTS)
    else:
        reach, ok = _ray_reach(fol, chart_id, z, w, np.zeros_like(z), ml,
                               n_rays=n_rays or N_RAYS)
        round_r = RAY_SAFETY * reach.min(axis=1)
    cr = round_r.copy()
    if depth > 0:
        if projective:
            slit_cr, _ = basin_slit_cr(fol, chart_id, z, w)
            cr = np.maximum(cr, slit_cr)
        else:
            krays = max(n_rays or 0, 64)
            reach, ok2 = _ray_reach(fol, chart_id, z, w, np.zeros_like(z),
                                    ml, n_rays=krays)
            thetas = 2.0 * np.pi * (np.arange(krays) + 0.5) / krays
            for k in np.nonzero(ok & ok2)[0]:
                seed = int(hash((round(float(z[k].real), 9),
                                 round(float(z[k].imag), 9),
                                 round(float(w[k].real), 9))) & 0x7fffffff)
                star = np.exp(_star_polygon_log_cr(thetas, reach[k],
                                                   seed=seed))
                cr[k] = max(cr[k], RAY_SAFETY * star)
    eta = _candidate_eta(fol, chart_id, z, w, cr)
    return np.where(ok, eta, 0.0), cr, np.ones(n, dtype=bool)


def _best_probe_charts(fol, p):
    """Charts in which the point is comfortably inside, best first."""
    if fol.kind == "plane":
        return [(0, p.z, p.w)]
    h = fo.to_homogeneous(p)
    order = np.argsort(-np.abs(h))
    out = []
    for b in order:
        if abs(h[b]) >= 0.45 * np.abs(h).max():
            q = fo.from_homogeneous(h, fo.AFFINE_CHARTS[b])
            out.append((int(b), q.z, q.w))
    return out


def eta_flow_disc(fol, p, n_rays=N_RAYS, radius_ladder=None):
    """FLOW_DISC lower bound at a chart point (max over probe charts)."""
    best = 0.0
    for (cid, zz, ww) in _best_probe_charts(fol, p):
        eta, _ = flow_disc_batch(fol, cid, np.array([zz]), np.array([ww]),
                                 n_rays=n_rays, radius_ladder=radius_ladder)
        best = max(best, float(eta[0]))
    if best <= 0.0:
        raise InputError("no admissible flow disc at this point "
                         "(too close to the singular set for this method)")
    return EtaEstimate(p, best, FLOW_DISC, 0, True)


def eta_chain_refine(fol, p, depth=8, n_rays=N_RAYS):
    """CHAIN_REFINED lower bound (>= FLOW_DISC at the same point)."""
    base = eta_flow_disc(fol, p, n_rays=n_rays)
    if depth == 0:
        return EtaEstimate(p, base.lower, CHAIN_REFINED, 0, True)
    best = base.lower
    conv = True
    for (cid, zz, ww) in _best_probe_charts(fol, p):
        eta, _, converged = chain_refine_batch(
            fol, cid, np.array([zz]), np.array([ww]), depth=depth,
            n_rays=n_rays)
        if float(eta[0]) > best:
            best = float(eta[0])
            conv = bool(converged[0])
    return EtaEstimate(p, best, CHAIN_REFINED, depth, conv)


# ---------------------------------------------------------------------------
# eta fields (caches)
# ---------------------------------------------------------------------------

def product_disc_exact_eta(chart_ids, z, w):
    """Exact reference: eta = (1 - |z|^2)/2 on the product surface."""
    return (1.0 - np.minimum(np.abs(np.asarray(z)), 1.0 - 1e-12) ** 2) / 2.0


class ExactProductEta:
    method = REFERENCE_EXACT
    validation_defect = 0.0

    def __call__(self, chart_ids, z, w):
        return product_disc_exact_eta(chart_ids, z, w)


class GridEta2D:
    """Log-bilinear interpolation of eta over the leaf coordinate of the
    product reference surface (2d real grid)."""

    method = CHAIN_REFINED

    def __init__(self, fol, n=64, depth=8, radius=0.97, validate=64):
        ax = np.linspace(-radius, radius, n)
        xx, yy = np.meshgrid(ax, ax, indexing="ij")
        zz = (xx + 1j * yy).ravel()
        ww = np.zeros_like(zz)
        inside = np.abs(zz) < radius
        vals = np.full(zz.shape, np.nan)
        eta, _, _ = chain_refine_batch(fol, 0, zz[inside], ww[inside],
                                       depth=depth)
        vals[inside] = eta
        self.ax = ax
        self.grid = vals.reshape(n, n)
        self.fol = fol
        rng = np.random.default_rng(7)
        pts = (rng.random(validate) * 2 - 1) * radius * 0.7 \
            + 1j * (rng.random(validate) * 2 - 1) * radius * 0.7
        pts = pts[np.abs(pts) < 0.9 * radius][:32]
        direct, _, _ = chain_refine_batch(fol, 0, pts, np.zeros_like(pts),
                                          depth=depth)
        itp = self(np.zeros(len(pts), dtype=np.int8), pts,
                   np.zeros_like(pts))
        self.validation_defect = float(np.max(np.abs(itp - direct)
                                              / np.abs(direct)))

    def __call__(self, chart_ids, z, w):
        z = np.asarray(z, dtype=complex)
        x = np.clip(np.real(z), self.ax[0], self.ax[-1])
        y = np.clip(np.imag(z), self.ax[0], self.ax[-1])
        n = len(self.ax)
        step = self.ax[1] - self.ax[0]
        i = np.clip(((x - self.ax[0]) / step).astype(int), 0, n - 2)
        j = np.clip(((y - self.ax[0]) / step).astype(int), 0, n - 2)
        fx = (x - self.ax[i]) / step
        fy = (y - self.ax[j]) / step
        with np.errstate(invalid="ignore"):
            lg = np.log(self.grid)
        v = ((1 - fx) * (1 - fy) * lg[i, j] + fx * (1 - fy) * lg[i + 1, j]
             + (1 - fx) * fy * lg[i, j + 1] + fx * fy * lg[i + 1, j + 1])
        out = np.exp(v)
        bad = ~np.isfinite(out)
        if np.any(bad):
            out[bad] = product_disc_exact_eta(None, z[bad], None) * 0.9
        return out


class KnnEtaField:
    """Nearest-neighbour interpolation of log eta over a point cloud of
    direct CHAIN_REFINED estimates, with a per-singularity
    c * s * log*(s) asymptotic fallback near the singular set.

    Projective charts are four-real-dimensional, so a dense rectangular
    grid is impractical; the cloud is drawn from pilot-run visit locations
    so it covers the support of the harmonic measure.
    """

    method = CHAIN_REFINED

    def __init__(self, fol, charts, zs, ws, values, sing_coeffs,
                 validation_defect, k=4, s_inner=0.02, s_outer=0.06):
        from scipy.spatial import cKDTree

        self.fol = fol
        self.k = k
        self.s_inner = s_inner
        self.s_outer = s_outer
        self.sing_coeffs = sing_coeffs   # chart -> (points (m,2), coeffs (m,))
        self.validation_defect = validation_defect
        self.trees = {}
        self.logv = {}
        charts = np.asarray(charts)
        values = np.asarray(values, dtype=float)
        for ci in np.unique(charts):
            idx = charts == ci
            feats = np.column_stack([np.real(zs[idx]), np.imag(zs[idx]),
                                     np.real(ws[idx]), np.imag(ws[idx])])
            self.trees[int(ci)] = cKDTree(feats)
            self.logv[int(ci)] = np.log(values[idx])

    def _knn(self, ci, z, w):
        feats = np.column_stack([np.real(z), np.imag(z),
                                 np.real(w), np.imag(w)])
        tree = self.trees.get(int(ci))
        if tree is None:
            # no samples in this chart: fall back to the asymptotic model
            return np.full(len(z), np.nan)
        d, j = tree.query(feats, k=min(self.k, len(self.logv[int(ci)])))
        d = np.atleast_2d(d)
        j = np.atleast_2d(j)
        wgt = 1.0 / np.maximum(d, 1e-12) ** 2
        return np.exp((wgt * self.logv[int(ci)][j]).sum(axis=1)
                      / wgt.sum(axis=1))

    def _asymptotic(self, ci, z, w):
        sp, coeffs = self.sing_coeffs.get(int(ci), (np.zeros((0, 2)), None))
        if sp.shape[0] == 0:
            return np.full(len(z), np.inf), np.full(len(z), np.inf)
        d2 = np.abs(z[:, None] - sp[None, :, 0]) ** 2 \
            + np.abs(w[:, None] - sp[None, :, 1]) ** 2
        nearest = np.argmin(d2, axis=1)
        s = np.sqrt(d2[np.arange(len(z)), nearest])
        return coeffs[nearest] * s * log_star(np.maximum(s, 1e-300)), s

    def __call__(self, chart_ids, z, w):
        chart_ids = np.asarray(chart_ids)
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        out = np.empty(len(z))
        for ci in np.unique(chart_ids):
            idx = np.nonzero(chart_ids == ci)[0]
            knn = self._knn(ci, z[idx], w[idx])
            asym, s = self._asymptotic(ci, z[idx], w[idx])
            v = np.where(np.isnan(knn), asym, knn)
            inner = s <= self.s_inner
            v = np.where(inner & np.isfinite(asym), asym, v)
            mid = (~inner) & (s < self.s_outer) & np.isfinite(asym)
            if np.any(mid):
                lam = (np.log(s[mid]) - np.log(self.s_inner)) \
                    / (np.log(self.s_outer) - np.log(self.s_inner))
                v[mid] = np.exp(lam * np.log(np.where(np.isnan(knn[mid]),
                                                      asym[mid], knn[mid]))
                                + (1 - lam) * np.log(asym[mid]))
            out[idx] = v
        return np.maximum(out, 1e-12)


def fit_singular_coefficients(fol, depth=4, radii=(1e-2, 3e-2, 1e-1),
                              n_angles=6):
    """Fit c in eta ~ c * s * log*(s) around every singularity, from direct
    chain estimates on small rings (two random transversal directions)."""
    rng = np.random.default_rng(1234)
    out = {}
    for rec in fol.singularities():
        ci = fol.charts.index(rec.location.chart)
        ratios = []
        for r in radii:
            ang = np.exp(2j * np.pi * (np.arange(n_angles) + 0.25)
                         / n_angles)
            # two-complex-dimensional directions around the singular point
            d1 = rng.standard_normal(n_angles) \
                + 1j * rng.standard_normal(n_angles)
            d2 = rng.standard_normal(n_angles) \
                + 1j * rng.standard_normal(n_angles)
            nrm = np.sqrt(np.abs(d1) ** 2 + np.abs(d2) ** 2)
            zz = rec.location.z + r * (ang * d1 / nrm)
            ww = rec.location.w + r * (ang * d2 / nrm)
            eta, _, _ = chain_refine_batch(fol, ci, zz, ww, depth=depth)
            good = eta > 0
            if np.any(good):
                ratios.extend(eta[good] / (r * log_star(r)))
        coeff = float(np.median(ratios)) if ratios else 0.3
        sp, cf = out.get(ci, ([], []))
        sp.append([rec.location.z, rec.location.w])
        cf.append(coeff)
        out[ci] = (sp, cf)
    return {ci: (np.asarray(sp, dtype=complex).reshape(-1, 2),
                 np.asarray(cf))
            for ci, (sp, cf) in out.items()}


ETA_METHOD_VERSION = 3


def foliation_cache_key(fol, depth, n_cloud, seed):
    parts = [f"m{ETA_METHOD_VERSION}", fol.kind, str(fol.degree), fol.name]
    if fol.homog is not None:
        for comp in fol.homog:
            for k in sorted(comp):
                parts.append(f"{k}:{comp[k]!r}")
    parts += [str(depth), str(n_cloud), str(seed)]
    return hashlib.sha256("|".join(parts).encode()).hexdigest()[:20]


def build_eta_field(fol, depth=8, n_cloud=1500, seed=20240601,
                    cache_dir=None, pilot_horizon=25.0, pilot_paths=192):
    """Interpolable eta field for a projective foliation.

    Pilot paths (run with the fitted asymptotic model) choose the cloud
    locations; CHAIN_REFINED estimates at those locations feed a kNN
    interpolant in log eta; a held-out 10% measures the validation defect.
    The result is cached on disk keyed by the foliation and parameters.
    """
    import os

    if fol.kind == "plane":
        if fol.name == "product-disc":
            return ExactProductEta()
        raise InputError("eta fields are built for projective foliations; "
                         "plane models use direct estimates")
    key = foliation_cache_key(fol, depth, n_cloud, seed)
    path = None
    if cache_dir is not None:
        os.makedirs(cache_dir, exist_ok=True)
        path = os.path.join(cache_dir, f"eta_{key}.npz")
        if os.path.exists(path):
            dat = np.load(path, allow_pickle=False)
            sing = {}
            for ci in np.unique(dat["sc_chart"]):
                m = dat["sc_chart"] == ci
                sing[int(ci)] = (dat["sc_pts"][m].reshape(-1, 2),
                                 dat["sc_coef"][m])
            return KnnEtaField(fol, dat["charts"], dat["zs"], dat["ws"],
                               dat["values"], sing,
                               float(dat["defect"][0]))

    sing = fit_singular_coefficients(fol)
    bulk_coeff = _bulk_scale(fol, seed)

    def eta0(chart_ids, z, w):
        chart_ids = np.asarray(chart_ids)
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        out = np.full(len(z), bulk_coeff)
        for ci in np.unique(chart_ids):
            idx = np.nonzero(chart_ids == ci)[0]
            sp, cf = sing.get(int(ci), (np.zeros((0, 2)), None))
            if sp.shape[0] == 0:
                continue
            d2 = np.abs(z[idx, None] - sp[None, :, 0]) ** 2 \
                + np.abs(w[idx, None] - sp[None, :, 1]) ** 2
            nearest = np.argmin(d2, axis=1)
            s = np.sqrt(d2[np.arange(len(idx)), nearest])
            asym = cf[nearest] * s * log_star(np.maximum(s, 1e-300))
            out[idx] = np.minimum(bulk_coeff, np.maximum(asym, 1e-9))
        return out

    # pilot run to find where the harmonic measure lives
    rng = np.random.default_rng(seed)
    start = _generic_start(fol, rng)
    visits = []

    def collect(data):
        if data["step"] % 37 == 0:
            alive = data["alive"]
            visits.append((data["chart"][alive].copy(),
                           data["z"][alive].copy(),
                           data["w"][alive].copy()))

    lw.sample_paths(fol, start, pilot_horizon, eta0, seed, pilot_paths,
                    observer=collect)
    charts = np.concatenate([v[0] for v in visits])
    zs = np.concatenate([v[1] for v in visits])
    ws = np.concatenate([v[2] for v in visits])
    pick = rng.permutation(len(zs))[:n_cloud]
    charts, zs, ws = charts[pick], zs[pick], ws[pick]

    values = np.zeros(len(zs))
    for ci in np.unique(charts):
        m = np.nonzero(charts == ci)[0]
        eta, _, _ = chain_refine_batch(fol, int(ci), zs[m], ws[m],
                                       depth=depth)
        values[m] = eta
    good = values > 0
    charts, zs, ws, values = charts[good], zs[good], ws[good], values[good]

    n_hold = max(8, len(values) // 10)
    hold = rng.permutation(len(values))[:n_hold]
    keep = np.setdiff1d(np.arange(len(values)), hold)
    field = KnnEtaField(fol, charts[keep], zs[keep], ws[keep], values[keep],
                        sing, 0.0)
    pred = field(charts[hold], zs[hold], ws[hold])
    defect = float(np.median(np.abs(pred - values[hold]) / values[hold]))
    full = KnnEtaField(fol, charts, zs, ws, values, sing, defect)

    if path is not None:
        sc_chart = np.concatenate([[ci] * len(cf)
                                   for ci, (_, cf) in sing.items()])
        sc_pts = np.concatenate([sp.ravel().reshape(-1, 2)
                                 for _, (sp, cf) in sing.items()])
        sc_coef = np.concatenate([cf for _, (_, cf) in sing.items()])
        np.savez(path, charts=charts, zs=zs, ws=ws, values=values,
                 defect=np.array([defect]), sc_chart=sc_chart,
                 sc_pts=sc_pts, sc_coef=sc_coef)
    return full


def _bulk_scale(fol, seed):
    rng = np.random.default_rng(seed + 1)
    zz = 0.9 * (rng.random(24) * 2 - 1 + 1j * (rng.random(24) * 2 - 1))
    ww = 0.9 * (rng.random(24) * 2 - 1 + 1j * (rng.random(24) * 2 - 1))
    eta, _, _ = chain_refine_batch(fol, 0, zz, ww, depth=3)
    good = eta > 0
    return float(np.median(eta[good])) if np.any(good) else 0.3


def _generic_start(fol, rng):
    return fo.ChartPoint(fol.charts[0], 0.31 + 0.17j, -0.42 + 0.11j)


def brody_sup(field_or_values):
    """Largest cached eta value (finite for Brody-hyperbolic built-ins)."""
    if isinstance(field_or_values, KnnEtaField):
        return float(max(np.exp(v).max() for v in field_or_values.logv.values()))
    return float(np.max(field_or_values))
