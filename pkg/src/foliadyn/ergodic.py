"""Monte Carlo ergodic estimators: occupation (harmonic) measures,
unique-ergodicity diagnostics, Lyapunov exponents by two routes, expansion
rates, and the cohomological exponent calculator.

The Lyapunov exponent is estimated along the same path ensemble by
(1) the time-weighted growth rate of the log-holonomy and (2) the
time-average of the curvature density; both inherit the same hyperbolic
clock (the eta field), so their agreement tests the Dynkin relation rather
than the eta calibration.  All runs are chunked with spawned substreams:
identical (seed, config) give identical results for any worker count.
"""

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import foliation as fo, leafwise as lw
from .constants import constants_hash
from .errors import InputError, TheoryPreconditionError, UnsupportedCaseError
from .poincare_metric import log_star

BURN_FRACTION = 0.1


def tv_distance(p, q):
    """Total-variation distance of two nonnegative weight arrays."""
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    ps, qs = p.sum(), q.sum()
    if ps <= 0 or qs <= 0:
        raise InputError("cannot normalize an empty measure")
    return 0.5 * float(np.abs(p / ps - q / qs).sum())


# ---------------------------------------------------------------------------
# occupation measures
# ---------------------------------------------------------------------------

class OccupationGrid:
    """Time-weighted spatial histogram over per-chart rectangular bins.

    Bins live on the canonical chart of each point, indexed by
    (|u|^2, |v|^2) in [0, 1]^2; canonical representatives have both
    coordinates of modulus <= 1."""

    def __init__(self, n_bins, n_charts=3):
        self.n_bins = int(n_bins)
        self.weights = np.zeros((n_charts, n_bins, n_bins))
        self.total_time = 0.0
        self.horizon = None
        self.n_paths = 0

    def add_points(self, chart_ids, z, w, dts, projective=True):
        if projective:
            chart_ids, z, w = fo.canonicalize_batch(chart_ids, z, w)
        i = np.clip((np.abs(z) ** 2 * self.n_bins).astype(int), 0,
                    self.n_bins - 1)
        j = np.clip((np.abs(w) ** 2 * self.n_bins).astype(int), 0,
                    self.n_bins - 1)
        np.add.at(self.weights, (np.asarray(chart_ids, dtype=int), i, j),
                  dts)
        self.total_time += float(np.sum(dts))

    def normalized(self):
        if self.total_time <= 0:
            raise InputError("empty occupation grid")
        return self.weights / self.total_time

    def tv(self, other):
        return tv_distance(self.normalized(), other.normalized())

    def merge(self, other):
        self.weights += other.weights
        self.total_time += other.total_time
        self.n_paths += other.n_paths
        return self

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("chart,i,j,weight\n")
            for c in range(self.weights.shape[0]):
                for i in range(self.n_bins):
                    for j in range(self.n_bins):
                        wgt = self.weights[c, i, j]
                        if wgt != 0.0:
                            fh.write(f"{c},{i},{j},{wgt:.17g}\n")

    @classmethod
    def from_csv(cls, path, n_bins):
        grid = cls(n_bins)
        arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        for c, i, j, wgt in arr:
            grid.weights[int(c), int(i), int(j)] = wgt
        grid.total_time = float(grid.weights.sum())
        return grid


def occupation_measure(paths, n_bins=32, projective=None):
    """Occupation grid of a list of PathSamples (trapezoid time weights)."""
    if not paths:
        raise InputError("need at least one path")
    grid = OccupationGrid(n_bins)
    for ps in paths:
        nodes = ps.nodes
        if len(nodes) < 2:
            continue
        proj = (projective if projective is not None
                else nodes[0][1].chart != fo.PLANE)
        ts = np.array([nd[0] for nd in nodes])
        charts = np.array([fo.AFFINE_CHARTS.index(nd[1].chart)
                           if nd[1].chart != fo.PLANE else 0
                           for nd in nodes], dtype=np.int8)
        zs = np.array([nd[1].z for nd in nodes])
        ws = np.array([nd[1].w for nd in nodes])
        dts = np.zeros(len(nodes))
        dts[:-1] += 0.5 * np.diff(ts)
        dts[1:] += 0.5 * np.diff(ts)
        grid.add_points(charts, zs, ws, dts, projective=proj)
        grid.n_paths += 1
        grid.horizon = ps.total_time
    return grid


@dataclass
class WeightedCloud:
    """Subsampled time-weighted visit locations of a run."""

    chart: np.ndarray
    z: np.ndarray
    w: np.ndarray
    weight: np.ndarray

    def resample(self, n, rng):
        p = self.weight / self.weight.sum()
        idx = rng.choice(len(p), size=n, p=p)
        return self.chart[idx], self.z[idx], self.w[idx]

    def bin(self, n_bins, projective=True):
        grid = OccupationGrid(n_bins)
        grid.add_points(self.chart, self.z, self.w, self.weight,
                        projective=projective)
        return grid


# ---------------------------------------------------------------------------
# the batched run driver
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    per_path_rate: np.ndarray       # log-holonomy rate after burn-in
    per_path_kappa: np.ndarray      # time-averaged curvature after burn-in
    log_h_net: np.ndarray
    time_net: np.ndarray
    kappa_sum: np.ndarray
    kappa_time: np.ndarray
    reasons: dict
    grids: dict                     # checkpoint -> OccupationGrid
    cloud: WeightedCloud
    horizon: float


def _run_chunk(fol, starts, horizon, eta_fn, seed, stream_id, n_paths,
               policy, kappa_every, burn_t, checkpoints, n_bins,
               cloud_stride):
    cps = sorted(checkpoints)
    grids = {c: OccupationGrid(n_bins) for c in cps}
    projective = fol.kind == "projective"
    n = n_paths
    lh_burn = np.zeros(n)
    t_burn = np.zeros(n)
    burn_seen = np.zeros(n, dtype=bool)
    ksum = np.zeros(n)
    ktime = np.zeros(n)
    cloud_acc = []

    def observer(data):
        alive = data["alive"]
        t = data["t"]
        dt = data["dt"]
        # occupation: trapezoid halves at both segment endpoints
        for ends in ("prev", "cur"):
            cids = data["prev_chart"] if ends == "prev" else data["chart"]
            zz = data["prev_z"] if ends == "prev" else data["z"]
            ww = data["prev_w"] if ends == "prev" else data["w"]
            sel = alive.copy()
            if not np.any(sel):
                continue
            cp_idx = np.searchsorted(cps, t[sel])
            for ci, cp in enumerate(cps):
                m = cp_idx == ci
                if np.any(m):
                    grids[cp].add_points(cids[sel][m], zz[sel][m],
                                         ww[sel][m], 0.5 * dt[sel][m],
                                         projective=projective)
        cross = alive & ~burn_seen & (t >= burn_t)
        if np.any(cross):
            lh_burn[cross] = data["log_h"][cross]
            t_burn[cross] = t[cross]
            burn_seen[cross] = True
        if data["kappa"] is not None:
            ok = alive & burn_seen & np.isfinite(data["kappa"])
            ksum[ok] += data["kappa"][ok] * data["dt"][ok]
            ktime[ok] += data["dt"][ok]
        if cloud_stride and data["step"] % cloud_stride == 0:
            sel = alive & (t >= burn_t)
            if np.any(sel):
                cloud_acc.append((data["chart"][sel].copy(),
                                  data["z"][sel].copy(),
                                  data["w"][sel].copy(),
                                  np.full(sel.sum(),
                                          float(np.median(dt[sel]))
                                          * cloud_stride)))

    out = lw.sample_paths(fol, starts, horizon, eta_fn, seed, n_paths,
                          policy=policy, observer=observer,
                          kappa_every=kappa_every, stream_id=stream_id)
    reasons = {}
    for r in out["reason"]:
        reasons[str(r)] = reasons.get(str(r), 0) + 1
    log_h_net = out["log_h"] - np.where(burn_seen, lh_burn, 0.0)
    time_net = out["t"] - np.where(burn_seen, t_burn, 0.0)
    usable = burn_seen & (time_net > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        rate = np.where(usable, log_h_net / time_net, np.nan)
        kavg = np.where(ktime > 0, ksum / ktime, np.nan)
    if cloud_acc:
        cloud = WeightedCloud(
            np.concatenate([c[0] for c in cloud_acc]),
            np.concatenate([c[1] for c in cloud_acc]),
            np.concatenate([c[2] for c in cloud_acc]),
            np.concatenate([c[3] for c in cloud_acc]))
    else:
        cloud = WeightedCloud(np.zeros(0, dtype=np.int8),
                              np.zeros(0, dtype=complex),
                              np.zeros(0, dtype=complex), np.zeros(0))
    grids_out = {}
    acc = OccupationGrid(n_bins)
    for cp in cps:
        acc.merge(grids[cp])
        snap = OccupationGrid(n_bins)
        snap.weights = acc.weights.copy()
        snap.total_time = acc.total_time
        snap.n_paths = n_paths
        snap.horizon = cp
        grids_out[cp] = snap
    return RunResult(rate[usable], kavg[usable & (ktime > 0)],
                     log_h_net[usable], time_net[usable],
                     ksum[usable], ktime[usable], reasons, grids_out, cloud,
                     horizon)


def run_paths(fol, starts, horizon, eta_fn, seed, n_paths, workers=1,
              policy=None, kappa_every=0, burn_frac=BURN_FRACTION,
              checkpoints=None, n_bins=32, cloud_stride=50,
              chunk_size=256):
    """Chunked, worker-count-independent path ensemble with accumulators.

    Returns a merged RunResult.  starts may be a single ChartPoint or a
    list cycled across paths.
    """
    checkpoints = sorted(checkpoints or [horizon])
    if checkpoints[-1] < horizon:
        checkpoints.append(horizon)
    burn_t = burn_frac * horizon
    if isinstance(starts, fo.ChartPoint):
        start_list = [starts] * n_paths
    else:
        start_list = [starts[i % len(starts)] for i in range(n_paths)]
    chunks = []
    lo = 0
    cid = 0
    while lo < n_paths:
        hi = min(lo + chunk_size, n_paths)
        chunks.append((cid, start_list[lo:hi]))
        lo = hi
        cid += 1

    def work(arg):
        cidx, sl = arg
        return _run_chunk(fol, sl, horizon, eta_fn, seed, cidx, len(sl),
                          policy, kappa_every, burn_t, checkpoints, n_bins,
                          cloud_stride)

    if workers > 1 and len(chunks) > 1:
        from concurrent.futures import ProcessPoolExecutor
        try:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                results = list(ex.map(work, chunks))
        except Exception:
            results = [work(c) for c in chunks]
    else:
        results = [work(c) for c in chunks]

    merged = results[0]
    for r in results[1:]:
        merged.per_path_rate = np.concatenate([merged.per_path_rate,
                                               r.per_path_rate])
        merged.per_path_kappa = np.concatenate([merged.per_path_kappa,
                                                r.per_path_kappa])
        merged.log_h_net = np.concatenate([merged.log_h_net, r.log_h_net])
        merged.time_net = np.concatenate([merged.time_net, r.time_net])
        merged.kappa_sum = np.concatenate([merged.kappa_sum, r.kappa_sum])
        merged.kappa_time = np.concatenate([merged.kappa_time,
                                            r.kappa_time])
        for k, v in r.reasons.items():
            merged.reasons[k] = merged.reasons.get(k, 0) + v
        for cp in merged.grids:
            merged.grids[cp].merge(r.grids[cp])
        merged.cloud = WeightedCloud(
            np.concatenate([merged.cloud.chart, r.cloud.chart]),
            np.concatenate([merged.cloud.z, r.cloud.z]),
            np.concatenate([merged.cloud.w, r.cloud.w]),
            np.concatenate([merged.cloud.weight, r.cloud.weight]))
    return merged


# ---------------------------------------------------------------------------
# Lyapunov estimation
# ---------------------------------------------------------------------------

LOG_HOLONOMY = "LOG_HOLONOMY"
KAPPA_AVERAGE = "KAPPA_AVERAGE"


@dataclass
class LyapunovReport:
    chi_hat: float
    stderr: float
    n_paths: int
    horizon: float
    estimator: str
    eta_method: str
    per_path: list
    kappa_chi: float = None
    kappa_stderr: float = None
    cross_sigma: float = None
    eta_defect: float = None
    reasons: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "chi_hat": self.chi_hat, "stderr": self.stderr,
            "n_paths": self.n_paths, "horizon": self.horizon,
            "estimator": self.estimator, "eta_method": self.eta_method,
            "eta_defect": self.eta_defect,
            "kappa_chi": self.kappa_chi, "kappa_stderr": self.kappa_stderr,
            "cross_sigma": self.cross_sigma,
            "reasons": self.reasons, "per_path": list(self.per_path),
            "config": self.config, "constants_hash": constants_hash(),
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=1, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def check_hyperbolicity(fol):
    """Raise unless every singularity is hyperbolic (theory precondition)."""
    bad = [r for r in fol.singularities() if not r.is_hyperbolic]
    if bad:
        raise TheoryPreconditionError(
            f"{len(bad)} singularit{'y' if len(bad) == 1 else 'ies'} not "
            f"hyperbolic, e.g. {bad[0].classification.value} at "
            f"{bad[0].location.chart} {bad[0].location.coords} "
            f"(ratio {bad[0].ratio})")


def estimate_lyapunov(fol, starts, horizon, n_paths, eta_fn, seed=0,
                      estimator="BOTH", workers=1, policy=None,
                      kappa_every=16, burn_frac=BURN_FRACTION,
                      config_echo=None):
    """Lyapunov exponent of the holonomy cocycle along Brownian paths.

    LOG_HOLONOMY: time-weighted growth rate of log H after burn-in.
    KAPPA_AVERAGE: occupation-time average of the curvature density along
    the same paths.  Both per-path series are reported.
    """
    check_hyperbolicity(fol)
    if horizon <= 0:
        raise InputError("horizon must be positive")
    want_kappa = estimator in ("BOTH", KAPPA_AVERAGE)
    res = run_paths(fol, starts, horizon, eta_fn, seed, n_paths,
                    workers=workers, policy=policy,
                    kappa_every=kappa_every if want_kappa else 0,
                    burn_frac=burn_frac)
    if res.time_net.sum() <= 0:
        raise InputError("no usable path time (all paths terminated "
                         "before the burn-in horizon)")
    chi_lh = float(res.log_h_net.sum() / res.time_net.sum())
    rate = res.per_path_rate
    se_lh = float(rate.std(ddof=1) / np.sqrt(len(rate))) if len(rate) > 1 \
        else float("nan")
    report = LyapunovReport(
        chi_hat=chi_lh, stderr=se_lh, n_paths=n_paths, horizon=horizon,
        estimator=estimator,
        eta_method=getattr(eta_fn, "method", "CUSTOM"),
        eta_defect=getattr(eta_fn, "validation_defect", None),
        per_path=[float(v) for v in rate],
        reasons=res.reasons, config=config_echo or {})
    if want_kappa and res.kappa_time.sum() > 0:
        chi_k = float(res.kappa_sum.sum() / res.kappa_time.sum())
        pk = res.per_path_kappa
        pk = pk[np.isfinite(pk)]
        se_k = float(pk.std(ddof=1) / np.sqrt(len(pk))) if len(pk) > 1 \
            else float("nan")
        report.kappa_chi = chi_k
        report.kappa_stderr = se_k
        comb = float(np.hypot(se_lh, se_k))
        report.cross_sigma = abs(chi_lh - chi_k) / comb if comb > 0 \
            else float("nan")
    if estimator == KAPPA_AVERAGE and report.kappa_chi is not None:
        report.chi_hat = report.kappa_chi
        report.stderr = report.kappa_stderr
        report.per_path = [float(v) for v in res.per_path_kappa
                           if np.isfinite(v)]
    return report


# ---------------------------------------------------------------------------
# unique ergodicity and diffusion invariance
# ---------------------------------------------------------------------------

def unique_ergodicity_diagnostic(fol, starts, horizon, n_paths_per_start,
                                 eta_fn, seed=0, n_bins=32,
                                 checkpoints=None, workers=1, policy=None):
    """Max pairwise TV distance between normalized occupation grids grown
    from distinct starts, with the TV trend across horizons.

    All starts run in one interleaved batch (full vector width); the
    observer separates the occupation grids by start index.
    """
    if len(starts) < 2:
        raise InputError("need at least two starts")
    checkpoints = sorted(checkpoints or [horizon / 4, horizon])
    if checkpoints[-1] < horizon:
        checkpoints.append(horizon)
    k = len(starts)
    n_total = k * n_paths_per_start
    start_list = [starts[i % k] for i in range(n_total)]
    groups = np.arange(n_total) % k
    projective = fol.kind == "projective"
    grids = {(g, cp): OccupationGrid(n_bins)
             for g in range(k) for cp in checkpoints}

    def observer(data):
        alive = data["alive"]
        t = data["t"]
        dt = data["dt"]
        cp_idx = np.searchsorted(checkpoints, t)
        for g in range(k):
            for ci, cp in enumerate(checkpoints):
                sel = alive & (groups == g) & (cp_idx == ci)
                if not np.any(sel):
                    continue
                for cids, zz, ww in ((data["prev_chart"], data["prev_z"],
                                      data["prev_w"]),
                                     (data["chart"], data["z"], data["w"])):
                    grids[(g, cp)].add_points(cids[sel], zz[sel], ww[sel],
                                              0.5 * dt[sel],
                                              projective=projective)

    lw.sample_paths(fol, start_list, horizon, eta_fn, seed, n_total,
                    policy=policy, observer=observer)
    out = {"checkpoints": checkpoints, "tv": {}, "max_tv": {}}
    for cp_i, cp in enumerate(checkpoints):
        # cumulative occupation up to each checkpoint
        for g in range(k):
            if cp_i > 0:
                grids[(g, cp)].merge(grids[(g, checkpoints[cp_i - 1])])
        mat = np.zeros((k, k))
        for i in range(k):
            for j in range(i + 1, k):
                mat[i, j] = mat[j, i] = grids[(i, cp)].tv(grids[(j, cp)])
        out["tv"][cp] = mat
        out["max_tv"][cp] = float(mat.max())
    return out


def diffusion_invariance_check(cloud, fol, t, n, eta_fn, seed=0, n_bins=32,
                               policy=None):
    """TV between the binned cloud and its one-diffusion-step image, plus
    the same-measure resampling noise floor."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed),
                                                       spawn_key=(77,)))
    charts, zs, ws = cloud.resample(n, rng)
    before = OccupationGrid(n_bins)
    before.add_points(charts, zs, ws, np.ones(n),
                      projective=fol.kind == "projective")
    # independent resample for the noise floor
    charts2, zs2, ws2 = cloud.resample(n, rng)
    floor_grid = OccupationGrid(n_bins)
    floor_grid.add_points(charts2, zs2, ws2, np.ones(n),
                          projective=fol.kind == "projective")
    noise_floor = before.tv(floor_grid)
    starts = [fo.ChartPoint(fol.charts[c], z, w)
              for c, z, w in zip(charts, zs, ws)]
    out = lw.sample_paths(fol, starts, t, eta_fn, seed + 1, n,
                          policy=policy)
    after = OccupationGrid(n_bins)
    keep = out["reason"] == lw.HORIZON
    after.add_points(out["chart"][keep], out["z"][keep], out["w"][keep],
                     np.ones(int(keep.sum())),
                     projective=fol.kind == "projective")
    return {"tv": before.tv(after), "noise_floor": noise_floor,
            "moved_fraction": float(keep.mean())}


def integrability_diagnostic(cloud, fol):
    """Occupation integrals of log* dist(., E) and of the singular-box
    weight W (log* + separatrix-adapted quadratic term)."""
    if len(cloud.weight) == 0:
        raise InputError("empty cloud")
    charts, zs, ws = cloud.chart, cloud.z, cloud.w
    if fol.kind == "projective":
        charts, zs, ws = fo.canonicalize_batch(charts, zs, ws)
    wsum = cloud.weight.sum()
    s = np.full(len(zs), np.inf)
    wfun = np.ones(len(zs))
    recs = fol.singularities()
    eig = {}
    for rec in recs:
        ci = fol.charts.index(rec.location.chart)
        j11, j12, j21, j22 = fol.jacobian(rec.location.chart,
                                          rec.location.z, rec.location.w)
        _, vecs = np.linalg.eig(np.array([[j11, j12], [j21, j22]]))
        eig.setdefault(ci, []).append((rec.location.z, rec.location.w,
                                       np.linalg.inv(vecs)))
    for ci, lst in eig.items():
        idx = np.nonzero(charts == ci)[0]
        if idx.size == 0:
            continue
        for (az, aw, minv) in lst:
            du = zs[idx] - az
            dv = ws[idx] - aw
            dd = np.hypot(np.abs(du), np.abs(dv))
            closer = dd < s[idx]
            xi1 = minv[0, 0] * du + minv[0, 1] * dv
            xi2 = minv[1, 0] * du + minv[1, 1] * dv
            nrm2 = np.abs(xi1) ** 2 + np.abs(xi2) ** 2
            wk = log_star(np.sqrt(nrm2)) \
                + (np.abs(xi1) ** 2 * np.abs(xi2) ** 2 / nrm2 ** 2) \
                * log_star(np.sqrt(nrm2)) ** 2
            s[idx] = np.where(closer, dd, s[idx])
            wfun[idx] = np.where(closer & (dd < 0.5), wk, wfun[idx])
    log_star_integral = float((log_star(np.minimum(s, 1e30))
                               * cloud.weight).sum() / wsum)
    w_integral = float((wfun * cloud.weight).sum() / wsum)
    return {"log_star_integral": log_star_integral,
            "w_integral": w_integral}


# ---------------------------------------------------------------------------
# cocycles and expansion rates
# ---------------------------------------------------------------------------

class CocycleEvaluator:
    """Wrapper enforcing the cocycle contract for rank-1 evaluators.

    fn(path_spec, time) -> log of the cocycle norm; path_spec is whatever
    the geodesic supply produces.  check_contract verifies the identity
    and additivity laws on sample inputs.
    """

    def __init__(self, fn, name="cocycle"):
        self.fn = fn
        self.name = name

    def __call__(self, path_spec, time):
        return float(self.fn(path_spec, time))

    def check_contract(self, path_specs, times, tol=1e-10):
        for ps in path_specs:
            if abs(self(ps, 0.0)) > tol:
                raise InputError(f"{self.name}: identity law violated")
        for ps in path_specs:
            for t1 in times:
                for t2 in times:
                    whole = self(ps, t1 + t2)
                    parts = self(ps, t1) + self((ps, t1), t2) \
                        if isinstance(self.fn, _ShiftAware) else None
                    if parts is not None and abs(whole - parts) > tol:
                        raise InputError(f"{self.name}: additivity violated")
        return True


class _ShiftAware:
    pass


def expansion_rate(evaluator, theta, R, x=None, v=None, n_theta=None,
                   geodesic_supply="disc"):
    """Expansion rate (1/R) log |A(gamma_{x,theta}, R)| of a rank-1 cocycle
    along unit-speed geodesic rays.

    Geodesic supply exists for the disc (and synthetic cocycles); generic
    leaves would need covering maps and raise UnsupportedCaseError.
    With n_theta set, returns the direction-averaged rate over a uniform
    theta grid.
    """
    if geodesic_supply != "disc":
        raise UnsupportedCaseError(
            "geodesic rays are only supplied on the disc; generic-leaf "
            "geodesics need the covering map")
    if R <= 0:
        raise InputError("R must be positive")
    if n_theta:
        thetas = (np.arange(n_theta) + 0.5) / n_theta
        vals = [evaluator((x, th, v), R) / R for th in thetas]
        return float(np.mean(vals))
    return evaluator((x, theta, v), R) / R


def cohomological_chi(d):
    """The universal exponent -(d+2)/(d-1) of degree-d foliations of the
    projective plane, as an exact rational."""
    d = int(d)
    if d <= 1:
        raise InputError("the formula needs degree d > 1")
    return Fraction(-(d + 2), d - 1)


def mass_identity(d):
    """Degree weights (normal, cotangent) = (d+2, d-1) entering the
    exponent and mass pairings on the projective plane."""
    d = int(d)
    if d <= 1:
        raise InputError("the identity needs degree d > 1")
    return (d + 2, d - 1)
