"""Command-line interface.

Subcommands wrap the library estimators and write machine-readable
artifacts (CSV/JSON) plus rendered figures next to them.  Every artifact
embeds the config echo, the calibration-constants hash and the package
version.  Exit codes: 0 success, 1 tolerance failure, 2 input error,
3 theory-precondition violation.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__, ergodic, foliation as fo, hyperbolic as hyp
from . import leafwise as lw, poincare_metric as pm
from .config import RunConfig, load_config
from .constants import C0, C_GEN, C_LEN, constants_hash, measure_c_gen
from .errors import (FoliadynError, InputError, NumericalError,
                     TheoryPreconditionError)

EXIT_OK = 0
EXIT_TOLERANCE = 1
EXIT_INPUT = 2
EXIT_THEORY = 3


def _artifact_header(cfg):
    return {"version": __version__, "constants_hash": constants_hash(),
            "config": cfg.echo() if isinstance(cfg, RunConfig) else cfg}


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _merge_config(args):
    cfg = load_config(args.config) if getattr(args, "config", None) \
        else RunConfig()
    for name in ("horizon", "n_paths", "grid", "eta_depth", "eta_cloud",
                 "seed", "workers", "out_dir", "cache_dir", "dt_max"):
        val = getattr(args, name, None)
        if val is not None:
            setattr(cfg, name, val)
    if getattr(args, "no_plot", False):
        cfg.plot = False
    if getattr(args, "builtin", None):
        fol_spec = {"builtin": args.builtin}
        if args.builtin == "jouanolou":
            fol_spec["degree"] = args.degree if args.degree else 2
        if args.builtin == "linear_model":
            lam = _parse_complex(args.lam or "0,1")
            fol_spec["lambda"] = [lam.real, lam.imag]
        cfg.foliation = fol_spec
    elif getattr(args, "foliation_file", None):
        cfg.foliation = {"_file": args.foliation_file}
    cfg.validate()
    return cfg


def _build_foliation(cfg):
    spec = cfg.foliation
    if spec is None:
        raise InputError("no foliation given (use --builtin or a config)")
    if "_file" in spec:
        return fo.load_foliation(spec["_file"])
    return fo.foliation_from_dict(spec)


def _parse_complex(text):
    parts = text.split(",")
    if len(parts) != 2:
        raise InputError(f"expected 're,im', got {text!r}")
    return complex(float(parts[0]), float(parts[1]))


def _eta_provider(fol, cfg):
    if fol.kind == "plane":
        if fol.name == "product-disc":
            return pm.ExactProductEta()
        field = None

        class Direct:
            method = cfg.eta_method
            validation_defect = None

            def __call__(self, chart_ids, z, w):
                eta, _, _ = pm.chain_refine_batch(
                    fol, 0, np.asarray(z, dtype=complex),
                    np.asarray(w, dtype=complex),
                    depth=cfg.eta_depth if cfg.eta_method == "CHAIN_REFINED"
                    else 0)
                return np.maximum(eta, 1e-9)
        return Direct()
    cache = cfg.cache_dir or os.path.join(cfg.out_dir, ".foliadyn_cache")
    return pm.build_eta_field(fol, depth=cfg.eta_depth,
                              n_cloud=cfg.eta_cloud, seed=cfg.seed,
                              cache_dir=cache)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_heat_kernel(args):
    cfg = _merge_config(args)
    t = args.t
    if t is None or t <= 0:
        raise InputError("need --t > 0")
    os.makedirs(cfg.out_dir, exist_ok=True)
    t0 = time.time()
    table = hyp.HeatKernelTable.build(t, n=cfg.grid)
    csv_path = os.path.join(cfg.out_dir, f"heat_kernel_t{t:g}.csv")
    table.to_csv(csv_path)
    norm_res = hyp.kernel_normalization_residual(t)
    greens = {}
    for ay in (0.3, 0.5, 0.9):
        res, bound = hyp.green_identity_residual(ay)
        greens[str(ay)] = {"residual": res, "tail_bound": bound}
    ok = abs(norm_res) < 1e-6 and all(abs(v["residual"]) < 1e-5
                                      for v in greens.values())
    payload = _artifact_header(cfg)
    payload.update({
        "t": t, "normalization_residual": norm_res,
        "green_identity": greens, "median_radius": table.median_radius(),
        "mass_defect": table.mass_defect, "pass": bool(ok),
        "timing": {"seconds": time.time() - t0},
    })
    _write_json(os.path.join(cfg.out_dir, f"heat_kernel_t{t:g}.json"),
                payload)
    if cfg.plot:
        from . import plotting
        plotting.save_kernel_table(
            table, os.path.join(cfg.out_dir, f"heat_kernel_t{t:g}.png"))
    print(f"heat-kernel t={t:g}: normalization residual {norm_res:.2e}, "
          f"green residuals "
          f"{max(abs(v['residual']) for v in greens.values()):.2e} "
          f"-> {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_TOLERANCE


def cmd_local_model(args):
    cfg = _merge_config(args)
    lam = _parse_complex(args.lam or "0,1")
    if lam.imag <= 0:
        raise InputError("lambda must have positive imaginary part")
    n_cases = args.cases
    rng = np.random.default_rng(cfg.seed)
    lmfol = fo.linear_model(lam)
    hol_errs, curv_errs = [], []
    t0 = time.time()
    while len(hol_errs) < n_cases:
        z = (0.05 + 0.75 * rng.random()) * np.exp(2j * np.pi * rng.random())
        w = (0.05 + 0.75 * rng.random()) * np.exp(2j * np.pi * rng.random())
        zeta = complex(rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2))
        m = fo.LocalModelPoint(lam, z, w)
        end = fo.local_model_leaf(m, zeta)
        if max(abs(end[0]), abs(end[1])) > 0.97:
            continue
        try:
            seg = lw.flow_step(lmfol, fo.ChartPoint("PLANE", z, w),
                               1j * zeta, prox_radius=0.0)
        except NumericalError:
            continue
        hol_errs.append(abs(seg.log_h - fo.log_local_model_holonomy(m,
                                                                    zeta)))
        if len(curv_errs) < max(100, n_cases // 10):
            fd = _fd_log_phi_laplacian(m)
            closed = fo.local_model_curvature_numerator(m)
            curv_errs.append(abs(fd / (8 * np.pi) - closed)
                             / max(abs(closed), 1e-300))
    hol_max = float(np.max(hol_errs))
    curv_max = float(np.max(curv_errs))
    ok = hol_max < 1e-8 and curv_max < 1e-4
    payload = _artifact_header(cfg)
    payload.update({
        "lambda": [lam.real, lam.imag], "cases": n_cases,
        "max_holonomy_error": hol_max,
        "max_curvature_rel_error": curv_max, "pass": bool(ok),
        "timing": {"seconds": time.time() - t0},
    })
    os.makedirs(cfg.out_dir, exist_ok=True)
    _write_json(os.path.join(cfg.out_dir, "local_model_verify.json"),
                payload)
    if cfg.plot:
        from . import plotting
        plotting.save_local_model_errors(
            np.asarray(hol_errs), np.asarray(curv_errs),
            os.path.join(cfg.out_dir, "local_model_verify.png"))
    print(f"local-model lambda={lam}: max holonomy err {hol_max:.2e}, "
          f"max curvature rel err {curv_max:.2e} -> "
          f"{'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_TOLERANCE


def _fd_log_phi_laplacian(m, h=1e-3):
    def f(zz):
        return fo.log_local_model_holonomy(m, zz)

    def lap(hh):
        return (f(hh) + f(-hh) + f(1j * hh) + f(-1j * hh) - 4 * f(0.0)) \
            / hh ** 2
    l1, l2 = lap(h), lap(h / 2)
    return (4.0 * l2 - l1) / 3.0


def cmd_lyapunov(args):
    cfg = _merge_config(args)
    fol = _build_foliation(cfg)
    ergodic.check_hyperbolicity(fol)
    eta_fn = _eta_provider(fol, cfg)
    start = _default_start(fol)
    t0 = time.time()
    policy = lw.StepPolicy(dt_max=cfg.dt_max)
    report = ergodic.estimate_lyapunov(
        fol, start, cfg.horizon, cfg.n_paths, eta_fn, seed=cfg.seed,
        workers=cfg.workers, policy=policy, kappa_every=cfg.kappa_every,
        burn_frac=cfg.burn_frac, config_echo=cfg.echo())
    target = None
    if fol.kind == "projective" and fol.degree > 1:
        target = float(ergodic.cohomological_chi(fol.degree))
    payload = report.to_dict()
    payload.update(_artifact_header(cfg))
    payload["target"] = target
    payload["timing"] = {"seconds": time.time() - t0}
    os.makedirs(cfg.out_dir, exist_ok=True)
    out_json = os.path.join(cfg.out_dir, "lyapunov.json")
    _write_json(out_json, payload)
    if cfg.plot:
        from . import plotting
        plotting.save_lyapunov_report(
            report, target, os.path.join(cfg.out_dir, "lyapunov.png"))
    tgt = f" (formula {target:.4f})" if target is not None else ""
    print(f"lyapunov: chi_hat = {report.chi_hat:.4f} "
          f"+- {report.stderr:.4f}{tgt}; kappa route "
          f"{report.kappa_chi if report.kappa_chi is not None else 'n/a'}; "
          f"eta method {report.eta_method}")
    return EXIT_OK


def _default_start(fol):
    if fol.kind == "plane":
        return fo.ChartPoint(fo.PLANE, 0.31, 0.17)
    return fo.ChartPoint("AFF0", 0.31 + 0.17j, -0.42 + 0.11j)


def _start_set(fol, k, seed):
    rng = np.random.default_rng(seed + 13)
    starts = []
    while len(starts) < k:
        z = complex(rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8))
        w = complex(rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8))
        p = fo.ChartPoint("AFF0" if fol.kind == "projective" else fo.PLANE,
                          z, w)
        starts.append(p)
    return starts


def cmd_occupation(args):
    cfg = _merge_config(args)
    fol = _build_foliation(cfg)
    eta_fn = _eta_provider(fol, cfg)
    t0 = time.time()
    res = ergodic.run_paths(fol, _default_start(fol), cfg.horizon, eta_fn,
                            cfg.seed, cfg.n_paths, workers=cfg.workers,
                            policy=lw.StepPolicy(dt_max=cfg.dt_max),
                            n_bins=cfg.grid)
    grid = res.grids[max(res.grids)]
    os.makedirs(cfg.out_dir, exist_ok=True)
    grid.to_csv(os.path.join(cfg.out_dir, "occupation.csv"))
    cloud_path = os.path.join(cfg.out_dir, "occupation_cloud.csv")
    with open(cloud_path, "w") as fh:
        fh.write("chart,re0,im0,re1,im1,weight\n")
        for c, z, w, wt in zip(res.cloud.chart, res.cloud.z, res.cloud.w,
                               res.cloud.weight):
            fh.write(f"{int(c)},{z.real:.17g},{z.imag:.17g},"
                     f"{w.real:.17g},{w.imag:.17g},{wt:.17g}\n")
    payload = _artifact_header(cfg)
    payload.update({"total_time": grid.total_time,
                    "n_paths": cfg.n_paths, "reasons": res.reasons,
                    "timing": {"seconds": time.time() - t0}})
    if args.invariance_t:
        inv = ergodic.diffusion_invariance_check(
            res.cloud, fol, args.invariance_t,
            min(4000, len(res.cloud.weight)), eta_fn, seed=cfg.seed,
            n_bins=cfg.grid, policy=lw.StepPolicy(dt_max=cfg.dt_max))
        payload["diffusion_invariance"] = inv
        print(f"diffusion invariance: TV {inv['tv']:.4f} "
              f"(noise floor {inv['noise_floor']:.4f})")
    _write_json(os.path.join(cfg.out_dir, "occupation.json"), payload)
    if cfg.plot:
        from . import plotting
        plotting.save_occupation(
            grid, os.path.join(cfg.out_dir, "occupation.png"))
    print(f"occupation: {cfg.n_paths} paths to T={cfg.horizon:g}, "
          f"total occupied time {grid.total_time:.1f}")
    return EXIT_OK


def cmd_unique_ergodicity(args):
    cfg = _merge_config(args)
    fol = _build_foliation(cfg)
    eta_fn = _eta_provider(fol, cfg)
    starts = _start_set(fol, args.starts, cfg.seed)
    t0 = time.time()
    diag = ergodic.unique_ergodicity_diagnostic(
        fol, starts, cfg.horizon, cfg.n_paths, eta_fn, seed=cfg.seed,
        n_bins=cfg.grid, checkpoints=[cfg.horizon / 4, cfg.horizon],
        workers=cfg.workers, policy=lw.StepPolicy(dt_max=cfg.dt_max))
    os.makedirs(cfg.out_dir, exist_ok=True)
    payload = _artifact_header(cfg)
    payload.update({
        "starts": [[p.chart, p.z.real, p.z.imag, p.w.real, p.w.imag]
                   for p in starts],
        "checkpoints": diag["checkpoints"],
        "max_tv": {str(k): v for k, v in diag["max_tv"].items()},
        "tv_matrices": {str(k): v.tolist() for k, v in diag["tv"].items()},
        "timing": {"seconds": time.time() - t0},
    })
    _write_json(os.path.join(cfg.out_dir, "unique_ergodicity.json"),
                payload)
    if cfg.plot:
        from . import plotting
        plotting.save_tv_matrix(
            diag, os.path.join(cfg.out_dir, "unique_ergodicity.png"))
    final = diag["max_tv"][diag["checkpoints"][-1]]
    print(f"unique-ergodicity: max pairwise TV at T={cfg.horizon:g} "
          f"is {final:.4f}")
    return EXIT_OK


def cmd_eta(args):
    cfg = _merge_config(args)
    fol = _build_foliation(cfg)
    rows = []
    t0 = time.time()
    if fol.kind == "plane" and fol.name != "product-disc":
        s_values = np.geomspace(args.s_min, args.s_max, args.points)
        for s in s_values:
            p = fo.ChartPoint(fo.PLANE, s / np.sqrt(2), s / np.sqrt(2))
            est = pm.eta_chain_refine(fol, p, depth=cfg.eta_depth) \
                if cfg.eta_method == "CHAIN_REFINED" \
                else pm.eta_flow_disc(fol, p)
            rows.append((s, est.lower, est.lower / (s * pm.log_star(s))))
    else:
        recs = fol.singularities()
        if fol.kind == "projective" and recs:
            rec = recs[0]
            ci = fol.charts.index(rec.location.chart)
            s_values = np.geomspace(args.s_min, args.s_max, args.points)
            for s in s_values:
                zz = np.array([rec.location.z + s / np.sqrt(2)])
                ww = np.array([rec.location.w + s / np.sqrt(2)])
                eta, _, _ = pm.chain_refine_batch(fol, ci, zz, ww,
                                                  depth=cfg.eta_depth)
                rows.append((s, float(eta[0]),
                             float(eta[0] / (s * pm.log_star(s)))))
        else:
            for az in np.linspace(0.0, 0.9, args.points):
                p = fo.ChartPoint(fo.PLANE, az, 0.0)
                est = pm.eta_chain_refine(fol, p, depth=cfg.eta_depth)
                s = 1.0 - az
                rows.append((s, est.lower, est.lower / (s * pm.log_star(s))))
    os.makedirs(cfg.out_dir, exist_ok=True)
    csv_path = os.path.join(cfg.out_dir, "eta_profile.csv")
    with open(csv_path, "w") as fh:
        fh.write("s,eta,eta_over_s_logstar\n")
        for r in rows:
            fh.write(",".join(f"{v:.17g}" for v in r) + "\n")
    payload = _artifact_header(cfg)
    payload.update({"rows": [list(map(float, r)) for r in rows],
                    "timing": {"seconds": time.time() - t0}})
    _write_json(os.path.join(cfg.out_dir, "eta_profile.json"), payload)
    if cfg.plot:
        from . import plotting
        plotting.save_eta_profile(
            rows, os.path.join(cfg.out_dir, "eta_profile.png"))
    ratios = [r[2] for r in rows]
    print(f"eta: {len(rows)} points, eta/(s log* s) in "
          f"[{min(ratios):.3f}, {max(ratios):.3f}]")
    return EXIT_OK


def cmd_integrability(args):
    cfg = _merge_config(args)
    fol = _build_foliation(cfg)
    eta_fn = _eta_provider(fol, cfg)
    t0 = time.time()
    halves = {}
    for label, T in (("half", cfg.horizon / 2), ("full", cfg.horizon)):
        res = ergodic.run_paths(fol, _default_start(fol), T, eta_fn,
                                cfg.seed, cfg.n_paths, workers=cfg.workers,
                                policy=lw.StepPolicy(dt_max=cfg.dt_max))
        halves[label] = ergodic.integrability_diagnostic(res.cloud, fol)
    stability = {
        k: abs(halves["full"][k] - halves["half"][k])
        / max(abs(halves["full"][k]), 1e-300)
        for k in halves["full"]}
    payload = _artifact_header(cfg)
    payload.update({"half_horizon": halves["half"],
                    "full_horizon": halves["full"],
                    "relative_change": stability,
                    "timing": {"seconds": time.time() - t0}})
    os.makedirs(cfg.out_dir, exist_ok=True)
    _write_json(os.path.join(cfg.out_dir, "integrability.json"), payload)
    if cfg.plot:
        from . import plotting
        plotting.save_integrability(
            halves["full"], os.path.join(cfg.out_dir, "integrability.png"))
    print(f"integrability: log* integral {halves['full']['log_star_integral']:.4f} "
          f"(changed {100 * stability['log_star_integral']:.1f}% under "
          f"horizon doubling)")
    return EXIT_OK


def cmd_calibrate(args):
    cfg = _merge_config(args)
    t0 = time.time()
    c_gen = measure_c_gen()
    ok = abs(c_gen - C_GEN) < 5e-3
    payload = _artifact_header(cfg)
    payload.update({"pinned": {"C0": C0, "C_GEN": C_GEN, "C_LEN": C_LEN},
                    "measured_c_gen": c_gen, "pass": bool(ok),
                    "timing": {"seconds": time.time() - t0}})
    os.makedirs(cfg.out_dir, exist_ok=True)
    _write_json(os.path.join(cfg.out_dir, "calibration.json"), payload)
    print(f"calibrate: measured generator constant {c_gen:.6f} "
          f"(pinned {C_GEN}) -> {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_TOLERANCE


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(
        prog="foliadyn",
        description="Leafwise Brownian motion, harmonic measures and "
                    "Lyapunov exponents of singular holomorphic foliations")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, foliation=True):
        sp.add_argument("--config", help="TOML or JSON config file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--workers", type=int, default=None)
        sp.add_argument("--out", dest="out_dir", default=None)
        sp.add_argument("--cache-dir", dest="cache_dir", default=None)
        sp.add_argument("--no-plot", action="store_true")
        if foliation:
            sp.add_argument("--builtin",
                            choices=sorted(fo.BUILTINS))
            sp.add_argument("--degree", type=int, default=None)
            sp.add_argument("--lambda", dest="lam", default=None,
                            help="re,im for the linear model")
            sp.add_argument("--foliation-file", default=None)
            sp.add_argument("--horizon", type=float, default=None)
            sp.add_argument("--paths", dest="n_paths", type=int,
                            default=None)
            sp.add_argument("--grid", type=int, default=None)
            sp.add_argument("--eta-depth", dest="eta_depth", type=int,
                            default=None)
            sp.add_argument("--eta-cloud", dest="eta_cloud", type=int,
                            default=None)
            sp.add_argument("--dt-max", dest="dt_max", type=float,
                            default=None)

    sp = sub.add_parser("heat-kernel", help="tabulate the radial kernel "
                        "and check its identities")
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--grid", type=int, default=None)
    common(sp, foliation=False)
    sp.set_defaults(fn=cmd_heat_kernel)

    sp = sub.add_parser("local-model", help="verify holonomy and curvature "
                        "closed forms on the linear model")
    sp.add_argument("--lambda", dest="lam", default="0,1")
    sp.add_argument("--cases", type=int, default=1000)
    common(sp, foliation=False)
    sp.set_defaults(fn=cmd_local_model)

    sp = sub.add_parser("lyapunov", help="estimate the Lyapunov exponent")
    common(sp)
    sp.set_defaults(fn=cmd_lyapunov)

    sp = sub.add_parser("occupation", help="empirical harmonic measure")
    sp.add_argument("--invariance-t", type=float, default=None,
                    help="also run the diffusion-invariance check")
    common(sp)
    sp.set_defaults(fn=cmd_occupation)

    sp = sub.add_parser("unique-ergodicity", help="pairwise TV of "
                        "occupation measures from distinct starts")
    sp.add_argument("--starts", type=int, default=5)
    common(sp)
    sp.set_defaults(fn=cmd_unique_ergodicity)

    sp = sub.add_parser("eta", help="Poincare density estimates")
    sp.add_argument("--s-min", type=float, default=1e-4)
    sp.add_argument("--s-max", type=float, default=1e-1)
    sp.add_argument("--points", type=int, default=7)
    common(sp)
    sp.set_defaults(fn=cmd_eta)

    sp = sub.add_parser("integrability", help="log*-distance occupation "
                        "integrals and their horizon stability")
    common(sp)
    sp.set_defaults(fn=cmd_integrability)

    sp = sub.add_parser("calibrate", help="re-measure the disc calibration "
                        "constants")
    common(sp, foliation=False)
    sp.set_defaults(fn=cmd_calibrate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except TheoryPreconditionError as exc:
        print(f"theory precondition violated: {exc}", file=sys.stderr)
        return EXIT_THEORY
    except (InputError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    except FoliadynError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE


if __name__ == "__main__":
    sys.exit(main())
