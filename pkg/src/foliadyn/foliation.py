"""Degree-d polynomial foliations of the projective plane and the
hyperbolic-singularity local model.

A projective foliation is stored through three homogeneous degree-d
polynomials F0, F1, F2 in (z0, z1, z2); each affine chart AFFa carries the
induced polynomial field

    V_u = F_i(z-hat) - u F_a(z-hat),   V_v = F_j(z-hat) - v F_a(z-hat),

with (i, j) the other two indices in increasing order and z-hat the
dehomogenized point.  Plane-domain foliations (the linear local model and
the product reference surface) carry their field directly in (z, w).

Local-model quantities follow the parametrization
psi_x(zeta) = (z e^{i zeta}, w e^{i lambda zeta}), Im lambda > 0.
"""

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import InputError

AFFINE_CHARTS = ("AFF0", "AFF1", "AFF2")
PLANE = "PLANE"
# indices (i, j) of the affine coordinates (z_i/z_a, z_j/z_a) per chart a
_CHART_OTHERS = {0: (1, 2), 1: (0, 2), 2: (0, 1)}
TOL_IMAG = 1e-6


class SingClass(Enum):
    HYPERBOLIC = "HYPERBOLIC"
    NONDEGENERATE_NONHYPERBOLIC = "NONDEGENERATE_NONHYPERBOLIC"
    DEGENERATE = "DEGENERATE"


@dataclass(frozen=True)
class ChartPoint:
    chart: str
    z: complex
    w: complex

    def __post_init__(self):
        if self.chart not in AFFINE_CHARTS and self.chart != PLANE:
            raise InputError(f"unknown chart {self.chart!r}")
        if not (np.isfinite(self.z) and np.isfinite(self.w)):
            raise InputError("chart coordinates must be finite")
        object.__setattr__(self, "z", complex(self.z))
        object.__setattr__(self, "w", complex(self.w))

    @property
    def coords(self):
        return self.z, self.w


@dataclass(frozen=True)
class SingularityRecord:
    location: ChartPoint
    eigenvalues: tuple
    ratio: complex
    classification: SingClass

    @property
    def is_hyperbolic(self):
        return self.classification is SingClass.HYPERBOLIC


@dataclass(frozen=True)
class LocalModelPoint:
    """A point (z, w) of the unit bidisc with the model multiplier lambda."""

    lam: complex
    z: complex
    w: complex

    def __post_init__(self):
        if not np.imag(self.lam) > 0.0:
            raise InputError("need Im(lambda) > 0 (axes pre-normalized)")
        if abs(self.z) >= 1.0 or abs(self.w) >= 1.0:
            raise InputError("(z, w) must lie in the open unit bidisc")


# ---------------------------------------------------------------------------
# homogeneous coordinates and chart transitions
# ---------------------------------------------------------------------------

def to_homogeneous(p):
    """Homogeneous representative of a projective chart point."""
    a = AFFINE_CHARTS.index(p.chart)
    h = np.zeros(3, dtype=complex)
    h[a] = 1.0
    i, j = _CHART_OTHERS[a]
    h[i], h[j] = p.z, p.w
    return h


def canonical_chart_index(h, rtol=1e-9):
    # smallest index within rtol of the max modulus, so that points with
    # tied coordinate sizes canonicalize identically across charts
    a = np.abs(h)
    return int(np.argmax(a >= a.max() * (1.0 - rtol)))


def from_homogeneous(h, chart):
    a = AFFINE_CHARTS.index(chart)
    if h[a] == 0:
        raise InputError(f"point lies on the boundary line of {chart}")
    i, j = _CHART_OTHERS[a]
    return ChartPoint(chart, h[i] / h[a], h[j] / h[a])


def transition_point(p, target_chart):
    """Express a projective point in another affine chart."""
    if p.chart == PLANE or target_chart == PLANE:
        raise InputError("PLANE points do not live on the projective plane")
    return from_homogeneous(to_homogeneous(p), target_chart)


def transition_tangent(p, du, dv, target_chart):
    """Push an affine tangent vector at p forward to another chart."""
    a = AFFINE_CHARTS.index(p.chart)
    b = AFFINE_CHARTS.index(target_chart)
    h = to_homogeneous(p)
    dh = np.zeros(3, dtype=complex)
    i, j = _CHART_OTHERS[a]
    dh[i], dh[j] = du, dv
    if h[b] == 0:
        raise InputError("target chart is singular at this point")
    k, l = _CHART_OTHERS[b]
    zb, dzb = h[b], dh[b]
    return ((dh[k] * zb - h[k] * dzb) / zb ** 2,
            (dh[l] * zb - h[l] * dzb) / zb ** 2)


def canonicalize_batch(chart_ids, z, w):
    """Vectorized canonical-chart representative of projective points.

    Returns (chart_ids', z', w') with every point expressed in the chart
    of its largest homogeneous coordinate (tie-robust)."""
    chart_ids = np.asarray(chart_ids)
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    n = len(z)
    h = np.zeros((n, 3), dtype=complex)
    for a in range(3):
        idx = np.nonzero(chart_ids == a)[0]
        if idx.size == 0:
            continue
        i, j = _CHART_OTHERS[a]
        h[idx, a] = 1.0
        h[idx, i] = z[idx]
        h[idx, j] = w[idx]
    mag = np.abs(h)
    b = np.argmax(mag >= mag.max(axis=1)[:, None] * (1.0 - 1e-9), axis=1)
    out_c = b.astype(np.int8)
    out_z = np.empty(n, dtype=complex)
    out_w = np.empty(n, dtype=complex)
    for a in range(3):
        idx = np.nonzero(b == a)[0]
        if idx.size == 0:
            continue
        i, j = _CHART_OTHERS[a]
        out_z[idx] = h[idx, i] / h[idx, a]
        out_w[idx] = h[idx, j] / h[idx, a]
    return out_c, out_z, out_w


def chart_switch_time_factor(p, target_chart, degree):
    """Flow-time conversion d tau_target = factor * d tau_source.

    For a degree-d homogeneous field the pushed chart field differs from the
    target chart field by x_b^{d-1}, with x_b the target-index homogeneous
    coordinate of the point in source-chart normalization.
    """
    a = AFFINE_CHARTS.index(p.chart)
    b = AFFINE_CHARTS.index(target_chart)
    h = to_homogeneous(p)  # normalized so that h[a] = 1
    return h[b] ** (degree - 1)


# ---------------------------------------------------------------------------
# the foliation type
# ---------------------------------------------------------------------------

def _poly2d_shift(c, dx, dy):
    out = np.zeros((c.shape[0] + dx, c.shape[1] + dy), dtype=complex)
    out[dx:, dy:] = c
    return out


def _pad_to(c, shape):
    out = np.zeros(shape, dtype=complex)
    out[:c.shape[0], :c.shape[1]] = c
    return out


@dataclass
class PolyFoliation:
    """A polynomial foliation: projective (homogeneous components) or
    plane-domain (direct field in two affine variables)."""

    kind: str                      # "projective" | "plane"
    degree: int
    name: str = ""
    homog: tuple = None            # projective: 3 x {(i,j,k): coeff} dicts
    plane_field: tuple = None      # plane: pair of 2d coeff arrays
    domain_radius: float = np.inf  # plane kind: bidisc radius
    _chart_cache: dict = field(default_factory=dict, repr=False)
    _sing_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind == "projective":
            if self.degree < 1:
                raise InputError("projective foliation needs degree >= 1")
            if self.homog is None or len(self.homog) != 3:
                raise InputError("need three homogeneous components")
            for comp in self.homog:
                for (i, j, k) in comp:
                    if i + j + k != self.degree or min(i, j, k) < 0:
                        raise InputError(
                            f"monomial {(i, j, k)} is not homogeneous of "
                            f"degree {self.degree}")
            if not any(len(c) for c in self.homog):
                raise InputError("zero vector field")
            self._check_not_radial()
        elif self.kind == "plane":
            if self.plane_field is None or len(self.plane_field) != 2:
                raise InputError("plane foliation needs a two-component field")
        else:
            raise InputError(f"unknown foliation kind {self.kind!r}")

    # -- structure ---------------------------------------------------------

    def _check_not_radial(self):
        rng = np.random.default_rng(0)
        pts = rng.standard_normal((20, 3)) + 1j * rng.standard_normal((20, 3))
        f = np.stack([self._eval_homog(c, pts) for c in self.homog], axis=-1)
        wedge = np.stack([
            f[:, 1] * pts[:, 2] - f[:, 2] * pts[:, 1],
            f[:, 2] * pts[:, 0] - f[:, 0] * pts[:, 2],
            f[:, 0] * pts[:, 1] - f[:, 1] * pts[:, 0]], axis=-1)
        if np.max(np.abs(wedge)) < 1e-12:
            raise InputError("field is identically radial: it defines no "
                             "foliation of the projective plane")

    @staticmethod
    def _eval_homog(comp, pts):
        vals = np.zeros(pts.shape[0], dtype=complex)
        for (i, j, k), c in comp.items():
            vals += c * pts[:, 0] ** i * pts[:, 1] ** j * pts[:, 2] ** k
        return vals

    @property
    def charts(self):
        return AFFINE_CHARTS if self.kind == "projective" else (PLANE,)

    def chart_polys(self, chart):
        """Dense 2d coefficient arrays (Vu, Vv, dVu/du, dVu/dv, dVv/du,
        dVv/dv) of the induced field in the given chart."""
        if chart in self._chart_cache:
            return self._chart_cache[chart]
        if self.kind == "plane":
            vu, vv = self.plane_field
            vu = np.asarray(vu, dtype=complex)
            vv = np.asarray(vv, dtype=complex)
        else:
            a = AFFINE_CHARTS.index(chart)
            i, j = _CHART_OTHERS[a]
            n = self.degree + 2
            comps = []
            for comp in self.homog:
                c2 = np.zeros((n, n), dtype=complex)
                for (e0, e1, e2), c in comp.items():
                    exps = (e0, e1, e2)
                    c2[exps[i], exps[j]] += c
                comps.append(c2)
            vu = comps[i] - _poly2d_shift(comps[a], 1, 0)[:n, :n]
            vv = comps[j] - _poly2d_shift(comps[a], 0, 1)[:n, :n]
        entry = (vu, vv, _dx(vu), _dy(vu), _dx(vv), _dy(vv))
        self._chart_cache[chart] = entry
        return entry

    # -- evaluation --------------------------------------------------------

    def field(self, chart, u, v):
        vu, vv = self.chart_polys(chart)[:2]
        return (npoly.polyval2d(u, v, vu), npoly.polyval2d(u, v, vv))

    def jacobian(self, chart, u, v):
        _, _, duu, duv, dvu, dvv = self.chart_polys(chart)
        return (npoly.polyval2d(u, v, duu), npoly.polyval2d(u, v, duv),
                npoly.polyval2d(u, v, dvu), npoly.polyval2d(u, v, dvv))

    def trace_jacobian(self, chart, u, v):
        _, _, duu, _, _, dvv = self.chart_polys(chart)
        return npoly.polyval2d(u, v, duu) + npoly.polyval2d(u, v, dvv)

    def field_scale(self, chart):
        vu, vv = self.chart_polys(chart)[:2]
        return max(float(np.abs(vu).sum()), float(np.abs(vv).sum()), 1.0)

    # -- singularities -----------------------------------------------------

    def singularities(self, seeds_per_axis=40, tol=1e-8):
        key = (seeds_per_axis, tol)
        if key not in self._sing_cache:
            self._sing_cache[key] = find_singularities(
                self, seeds_per_axis=seeds_per_axis, tol=tol)
        return self._sing_cache[key]

    def singular_points_in_chart(self, chart, radius=3.0):
        """(n,2) array of singular-point coordinates visible in a chart."""
        out = []
        for rec in self.singularities():
            if self.kind == "plane":
                out.append([rec.location.z, rec.location.w])
                continue
            h = to_homogeneous(rec.location)
            a = AFFINE_CHARTS.index(chart)
            if abs(h[a]) < 1e-12:
                continue
            q = from_homogeneous(h, chart)
            if max(abs(q.z), abs(q.w)) <= radius:
                out.append([q.z, q.w])
        return np.asarray(out, dtype=complex).reshape(-1, 2)


def _dx(c):
    if c.shape[0] <= 1:
        return np.zeros((1, 1), dtype=complex)
    return (c[1:, :].T * np.arange(1, c.shape[0])).T


def _dy(c):
    if c.shape[1] <= 1:
        return np.zeros((1, 1), dtype=complex)
    return c[:, 1:] * np.arange(1, c.shape[1])


def evaluate_field(fol, p):
    """Induced field at a chart point; returns a pair of complex numbers."""
    vu, vv = fol.field(p.chart, p.z, p.w)
    return complex(vu), complex(vv)


# ---------------------------------------------------------------------------
# built-ins
# ---------------------------------------------------------------------------

def jouanolou(d):
    """The degree-d foliation induced by (z1^d, z2^d, z0^d)."""
    if d < 2:
        raise InputError("jouanolou needs degree >= 2")
    return PolyFoliation(
        kind="projective", degree=d, name=f"jouanolou-{d}",
        homog=({(0, d, 0): 1.0}, {(0, 0, d): 1.0}, {(d, 0, 0): 1.0}))


def linear_model(lam):
    """The linear local model z d/dz + lambda w d/dw on the unit bidisc."""
    lam = complex(lam)
    if not lam.imag > 0:
        raise InputError("need Im(lambda) > 0")
    vz = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)   # z
    vw = np.array([[0.0, lam], [0.0, 0.0]], dtype=complex)   # lambda w
    return PolyFoliation(kind="plane", degree=1, name=f"linear-model",
                         plane_field=(vz, vw), domain_radius=1.0)


def product_disc():
    """The product reference surface: leaves D x {w}, field d/dz."""
    vz = np.array([[1.0]], dtype=complex)
    vw = np.array([[0.0]], dtype=complex)
    return PolyFoliation(kind="plane", degree=0, name="product-disc",
                         plane_field=(vz, vw), domain_radius=1.0)


BUILTINS = {"jouanolou": jouanolou, "linear_model": linear_model,
            "product_disc": product_disc}


# ---------------------------------------------------------------------------
# singularity search
# ---------------------------------------------------------------------------

def _newton_batch(fol, chart, u, v, max_iter=50, tol=1e-13):
    scale = fol.field_scale(chart)
    err = np.errstate(invalid="ignore", over="ignore", divide="ignore")
    err.__enter__()
    for _ in range(max_iter):
        vu, vv = fol.field(chart, u, v)
        j11, j12, j21, j22 = fol.jacobian(chart, u, v)
        det = j11 * j22 - j12 * j21
        bad = np.abs(det) < 1e-300
        det = np.where(bad, 1.0, det)
        du = (j22 * vu - j12 * vv) / det
        dv = (-j21 * vu + j11 * vv) / det
        res0 = np.abs(vu) + np.abs(vv)
        # damped update: halve the step while the residual grows
        step = np.ones_like(res0)
        for _ in range(8):
            nu, nv = u - step * du, v - step * dv
            r1u, r1v = fol.field(chart, nu, nv)
            worse = (np.abs(r1u) + np.abs(r1v) > res0) & (res0 > tol * scale)
            if not np.any(worse):
                break
            step = np.where(worse, step / 2.0, step)
        u, v = u - step * du, v - step * dv
        u = np.where(bad | ~np.isfinite(u), np.inf, u)
        v = np.where(bad | ~np.isfinite(v), np.inf, v)
    vu, vv = fol.field(chart, np.where(np.isfinite(u), u, 0.0),
                       np.where(np.isfinite(v), v, 0.0))
    ok = np.isfinite(u) & np.isfinite(v) \
        & (np.abs(vu) + np.abs(vv) < tol * scale * 10) \
        & (np.abs(u) < 100.0) & (np.abs(v) < 100.0)
    err.__exit__(None, None, None)
    return u[ok], v[ok]


def _seed_grid(n_per_axis):
    n_ang = 8
    n_rad = max(1, n_per_axis // n_ang)
    radii = np.linspace(0.15, 1.45, n_rad)
    angles = np.exp(2j * np.pi * (np.arange(n_ang) + 0.37) / n_ang)
    vals = (radii[:, None] * angles[None, :]).ravel()
    uu, vv = np.meshgrid(vals, vals)
    return uu.ravel(), vv.ravel()


def find_singularities(fol, seeds_per_axis=40, tol=1e-8):
    """Newton search from a complex seed grid in every chart, projective
    de-duplication, and eigenvalue classification."""
    found = {}
    warnings = []
    for chart in fol.charts:
        u0, v0 = _seed_grid(seeds_per_axis)
        u, v = _newton_batch(fol, chart, u0.astype(complex),
                             v0.astype(complex))
        for uu, vv in zip(u, v):
            p = ChartPoint(chart, uu, vv)
            if fol.kind == "projective":
                h = to_homogeneous(p)
                a = canonical_chart_index(h)
                h = h / h[a]
                key = (a,) + tuple(np.round(np.delete(h, a), 8).view(float))
                p = from_homogeneous(h, AFFINE_CHARTS[a])
            else:
                key = tuple(np.round([uu, vv], 8).view(float))
            if key not in found:
                found[key] = p
    records = []
    for p in sorted(found.values(), key=lambda q: (q.chart, q.z.real,
                                                   q.z.imag, q.w.real)):
        j11, j12, j21, j22 = fol.jacobian(p.chart, p.z, p.w)
        ev = np.linalg.eigvals(np.array([[j11, j12], [j21, j22]]))
        lam1, lam2 = sorted(ev, key=abs, reverse=True)
        scale = max(abs(lam1), 1e-300)
        if abs(lam2) < 1e-9 * scale:
            cls, ratio = SingClass.DEGENERATE, np.inf
        else:
            ratio = lam1 / lam2
            cls = (SingClass.HYPERBOLIC if abs(ratio.imag) > TOL_IMAG
                   else SingClass.NONDEGENERATE_NONHYPERBOLIC)
        records.append(SingularityRecord(p, (complex(lam1), complex(lam2)),
                                         ratio, cls))
    return records


# ---------------------------------------------------------------------------
# local model
# ---------------------------------------------------------------------------

def local_model_leaf(m, zeta):
    """psi_x(zeta) = (z e^{i zeta}, w e^{i lambda zeta})."""
    zeta = complex(zeta)
    return (m.z * np.exp(1j * zeta), m.w * np.exp(1j * m.lam * zeta))


def local_model_sector_contains(m, zeta):
    """Membership of zeta in the sector Pi_x = psi_x^{-1}(D^2).

    The two strict inequalities are Im(lam) u + Re(lam) v > log|w| and
    v > log|z| with zeta = u + iv; a constraint with a vanishing coordinate
    (log = -inf) is vacuous.
    """
    u, v = np.real(zeta), np.imag(zeta)
    lam = m.lam
    first = True if m.w == 0 else \
        lam.imag * u + lam.real * v > np.log(abs(m.w))
    second = True if m.z == 0 else v > np.log(abs(m.z))
    return bool(first and second)


def local_model_holonomy(m, zeta):
    """The transversal contraction factor Phi_x(zeta) along the model leaf:

        |e^{i zeta}| |e^{i lam zeta}|
            * sqrt(|z|^2 + |lam w|^2) / sqrt(|z'|^2 + |lam w'|^2)

    with (z', w') = psi_x(zeta).  Multiplicative along concatenations.
    """
    if m.z == 0 and m.w == 0:
        raise InputError("the origin is the singular point")
    return float(np.exp(log_local_model_holonomy(m, zeta)))


def log_local_model_holonomy(m, zeta):
    if m.z == 0 and m.w == 0:
        raise InputError("the origin is the singular point")
    zeta = complex(zeta)
    lam = m.lam
    z1, w1 = local_model_leaf(m, zeta)
    num = abs(m.z) ** 2 + abs(lam * m.w) ** 2
    den = abs(z1) ** 2 + abs(lam * w1) ** 2
    return (-zeta.imag - (lam * zeta).imag + 0.5 * np.log(num)
            - 0.5 * np.log(den))


def local_model_curvature_numerator(m):
    """Curvature density of the model in flat leaf coordinates.

    Returns the density of (i/(2 pi)) d d-bar log Phi_x at zeta = 0 against
    i d zeta ^ d zeta-bar:

        -(|lam - 1|^2 / (4 pi)) |z|^2 |lam w|^2 / (|z|^2 + |lam w|^2)^2,

    equal to the flat Laplacian of log Phi_x at 0 divided by 8 pi.  Always
    <= 0, and = 0 on either separatrix.
    """
    if m.z == 0 and m.w == 0:
        raise InputError("the origin is the singular point")
    a = abs(m.z) ** 2
    b = abs(m.lam * m.w) ** 2
    return -abs(m.lam - 1.0) ** 2 / (4.0 * np.pi) * a * b / (a + b) ** 2


# ---------------------------------------------------------------------------
# spec files
# ---------------------------------------------------------------------------

def foliation_from_dict(spec):
    """Build a foliation from a parsed spec mapping.

    Either {"builtin": name, ...builtin params...} or
    {"degree": d, "components": [[{"exponents": [i,j,k],
                                   "coeff": [re, im]}, ...] x 3]}.
    Unknown keys are errors.
    """
    spec = dict(spec)
    if "builtin" in spec:
        name = spec.pop("builtin")
        if name == "jouanolou":
            d = spec.pop("degree", None)
            if spec:
                raise InputError(f"unknown keys in foliation spec: "
                                 f"{sorted(spec)}")
            if d is None:
                raise InputError("jouanolou needs a degree")
            return jouanolou(int(d))
        if name == "linear_model":
            lam = spec.pop("lambda", None)
            if spec:
                raise InputError(f"unknown keys in foliation spec: "
                                 f"{sorted(spec)}")
            if lam is None:
                raise InputError("linear_model needs lambda")
            if isinstance(lam, (list, tuple)):
                lam = complex(lam[0], lam[1])
            return linear_model(lam)
        if name == "product_disc":
            if spec:
                raise InputError(f"unknown keys in foliation spec: "
                                 f"{sorted(spec)}")
            return product_disc()
        raise InputError(f"unknown builtin {name!r}")
    try:
        degree = int(spec.pop("degree"))
        comps_raw = spec.pop("components")
        name = spec.pop("name", "custom")
    except KeyError as exc:
        raise InputError(f"foliation spec is missing {exc}") from None
    if spec:
        raise InputError(f"unknown keys in foliation spec: {sorted(spec)}")
    if len(comps_raw) != 3:
        raise InputError("need exactly three components")
    comps = []
    for comp in comps_raw:
        d = {}
        for mono in comp:
            mono = dict(mono)
            exps = tuple(int(e) for e in mono.pop("exponents"))
            c = mono.pop("coeff")
            if mono:
                raise InputError(f"unknown monomial keys: {sorted(mono)}")
            if len(exps) != 3 or sum(exps) != degree or min(exps) < 0:
                raise InputError(f"monomial {exps} does not have degree "
                                 f"{degree}")
            coeff = complex(c[0], c[1]) if isinstance(c, (list, tuple)) \
                else complex(c)
            d[exps] = d.get(exps, 0.0) + coeff
        comps.append(d)
    return PolyFoliation(kind="projective", degree=degree, name=name,
                         homog=tuple(comps))


def load_foliation(path):
    """Load a foliation spec from a JSON or TOML file."""
    text = open(path, "rb").read()
    if str(path).endswith(".toml"):
        try:
            import tomllib as toml
        except ImportError:
            import tomli as toml
        spec = toml.loads(text.decode())
    else:
        spec = json.loads(text.decode())
    return foliation_from_dict(spec)
