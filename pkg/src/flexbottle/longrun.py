"""Long-run schedule choice: net benefit differences, stability, equilibria.

D_J = (F^r - P_J^r) - (F^f_J - P_J^f) with daily commuting costs. Internally
everything is measured in kappa*N^2/s, in which
D_J = fr - ff_J - 2*rho*(c_J^r - c_J^f) for output deficits fr, ff and
morning cost shares c (units beta*N/s). Only (mu, theta, rho) matter.

When a group is empty (mu = 0 or mu = 1) its schedule share is meaningless;
the solvers work on the present group's share and mirror it onto the other.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceError, DomainError
from .model import CASES, Model, ScheduleSplit, as_split, case_index, classify_case
from .productivity import output_deficits
from .shortrun import morning_cost_shares

FD_STEP = 1e-6
ZERO_TOL = 1e-9  # |D| below this (kappa*N^2/s) counts as zero


def diff_units(mu, theta, rho, v_H, v_I, tables="corrected", shift=(0.0, 0.0)):
    """Vectorised (D_H, D_I) in units of kappa*N^2/s; ``shift`` is added to each."""
    fr, _, ff_H, ff_I = output_deficits(mu, theta, v_H, v_I, tables)
    c = morning_cost_shares(mu, theta, v_H, v_I, tables)
    d_H = fr - ff_H - 2 * rho * (c[..., 0] - c[..., 1]) + shift[0]
    d_I = fr - ff_I - 2 * rho * (c[..., 2] - c[..., 3]) + shift[1]
    return d_H, d_I


class _DiffField:
    """D evaluated at fixed (mu, theta, rho), with case-aware partials."""

    def __init__(self, mu, theta, rho, tables="corrected", shift=(0.0, 0.0)):
        self.mu, self.theta, self.rho = float(mu), float(theta), float(rho)
        self.tables = tables
        self.shift = tuple(float(x) for x in shift)

    @classmethod
    def of(cls, model: Model, tables="corrected", sigma=(0.0, 0.0)):
        u = model.output_unit
        return cls(model.mu, model.theta, model.rho, tables, (sigma[0] / u, sigma[1] / u))

    def __call__(self, v_H, v_I):
        return diff_units(self.mu, self.theta, self.rho, v_H, v_I, self.tables, self.shift)

    def case(self, v_H, v_I):
        return case_index(self.mu, self.theta, v_H, v_I)

    def partial(self, v_H, v_I, group):
        """dD_J/dv_J by finite differences kept inside the case of the point."""
        j = 0 if group == "H" else 1
        v = [v_H, v_I]
        k0 = int(self.case(v_H, v_I))
        h = FD_STEP

        def at(x):
            p = list(v)
            p[j] = x
            return p

        x = v[j]
        options = []
        if x - h >= 0 and x + h <= 1:
            options.append((x - h, x + h))
        if x - h >= 0:
            options.append((x - h, x))
        if x + h <= 1:
            options.append((x, x + h))
        for lo, hi in options:
            if int(self.case(*at(lo))) == k0 and int(self.case(*at(hi))) == k0:
                break
        else:
            lo, hi = options[0]
        return float((self(*at(hi))[j] - self(*at(lo))[j]) / (hi - lo))


@dataclass(frozen=True)
class DiffPair:
    """Net benefit differences (money/day) and own-share partials."""

    D_H: float
    D_I: float
    case: str
    dD_H_dv_H: float
    dD_I_dv_I: float

    def as_dict(self) -> dict:
        return {"D_H": self.D_H, "D_I": self.D_I, "case": self.case,
                "dD_H_dv_H": self.dD_H_dv_H, "dD_I_dv_I": self.dD_I_dv_I}


def benefit_diff(model: Model, split, tables="corrected", sigma=(0.0, 0.0)) -> DiffPair:
    split = as_split(split)
    f = _DiffField.of(model, tables, sigma)
    d_H, d_I = f(split.v_H, split.v_I)
    u = model.output_unit
    return DiffPair(
        D_H=float(d_H) * u,
        D_I=float(d_I) * u,
        case=classify_case(model, split).case,
        dD_H_dv_H=f.partial(split.v_H, split.v_I, "H") * u,
        dD_I_dv_I=f.partial(split.v_H, split.v_I, "I") * u,
    )


# ---------------------------------------------------------------------------
# stability


@dataclass(frozen=True)
class StabilityVerdict:
    kind: str  # interior | boundary | corner
    stable: bool
    clauses: dict  # group -> clause that held (or failed)
    D: tuple = (0.0, 0.0)  # (D_H, D_I) in kappa*N^2/s
    partials: tuple = (0.0, 0.0)

    def as_dict(self) -> dict:
        return {"kind": self.kind, "stable": self.stable, "clauses": dict(sorted(self.clauses.items())),
                "D_units": list(self.D), "partials_units": list(self.partials)}


def _on_edge(v):
    return v == 0.0 or v == 1.0


def _group_clause(v, d, slope, tol):
    if _on_edge(v):
        if (v - 0.5) * d > tol:
            return True, "corner-strict"
        if abs(d) <= tol and slope < 0:
            return True, "corner-tangent"
        return False, "corner-violated"
    if abs(d) <= tol and slope < 0:
        return True, "interior"
    return False, "interior-violated"


def _verdict(f: _DiffField, v_H, v_I, tol=ZERO_TOL) -> StabilityVerdict:
    d = tuple(float(x) for x in f(v_H, v_I))
    slopes = (f.partial(v_H, v_I, "H"), f.partial(v_H, v_I, "I"))
    groups = [("H", v_H, 0), ("I", v_I, 1)]
    if f.mu == 0.0:
        groups = [groups[1]]
    elif f.mu == 1.0:
        groups = [groups[0]]
    clauses, ok = {}, True
    for g, v, j in groups:
        good, name = _group_clause(v, d[j], slopes[j], tol)
        clauses[g] = name
        ok &= good
    if len(groups) == 1:
        clauses["H" if f.mu == 0.0 else "I"] = "absent"
    edges = sum(_on_edge(v) for _, v, _ in groups)
    kind = "corner" if edges == len(groups) else ("interior" if edges == 0 else "boundary")
    return StabilityVerdict(kind, bool(ok), clauses, d, slopes)


def stability_verdict(model: Model, split, tables="corrected", sigma=(0.0, 0.0), tol=ZERO_TOL) -> StabilityVerdict:
    split = as_split(split)
    return _verdict(_DiffField.of(model, tables, sigma), split.v_H, split.v_I, tol)


# ---------------------------------------------------------------------------
# enumeration


@dataclass(frozen=True)
class ScanConfig:
    grid: int = 101
    root_tol: float = 1e-9  # on |D| in kappa*N^2/s
    dedupe: float = 1e-6
    newton_iters: int = 60


@dataclass(frozen=True)
class EquilibriumPoint:
    split: ScheduleSplit
    verdict: StabilityVerdict

    def as_dict(self) -> dict:
        return {"v_H": self.split.v_H, "v_I": self.split.v_I, **self.verdict.as_dict()}


@dataclass(frozen=True)
class EquilibriumSet:
    points: tuple[EquilibriumPoint, ...]
    mu: float
    theta: float
    rho: float
    scan: ScanConfig
    meta: dict = field(default_factory=dict)

    @property
    def splits(self) -> list[tuple[float, float]]:
        return [p.split.as_tuple() for p in self.points]

    def as_dict(self) -> dict:
        return {
            "mu": self.mu, "theta": self.theta, "rho": self.rho,
            "equilibria": [p.as_dict() for p in self.points],
            "scan": {"grid": self.scan.grid, "root_tol": self.scan.root_tol, "dedupe": self.scan.dedupe},
            "meta": dict(sorted(self.meta.items())),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2)


def _edge_roots(fn, n):
    """Sign-change roots on (0, 1) of ``fn``, which must accept arrays."""
    xs = np.linspace(0.0, 1.0, n)
    ys = np.asarray(fn(xs), float)
    roots = list(xs[1:-1][ys[1:-1] == 0.0])
    for i in np.flatnonzero(ys[:-1] * ys[1:] < 0):
        roots.append(brentq(lambda x: float(fn(x)), xs[i], xs[i + 1], xtol=1e-14, rtol=1e-14))
    return [float(r) for r in roots if 0.0 < r < 1.0]


def _newton_batch(f: _DiffField, seeds, iters, tol):
    """Damped Newton from many seeds at once; returns the converged points."""
    v = np.clip(np.asarray(seeds, float), 1e-9, 1 - 1e-9)
    if v.size == 0:
        return v
    h = 1e-7
    lams = 0.5 ** np.arange(21)
    res = np.stack(f(v[:, 0], v[:, 1]), axis=1)
    alive = np.ones(len(v), bool)
    for _ in range(iters):
        norm = np.hypot(res[:, 0], res[:, 1])
        alive &= norm >= tol
        if not alive.any():
            break
        idx = np.flatnonzero(alive)
        x = v[idx]
        # one-sided differences pointing into the square
        sh = np.where(x[:, 0] + h <= 1, h, -h)
        si = np.where(x[:, 1] + h <= 1, h, -h)
        r0 = res[idx]
        rH = np.stack(f(x[:, 0] + sh, x[:, 1]), axis=1)
        rI = np.stack(f(x[:, 0], x[:, 1] + si), axis=1)
        a, c = (rH[:, 0] - r0[:, 0]) / sh, (rH[:, 1] - r0[:, 1]) / sh
        b, d = (rI[:, 0] - r0[:, 0]) / si, (rI[:, 1] - r0[:, 1]) / si
        det = a * d - b * c
        scale = np.maximum(np.abs(a * d), np.abs(b * c)) + 1e-300
        ok = np.abs(det) > 1e-10 * scale
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.stack([(-d * r0[:, 0] + b * r0[:, 1]) / det, (c * r0[:, 0] - a * r0[:, 1]) / det], axis=1)
        step[~ok] = 0.0
        # try every damping factor in one evaluation, keep the first that helps
        cand = np.clip(x[None, :, :] + lams[:, None, None] * step[None, :, :], 0.0, 1.0)
        cr = np.stack(f(cand[..., 0], cand[..., 1]), axis=-1)
        cn = np.hypot(cr[..., 0], cr[..., 1])
        better = cn < norm[idx][None, :]
        first = np.argmax(better, axis=0)
        moved = better.any(axis=0) & ok
        cols = np.arange(len(idx))
        v[idx[moved]] = cand[first[moved], cols[moved]]
        res[idx[moved]] = cr[first[moved], cols[moved]]
        alive[idx[~moved]] = False
    norm = np.hypot(res[:, 0], res[:, 1])
    return v[norm < tol]


def _enumerate(f: _DiffField, cfg: ScanConfig):
    cands = []
    one_group = f.mu in (0.0, 1.0)
    if one_group:
        j = 1 if f.mu == 0.0 else 0
        cands += [(0.0, 0.0), (1.0, 1.0)]
        for r in _edge_roots(lambda x: f(x, x)[j], cfg.grid):
            cands.append((r, r))
        return cands, {"mode": "single-group"}

    cands += [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]
    # edges: one share pinned at 0 or 1, roots of the free group's D
    for pin in (0.0, 1.0):
        for r in _edge_roots(lambda x: f(pin, x)[1], cfg.grid):
            cands.append((pin, r))
        for r in _edge_roots(lambda x: f(x, pin)[0], cfg.grid):
            cands.append((r, pin))
    # interior: cells where both D change sign, polished by damped Newton
    xs = np.linspace(0.0, 1.0, cfg.grid)
    VH, VI = np.meshgrid(xs, xs, indexing="ij")
    dH, dI = f(VH, VI)

    def straddles(d):
        c = np.stack([d[:-1, :-1], d[1:, :-1], d[:-1, 1:], d[1:, 1:]])
        return (c.min(axis=0) <= 0) & (c.max(axis=0) >= 0)

    cells = np.argwhere(straddles(dH) & straddles(dI))
    mid = 0.5 * (xs[:-1] + xs[1:])
    seeds = np.column_stack([mid[cells[:, 0]], mid[cells[:, 1]]]) if len(cells) else np.empty((0, 2))
    for v in _newton_batch(f, seeds, cfg.newton_iters, cfg.root_tol):
        if 0 < v[0] < 1 and 0 < v[1] < 1:
            cands.append((float(v[0]), float(v[1])))
    return cands, {"mode": "two-group", "interior_seeds": int(len(seeds))}


def _collect(f: _DiffField, cfg: ScanConfig, model_info):
    cands, meta = _enumerate(f, cfg)
    points = []
    for v_H, v_I in sorted(cands):
        if any(abs(v_H - p.split.v_H) <= cfg.dedupe and abs(v_I - p.split.v_I) <= cfg.dedupe for p in points):
            continue
        verdict = _verdict(f, v_H, v_I, max(cfg.root_tol, ZERO_TOL))
        if verdict.stable:
            points.append(EquilibriumPoint(ScheduleSplit(v_H, v_I), verdict))
    meta["candidates"] = len(cands)
    return EquilibriumSet(tuple(points), f.mu, f.theta, f.rho, cfg, meta)


def enumerate_equilibria(model: Model, scan_cfg: ScanConfig | None = None, tables="corrected", sigma=(0.0, 0.0)) -> EquilibriumSet:
    """All stable schedule splits; ``sigma`` (money/day) shifts D_H, D_I."""
    cfg = scan_cfg or ScanConfig()
    return _collect(_DiffField.of(model, tables, sigma), cfg, None)


def enumerate_equilibria_units(mu, theta, rho, scan_cfg=None, tables="corrected", shift=(0.0, 0.0)) -> EquilibriumSet:
    """Same as :func:`enumerate_equilibria` on dimensionless inputs (shift in kappa*N^2/s)."""
    return _collect(_DiffField(mu, theta, rho, tables, shift), scan_cfg or ScanConfig(), None)


def rho_dstar(mu: float, theta: float) -> float:
    """Threshold on rho below which all-flex (0, 0) stays stable when theta >= 2(1-mu)."""
    if not (0 < mu <= 1 and 0 < theta <= 1):
        raise DomainError("DOMAIN", f"need mu in (0,1], theta in (0,1]; got {mu}, {theta}")
    den = theta + 2 * mu - 2
    if abs(den) < 1e-12:
        raise DomainError("DIVISION_NEAR_ZERO", "theta + 2*mu - 2 vanishes")
    num = theta**3 - 3 * theta**2 * mu + 3 * theta * (mu**2 + 2 * mu - 1) + 3 * (1 - mu) ** 2 * (1 + mu)
    return num / (12 * den)


# ---------------------------------------------------------------------------
# adjustment dynamics


@dataclass(frozen=True)
class DynamicsConfig:
    step: float = 0.05
    max_iters: int = 20000
    tol: float = 1e-9


@dataclass(frozen=True)
class BestResponsePath:
    points: tuple[tuple[float, float], ...]
    converged: bool
    verdict: StabilityVerdict | None

    @property
    def end(self) -> ScheduleSplit:
        return ScheduleSplit(*self.points[-1])


def best_response_path(model: Model, start, dyn_cfg: DynamicsConfig | None = None, tables="corrected", sigma=(0.0, 0.0)) -> BestResponsePath:
    """Projected adjustment: each share moves toward the schedule with the
    higher net benefit, v_J += step * sign(D_J) * min(1, |D_J| / (kappa*N^2/s)).

    Raises ConvergenceError("MAX_ITERS") carrying the unconverged path as ``.path``.
    """
    cfg = dyn_cfg or DynamicsConfig()
    f = _DiffField.of(model, tables, sigma)
    v = np.array(as_split(start).as_tuple(), float)
    mirror = {0.0: (1, 0), 1.0: (0, 1)}.get(f.mu)  # (present, absent) index
    if mirror:
        v[mirror[1]] = v[mirror[0]]
    pts = [tuple(float(x) for x in v)]
    for _ in range(cfg.max_iters):
        d = np.array(f(*v), float)
        nv = np.clip(v + cfg.step * np.sign(d) * np.minimum(1.0, np.abs(d)), 0.0, 1.0)
        if mirror:
            nv[mirror[1]] = nv[mirror[0]]
        moved = np.max(np.abs(nv - v))
        v = nv
        if moved < cfg.tol:
            break
        pts.append(tuple(float(x) for x in v))
    else:
        path = BestResponsePath(tuple(pts), False, None)
        err = ConvergenceError("MAX_ITERS", f"no rest point after {cfg.max_iters} steps; last {pts[-1]}")
        err.path = path
        raise err
    end = pts[-1]
    return BestResponsePath(tuple(pts), True, _verdict(f, *end, tol=max(ZERO_TOL, 10 * cfg.tol / cfg.step)))


__all__ = [
    "CASES", "DiffPair", "StabilityVerdict", "ScanConfig", "EquilibriumPoint", "EquilibriumSet",
    "DynamicsConfig", "BestResponsePath", "benefit_diff", "stability_verdict", "enumerate_equilibria",
    "enumerate_equilibria_units", "rho_dstar", "best_response_path", "diff_units",
]
