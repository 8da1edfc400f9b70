"""System optima: total commuting cost, total net benefit, benefit gain, Pigouvian search.

Units. Total cost TC is measured in 2*beta*N^2/s, so TC = sum_c n_c * c_c over
population shares n_c and morning cost shares c_c. Total net benefit is
TB = kappa*H*N^2 + g * kappa*N^3/s with

    g = sum_c n_c * fdef_c - k * rho * sum_c n_c * c_c,

where fdef are output deficits and k = 1 for the one-way ("table5-morning")
bookkeeping, k = 2 for daily costs. The daily kernel is therefore the
morning kernel at 2*rho, which is how both conventions share closed forms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import printed
from .errors import DomainError, FlexbottleError, SearchError
from .longrun import ScanConfig, _DiffField, _collect, _verdict
from .model import CASES, Model, ScheduleSplit, as_split, case_index
from .productivity import output_deficits
from .shortrun import check_tables, morning_cost_shares

CONVENTIONS = ("table5-morning", "daily")


def _rho_factor(convention):
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}, got {convention!r}")
    return 1.0 if convention == "table5-morning" else 2.0


def _shares(mu, v_H, v_I):
    return np.stack(np.broadcast_arrays(mu * v_H, mu * (1 - v_H), (1 - mu) * v_I, (1 - mu) * (1 - v_I)), axis=-1)


# ---------------------------------------------------------------------------
# total commuting cost


def tc_units(mu, theta, v_H, v_I, tables="corrected"):
    """Total commuting cost by summation, in 2*beta*N^2/s (vectorised)."""
    return np.sum(_shares(mu, v_H, v_I) * morning_cost_shares(mu, theta, v_H, v_I, tables), axis=-1)


def case_total_cost(case, mu, th, vH, vI, tables="corrected"):
    """Per-case closed form of total commuting cost (2*beta*N^2/s)."""
    check_tables(tables)
    eps = -1 + mu * vH + (1 - mu) * vI
    if case == "A":
        return 1 - mu + 2 * mu**2 + eps * th
    if case == "B":
        return 1 - mu + 2 * mu**2 - th * (1 - mu * vH) + (1 - mu) ** 2 * vI**2
    if case == "C":
        return mu + mu**2 - mu * th * (1 - vH) + (1 - mu) ** 2 * vI**2
    if case == "D":
        if tables == "printed":
            return printed.total_cost_D(mu, th, vH, vI)
        return mu**2 * vH**2 + mu * (1 - mu) * vH + mu * (1 + mu - th) + (1 - mu) ** 2 * vI**2
    raise KeyError(case)


def case_total_cost_partials(case, mu, th, vH, vI, tables="corrected"):
    """(dTC/dv_H, dTC/dv_I, dTC/dtheta) per case, 2*beta*N^2/s per unit."""
    check_tables(tables)
    eps = -1 + mu * vH + (1 - mu) * vI
    if case == "A":
        return mu * th, th * (1 - mu), eps
    if case == "B":
        return mu * th, 2 * (1 - mu) ** 2 * vI, -(1 - mu * vH)
    if case == "C":
        return mu * th, 2 * (1 - mu) ** 2 * vI, -mu * (1 - vH)
    if case == "D":
        if tables == "printed":
            return printed.total_cost_D_partials(mu, th, vH, vI)
        return mu * (1 - mu) + 2 * mu**2 * vH, 2 * (1 - mu) ** 2 * vI, -mu
    raise KeyError(case)


def total_cost(model: Model, split, tables="corrected") -> float:
    """Sum over classes of head-count times daily cost (money/day)."""
    split = as_split(split)
    u = tc_units(model.mu, model.theta, split.v_H, split.v_I, tables)
    return float(u) * 2 * model.beta * model.N**2 / model.s


@dataclass(frozen=True)
class TCOptimum:
    theta: float
    v_H: float
    v_I: float
    TC: float  # money/day
    TC_units: float  # 2*beta*N^2/s
    case: str
    grid_argmin: tuple | None = None
    grid_agrees: bool | None = None

    def as_dict(self) -> dict:
        return {
            "argmin": {"theta": self.theta, "v_H": self.v_H, "v_I": self.v_I},
            "TC": self.TC, "TC_units": self.TC_units, "case": self.case,
            "grid_argmin": None if self.grid_argmin is None else dict(zip(("theta", "v_H", "v_I"), self.grid_argmin)),
            "grid_agrees": self.grid_agrees,
        }


def tc_stationary_v_H(mu, theta, tables="corrected"):
    """Zero of dTC/dv_H in case D, or nan when mu = 0."""
    if mu <= 0:
        return math.nan
    if tables == "printed":
        return (-2 + theta + 2 * mu) / (4 * mu)
    return -(1 - mu) / (2 * mu)


def minimize_total_cost(model: Model, tables="corrected", grid=(201, 201, 21), check_grid=True) -> TCOptimum:
    """Global minimum of TC over theta, v_H, v_I at the model's mu.

    TC never increases in theta and never decreases in v_I, so theta = 1 and
    v_I = 0; v_H is then chosen among 0, 1, the case-D stationary point and
    the C/D boundary.
    """
    mu = model.mu
    th = 1.0
    cands = [0.0, 1.0]
    if mu > 0:
        cands.append(min(1.0, max(0.0, (th + mu - 1) / mu)))
        vs = tc_stationary_v_H(mu, th, tables)
        if 0.0 < vs < 1.0:
            cands.append(vs)
    vals = [float(tc_units(mu, th, v, 0.0, tables)) for v in cands]
    j = int(np.argmin(vals))
    v_H, best = cands[j], vals[j]
    case = CASES[int(case_index(mu, th, v_H, 0.0))]
    scale = 2 * model.beta * model.N**2 / model.s
    g_arg, agrees = None, None
    if check_grid:
        nv, ni, nt = grid
        VH = np.linspace(0, 1, nv)[None, :, None]
        VI = np.linspace(0, 1, ni)[None, None, :]
        TH = np.linspace(0, 1, nt)[:, None, None]
        TH = np.where(TH == 0, 1e-12, TH)
        G = tc_units(mu, TH, VH, VI, tables)
        k = np.unravel_index(np.argmin(G), G.shape)
        g_arg = (float(TH[k[0], 0, 0]), float(VH[0, k[1], 0]), float(VI[0, 0, k[2]]))
        steps = (1 / (nt - 1), 1 / (nv - 1), 1 / (ni - 1))
        close = all(abs(a - b) <= s + 1e-12 for a, b, s in zip((th, v_H, 0.0), g_arg, steps))
        agrees = bool(close and best <= float(G[k]) + 1e-12)
    return TCOptimum(th, v_H, 0.0, best * scale, best, case, g_arg, agrees)


# ---------------------------------------------------------------------------
# total net benefit


def g_units(mu, theta, rho, v_H, v_I, convention="table5-morning", tables="corrected"):
    """TB kernel by composition: (TB - kappa*H*N^2) / (kappa*N^3/s), vectorised."""
    k = _rho_factor(convention)
    fr, ff, _, _ = output_deficits(mu, theta, v_H, v_I, tables)
    n = _shares(mu, v_H, v_I)
    out = (n[..., 0] + n[..., 2]) * fr + (n[..., 1] + n[..., 3]) * ff
    return out - k * rho * tc_units(mu, theta, v_H, v_I, tables)


def total_benefit(model: Model, split, convention="table5-morning", tables="corrected") -> float:
    split = as_split(split)
    g = g_units(model.mu, model.theta, model.rho, split.v_H, split.v_I, convention, tables)
    return model.kappa * model.H * model.N**2 + float(g) * model.kappa * model.N**3 / model.s


def _g_D_exact(mu, th, vH, vI, rho):
    return (
        4 * mu**3 * vH**3 / 3 - 4 * mu**3 * vH**2 + 2 * mu**3 * vH * vI**2 + 2 * mu**3 * vH
        - 4 * mu**3 * vI**3 / 3 - mu**2 * rho * vH**2 + mu**2 * rho * vH - mu**2 * rho * vI**2
        - mu**2 * rho + 3 * mu**2 * vH**2 - 4 * mu**2 * vH * vI**2 - 2 * mu**2 * vH
        + 4 * mu**2 * vI**3 - mu**2 * vI**2 + mu * rho * th - mu * rho * vH
        + 2 * mu * rho * vI**2 - mu * rho + 2 * mu * vH * vI**2 - 4 * mu * vI**3
        + 2 * mu * vI**2 - rho * vI**2 + 2 * th**3 / 3 - th**2 + 4 * vI**3 / 3 - vI**2
    )


def case_benefit_kernel(case, mu, th, vH, vI, rho, tables="corrected"):
    """Per-case closed form of the (morning) TB kernel g."""
    check_tables(tables)
    base = (1 - mu + 2 * mu**2) * rho
    if case == "A":
        return th * (mu * (vH - vI) + vI - 1) * (2 * mu * (vH - vI) + 2 * vI - rho) - base
    if case == "B":
        return (
            2 * th**3 / 3 + th**2 * (2 * mu * vH - 1) + 4 / 3 * (1 - mu) ** 3 * vI**3
            + (1 - mu) ** 2 * vI**2 * (2 * mu * vH - rho - 1)
            - th * (1 - mu * vH) * (2 * mu * vH - rho) - base
        )
    if case == "C":
        g = printed.g_C(mu, th, vH, vI, rho)
        if tables == "corrected":
            # the published rho-term carries -theta*v_I where -theta*v_H belongs
            g = g + mu * rho * th * (vI - vH)
        return g
    if case == "D":
        if tables == "printed":
            return printed.g_D(mu, th, vH, vI, rho)
        return _g_D_exact(mu, th, vH, vI, rho)
    raise KeyError(case)


def g_closed(mu, theta, rho, v_H, v_I, convention="table5-morning", tables="corrected"):
    """Vectorised closed-form kernel, dispatched by case."""
    r = _rho_factor(convention) * np.asarray(rho, float)
    mu, theta, r, v_H, v_I = np.broadcast_arrays(*(np.asarray(x, float) for x in (mu, theta, r, v_H, v_I)))
    k = case_index(mu, theta, v_H, v_I)
    out = np.empty(k.shape)
    for i, c in enumerate(CASES):
        sel = k == i
        if np.any(sel):
            out[sel] = case_benefit_kernel(c, mu[sel], theta[sel], v_H[sel], v_I[sel], r[sel], tables)
    return out


@dataclass(frozen=True)
class TBOptimum:
    v_H: float
    v_I: float
    TB: float
    g: float
    provenance: str  # corner | boundary-critical | interior
    convention: str
    tables: str
    second_order: dict = field(default_factory=dict)
    grid_argmax: tuple | None = None
    candidates: tuple = ()

    def as_dict(self) -> dict:
        return {
            "argmax": {"v_H": self.v_H, "v_I": self.v_I},
            "TB": self.TB, "g": self.g, "provenance": self.provenance,
            "convention": self.convention, "tables": self.tables,
            "second_order": dict(sorted(self.second_order.items())),
            "grid_argmax": None if self.grid_argmax is None else {"v_H": self.grid_argmax[0], "v_I": self.grid_argmax[1]},
            "candidates": [{"v_H": a, "v_I": b, "g": g, "kind": k} for a, b, g, k in self.candidates],
        }


def interior_candidate(mu, theta, rho, tables="corrected"):
    """Interior household share on v_I = 0 where dg/dv_H vanishes (case D), or None.

    ``rho`` is the rho of the morning-convention kernel. The published
    formula is written for daily costs, so it is evaluated at rho/2.
    """
    if tables == "printed":
        if not printed.interior_applies(mu, theta, rho / 2):
            return None
        v = printed.interior_v_H(mu, theta, rho / 2)
    else:
        if mu <= 0 or theta + mu <= 1:
            return None
        rad = 8 * mu**2 + 4 * mu * rho - 16 * mu + rho**2 - 2 * rho + 9
        if rad < 0:
            return None
        v = (4 * mu + rho - 3 - math.sqrt(rad)) / (4 * mu)
    if math.isnan(v) or not 1e-12 < v < 1.0 - 1e-12:
        return None
    if theta + mu > 1 and v >= (theta + mu - 1) / mu:
        return None
    return v


def _candidates(mu, theta, rho, tables):
    c = [(0.0, 0.0, "corner"), (1.0, 1.0, "corner"), (1.0, 0.0, "corner"), (0.0, 1.0, "corner")]
    if theta + mu < 1:
        b = min(1.0, theta / (1 - mu))
        c += [(0.0, b, "boundary-critical"), (1.0, b, "boundary-critical")]
    elif mu > 0:
        b = min(1.0, (theta + mu - 1) / mu)
        c += [(b, 0.0, "boundary-critical"), (b, 1.0, "boundary-critical")]
    v = interior_candidate(mu, theta, rho, tables)
    if v is not None:
        c.append((v, 0.0, "interior"))
    return c


def _hessian(fn, x, y, h=1e-4):
    fxx = (fn(x + h, y) - 2 * fn(x, y) + fn(x - h, y)) / h**2
    fyy = (fn(x, y + h) - 2 * fn(x, y) + fn(x, y - h)) / h**2
    fxy = (fn(x + h, y + h) - fn(x + h, y - h) - fn(x - h, y + h) + fn(x - h, y - h)) / (4 * h**2)
    return fxx, fyy, fxy


def maximize_total_benefit(model: Model, convention="table5-morning", tables="corrected", grid=201, check_grid=True) -> TBOptimum:
    """Analytic argmax of TB over the candidate set, cross-checked on a grid.

    Raises SearchError("CANDIDATE_GRID_MISMATCH") when the grid finds a
    strictly better point more than one cell away from the analytic argmax.
    """
    mu, th = model.mu, model.theta
    r = _rho_factor(convention) * model.rho  # daily kernel = morning kernel at 2*rho

    def g(vh, vi):
        return g_closed(mu, th, r, vh, vi, "table5-morning", tables)

    cands = []
    for vh, vi, kind in _candidates(mu, th, r, tables):
        cands.append((float(vh), float(vi), float(g(vh, vi)), kind))
    # candidates tied to rounding count as equal; the earliest listed wins
    top = max(c[2] for c in cands)
    best = next(c for c in cands if c[2] >= top - 1e-12 * max(1.0, abs(top)))
    v_H, v_I, gbest, kind = best
    # an empty group's share carries no meaning; mirror the present group's
    if mu == 0.0:
        v_H = v_I
    elif mu == 1.0:
        v_I = v_H
    second = {}
    if kind != "corner":
        # second-order test inside the case the point belongs to, on the free direction(s)
        k0 = int(case_index(mu, th, v_H, v_I))
        fn = lambda a, b: float(case_benefit_kernel(CASES[k0], mu, th, a, b, r, tables))
        fxx, fyy, fxy = _hessian(fn, v_H, v_I)
        second = {"g_vHvH": fxx, "g_vIvI": fyy, "g_vHvI": fxy,
                  "concave_along_v_H": bool(fxx < 0), "hessian_det": fxx * fyy - fxy**2}
    g_arg = None
    if check_grid:
        xs = np.linspace(0, 1, grid)
        VH, VI = np.meshgrid(xs, xs, indexing="ij")
        G = g(VH, VI)
        k = np.unravel_index(np.argmax(G), G.shape)
        g_arg = (float(xs[k[0]]), float(xs[k[1]]))
        cell = 1 / (grid - 1)
        tol = 1e-9 * max(1.0, abs(gbest))
        far = max(abs(g_arg[0] - v_H), abs(g_arg[1] - v_I)) > cell + 1e-12
        if G[k] > gbest + tol or (far and G[k] >= gbest - tol and not _tied(g, g_arg, (v_H, v_I), tol)):
            raise SearchError(
                "CANDIDATE_GRID_MISMATCH",
                f"grid argmax {g_arg} (g={G[k]:.12g}) vs analytic {(v_H, v_I)} (g={gbest:.12g})",
            )
    TB = model.kappa * model.H * model.N**2 + gbest * model.kappa * model.N**3 / model.s
    return TBOptimum(v_H, v_I, TB, gbest, kind, convention, tables, second, g_arg, tuple(cands))


def _tied(g, a, b, tol):
    """Distinct points with equal kernel value are both optimal; accept either."""
    return abs(float(g(*a)) - float(g(*b))) <= tol


def benefit_gain_threshold(theta):
    return theta / 2 - theta**2 / 3


def benefit_gain(model: Model) -> float:
    """Relative TB improvement of the optimum over the all-rigid benchmark.

    Closed form valid for theta <= 1 - mu and 0 < rho <= 1/2 (the upper end is
    included so the maximal value 2/3 can be attained).
    """
    mu, th, rho = model.mu, model.theta, model.rho
    if th > 1 - mu + 1e-12 or not 0 < rho <= 0.5:
        raise DomainError("DOMAIN", f"needs theta <= 1 - mu and rho in (0, 0.5]; got mu={mu}, theta={th}, rho={rho}")
    if rho < benefit_gain_threshold(th):
        return 0.0
    return ((2 * th - 3) * th + 6 * rho) * th / (6 * (2 * mu**2 - mu + 1) * rho)


def benefit_gain_measured(model: Model, convention="daily", tables="corrected") -> float:
    """Same ratio, measured: (TB at the optimum - TB(1,1)) / |TB(1,1) - kappa*H*N^2|."""
    opt = maximize_total_benefit(model, convention, tables)
    g11 = float(g_units(model.mu, model.theta, model.rho, 1.0, 1.0, convention, tables))
    return (opt.g - g11) / abs(g11)


# ---------------------------------------------------------------------------
# Pigouvian instruments


@dataclass(frozen=True)
class SigmaRegion:
    target: tuple[float, float]
    sigma_H: tuple  # (low, high) money/day; None marks an unbounded end
    sigma_I: tuple
    unique: bool
    mode: str  # equal | independent
    intervals: tuple = ()  # admissible intervals of the scanned slice
    box: tuple = ()
    tolerance: float = 1.0

    def as_dict(self) -> dict:
        return {
            "target": {"v_H": self.target[0], "v_I": self.target[1]},
            "sigma_H": list(self.sigma_H), "sigma_I": list(self.sigma_I),
            "unique": self.unique, "mode": self.mode,
            "intervals": [list(iv) for iv in self.intervals],
            "box": list(self.box), "tolerance": self.tolerance,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2)


def _admissible(model, target, sigma, tables, scan):
    u = model.output_unit
    f = _DiffField(model.mu, model.theta, model.rho, tables, (sigma[0] / u, sigma[1] / u))
    if not _verdict(f, *target).stable:
        return False
    eq = _collect(f, scan, None)
    return all(abs(a - target[0]) <= scan.dedupe and abs(b - target[1]) <= scan.dedupe for a, b in eq.splits)


def _bisect(pred, good, bad, tol):
    while abs(good - bad) > tol:
        mid = 0.5 * (good + bad)
        if pred(mid):
            good = mid
        else:
            bad = mid
    return float(0.5 * (good + bad))


def _slice_intervals(pred, lo, hi, n, tol):
    xs = np.linspace(lo, hi, n)
    ok = [pred(x) for x in xs]
    out = []
    i = 0
    while i < n:
        if not ok[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and ok[j + 1]:
            j += 1
        left = None if i == 0 else _bisect(pred, xs[i], xs[i - 1], tol)
        right = None if j == n - 1 else _bisect(pred, xs[j], xs[j + 1], tol)
        out.append((left, right))
        i = j + 1
    return out


def pigouvian_region(
    model: Model,
    target,
    box=None,
    mode="equal",
    tables="corrected",
    scan_cfg: ScanConfig | None = None,
    coarse=81,
    tol=1.0,
) -> SigmaRegion:
    """Instruments sigma (money/day, added to D_J) that make ``target`` the
    unique stable split. Ends that reach the search box are reported as None
    (unbounded within the box).
    """
    target = as_split(target).as_tuple()
    scan = scan_cfg or ScanConfig(grid=51)
    if box is None:
        b = 5 * model.output_unit
        box = (-b, b)
    lo, hi = box
    if mode not in ("equal", "independent"):
        raise ValueError("mode must be 'equal' or 'independent'")

    def eq_pred(x):
        return _admissible(model, target, (x, x), tables, scan)

    intervals = _slice_intervals(eq_pred, lo, hi, coarse, tol)
    if not intervals:
        raise SearchError("INFEASIBLE", f"no sigma in [{lo}, {hi}] makes {target} the unique stable split")

    def nearest_zero(iv):
        a = lo if iv[0] is None else iv[0]
        b = hi if iv[1] is None else iv[1]
        return 0.0 if a <= 0 <= b else min((abs(a), a), (abs(b), b))[1]

    iv = min(intervals, key=lambda iv: abs(nearest_zero(iv)))
    if mode == "equal":
        return SigmaRegion(target, iv, iv, True, mode, tuple(intervals), (lo, hi), tol)

    # independent: vary one group's sigma around an admissible equal anchor
    a = lo if iv[0] is None else iv[0]
    b = hi if iv[1] is None else iv[1]
    anchor = 0.5 * (a + b) if iv[0] is not None and iv[1] is not None else nearest_zero(iv) + (-tol if iv[1] is not None else tol)
    if not eq_pred(anchor):
        anchor = 0.5 * (a + b)
    bounds = []
    for j in range(2):
        def pred(x, j=j):
            s = [anchor, anchor]
            s[j] = x
            return _admissible(model, target, tuple(s), tables, scan)

        ivs = [v for v in _slice_intervals(pred, lo, hi, coarse, tol)
               if (v[0] is None or v[0] <= anchor + tol) and (v[1] is None or v[1] >= anchor - tol)]
        bounds.append(ivs[0] if ivs else (anchor, anchor))
    return SigmaRegion(target, bounds[0], bounds[1], True, mode, tuple(intervals), (lo, hi), tol)


__all__ = [
    "CONVENTIONS", "TCOptimum", "TBOptimum", "SigmaRegion", "tc_units", "case_total_cost", "case_total_cost_partials",
    "total_cost", "minimize_total_cost", "g_units", "g_closed", "case_benefit_kernel", "total_benefit",
    "maximize_total_benefit", "benefit_gain", "benefit_gain_measured", "benefit_gain_threshold",
    "pigouvian_region", "interior_candidate", "FlexbottleError",
]
