"""Independent numerical within-day equilibrium.

The bottleneck serves at most ``s*delta`` commuters per exit slot of width
``delta``. A departure-time user equilibrium is then the optimal solution of
a transportation problem: assign every class's mass to exit slots at least
schedule cost, with one capacity constraint per slot. The capacity duals are
the queueing costs ``alpha*w`` of each slot (Vickrey's shadow-price reading
of the queue), and complementary slackness is exactly the isocost condition.
Households pay the queue on both legs of their trip, so their schedule cost
enters the problem halved.

Queue prices are not unique where the bottleneck restarts at the school bell;
among all optimal duals we take the componentwise smallest, which restarts the individuals' queue from zero.

The solution is then replayed through the FIFO queue recursion with the
implied departure times, and per-class cost spread over used departures is
reported as the residual.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
from scipy.optimize import linprog

from .errors import ConvergenceError
from .model import Model, ScheduleSplit, as_split, classify_case
from .productivity import OutputPair, output_pair
from .shortrun import CLASSES, CostQuad, closed_form_costs

FLEX = (False, True, False, True)
HOUSEHOLD = (True, True, False, False)


@dataclass(frozen=True)
class GridConfig:
    K: int = 4000
    horizon: float = 3.0  # slots start at t_s - horizon*N/s
    tol: float = 1e-2  # max in-class cost spread of the replay, in beta*N/s

    def __post_init__(self):
        if self.K < 500:
            raise ValueError("K must be at least 500")


@dataclass(frozen=True)
class NumericEquilibrium:
    model: Model
    split: ScheduleSplit
    delta: float
    exit_edges: np.ndarray  # (n+1,)
    exit_mass: np.ndarray  # (4, n) commuters per exit slot and class
    wait: np.ndarray  # (n,) queueing delay of each exit slot (minutes)
    departure_edges: np.ndarray
    departure_mass: np.ndarray  # (4, n) commuters per departure slot and class
    queue: np.ndarray  # queue length (vehicles) at departure_edges
    morning_cost: np.ndarray  # (4,) equilibrium morning cost per class
    best_slot: np.ndarray  # (4,) index of the cheapest exit slot per class
    residual: float
    field_notes: dict = field(default_factory=dict)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.exit_edges[:-1] + self.exit_edges[1:])


def _schedule_costs(model: Model, a: np.ndarray) -> np.ndarray:
    be, t_s, Dl = model.beta, model.t_s, model.Delta
    early_w = np.maximum(0.0, -a)
    early_f = np.maximum(0.0, -Dl - a)
    early_s = np.maximum(0.0, t_s - a)
    return np.stack([be * (early_s + early_w), be * (early_s + early_f), be * early_w, be * early_f])


def _allowed(model: Model, edges: np.ndarray) -> np.ndarray:
    tol = 1e-9 * model.N / model.s
    hi = edges[1:]
    h = hi <= model.t_s + tol
    i = hi <= tol
    return np.stack([h, h, i, i])


def _grid(model: Model, cfg: GridConfig):
    T = model.N / model.s
    delta = T / cfg.K
    lo = model.t_s - cfg.horizon * T
    n = int(np.ceil(-lo / delta - 1e-9))
    edges = -delta * np.arange(n, -1, -1, dtype=float)
    return delta, edges


def solve_numeric_equilibrium(model: Model, split, grid_cfg: GridConfig | None = None) -> NumericEquilibrium:
    cfg = grid_cfg or GridConfig()
    split = as_split(split)
    delta, edges = _grid(model, cfg)
    n = edges.size - 1
    a = 0.5 * (edges[:-1] + edges[1:])
    sched = _schedule_costs(model, a)
    allowed = _allowed(model, edges)
    mu, N = model.mu, model.N
    sizes = np.array([split.v_H * mu, (1 - split.v_H) * mu, split.v_I * (1 - mu), (1 - split.v_I) * (1 - mu)]) * N

    # work in units of N (mass) and beta*N/s (cost) to keep the LP well scaled
    unit = model.cost_unit
    price = sched / unit
    price[:2] *= 0.5
    cap = model.s * delta / N
    active = [c for c in range(4) if sizes[c] > 1e-12 * N]
    cols = [np.flatnonzero(allowed[c]) for c in active]
    nv = sum(len(ix) for ix in cols)
    cost = np.concatenate([price[c, ix] for c, ix in zip(active, cols)])
    var_slot = np.concatenate(cols)
    var_cls = np.concatenate([np.full(len(ix), j) for j, ix in enumerate(cols)])
    A_ub = sps.csr_matrix((np.ones(nv), (var_slot, np.arange(nv))), shape=(n, nv))
    A_eq = sps.csr_matrix((np.ones(nv), (var_cls, np.arange(nv))), shape=(len(active), nv))
    b_eq = sizes[active] / N
    primal = linprog(cost, A_ub=A_ub, b_ub=np.full(n, cap), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs-ipm")
    if primal.status != 0:
        raise ConvergenceError("NO_CONVERGENCE", f"assignment LP failed: {primal.message}")

    x = np.zeros((4, n))
    for j, c in enumerate(active):
        x[c, cols[j]] = primal.x[var_cls == j]
    x[x < 1e-10 * cap] = 0.0
    pi = _minimal_prices(np.where(allowed, price, np.inf), x, active)

    wait = pi * unit / model.alpha
    mass = x * N

    # class costs: cheapest admissible slot, ties to the latest slot
    full = sched + np.array([2, 2, 1, 1])[:, None] * model.alpha * wait[None, :]
    full = np.where(allowed, full, np.inf)
    morning = full.min(axis=1)
    best = np.empty(4, dtype=int)
    for c in range(4):
        near = np.flatnonzero(full[c] <= morning[c] + 1e-9 * unit)
        best[c] = near[-1]

    dep_edges, dep_mass, queue, residual = _replay(model, edges, mass, wait, delta)
    ne = NumericEquilibrium(
        model=model, split=split, delta=delta, exit_edges=edges, exit_mass=mass, wait=wait,
        departure_edges=dep_edges, departure_mass=dep_mass, queue=queue,
        morning_cost=morning, best_slot=best, residual=residual,
        field_notes={"lp_objective": float(primal.fun), "slots": int(n)},
    )
    if residual > cfg.tol:
        raise ConvergenceError(
            "NO_CONVERGENCE", f"replayed cost spread {residual:.3g} exceeds tolerance {cfg.tol:.3g}"
        )
    return ne


def _minimal_prices(price, x, active):
    """Componentwise smallest optimal slot prices for the assignment ``x``.

    Complementary slackness pins pi_k = u_c - price[c, k] on used cells and
    pi_k >= 0, so the class potentials obey difference constraints
    u_c >= price[c, k] and u_c >= u_c' + price[c, k] - price[c', k] for every
    cell (c, k) in use (forbidden cells carry an infinite price). Their least solution (a longest-path fixpoint over at
    most four nodes) gives the least prices pi_k = max(0, max_c u_c - price[c, k]).
    """
    used = x > 0
    u = {c: float(price[c, used[c]].max()) for c in active}
    for _ in range(len(active) + 1):
        changed = False
        for c in active:
            for d in active:
                if d == c:
                    continue
                with np.errstate(invalid="ignore"):
                    gap = float(np.max(price[c, used[c]] - price[d, used[c]]))
                if u[d] + gap > u[c] + 1e-13:
                    u[c] = u[d] + gap
                    changed = True
        if not changed:
            break
    else:
        raise ConvergenceError("NO_CONVERGENCE", "price potentials did not settle")
    pi = np.zeros(price.shape[1])
    for c in active:
        pi = np.maximum(pi, u[c] - price[c])
    return pi


def _replay(model: Model, edges, mass, wait, delta):
    """Push the implied departures through the FIFO bottleneck.

    Each (class, slot) parcel departs at ``a - w``; parcels are served in
    departure order at rate s. Returns the departure histogram, the queue
    recursion on that grid, and the largest in-class spread of replayed costs
    (in units of beta*N/s).
    """
    s = model.s
    a = 0.5 * (edges[:-1] + edges[1:])
    cls, slot = np.nonzero(mass)
    m = mass[cls, slot]
    t_dep = a[slot] - wait[slot]
    order = np.lexsort((cls, t_dep))
    cls, slot, m, t_dep = cls[order], slot[order], m[order], t_dep[order]

    exit_end = np.empty_like(m)
    last = -np.inf
    for j in range(m.size):
        last = max(last, t_dep[j]) + m[j] / s
        exit_end[j] = last
    exit_mid = exit_end - 0.5 * m / s
    w_sim = exit_mid - t_dep

    sched = _schedule_costs(model, exit_mid)
    legs = np.where(np.isin(cls, (0, 1)), 2.0, 1.0)
    cost = sched[cls, np.arange(m.size)] + legs * model.alpha * w_sim
    residual = 0.0
    for c in range(4):
        sel = cls == c
        if np.any(sel):
            residual = max(residual, float(np.ptp(cost[sel])) / model.cost_unit)

    dep_edges = edges
    dep_mass = np.zeros_like(mass)
    idx = np.clip(np.searchsorted(dep_edges, t_dep, side="right") - 1, 0, dep_mass.shape[1] - 1)
    np.add.at(dep_mass, (cls, idx), m)
    inflow = dep_mass.sum(axis=0)
    net = np.concatenate([[0.0], np.cumsum(inflow - s * delta)])
    queue = net - np.minimum.accumulate(np.minimum(net, 0.0))
    return dep_edges, dep_mass, queue, residual


def numeric_cost_quad(ne: NumericEquilibrium) -> CostQuad:
    return CostQuad(*(2.0 * float(c) for c in ne.morning_cost))


def numeric_output_pair(ne: NumericEquilibrium, model: Model | None = None) -> OutputPair:
    """Outputs from the oracle's work-start distribution.

    Each slot's mass starts work at the slot centre (flex: no earlier than
    the flex window opens; rigid: at t_w). With every start inside a window
    shorter than H, a cohort starting at w produces
    kappa*(H*N - sum_j m_j*|w - tau_j|).
    """
    model = model or ne.model
    a = ne.centers
    Dl = model.Delta
    starts, weights, flex = [], [], []
    for c in range(4):
        sel = ne.exit_mass[c] > 0
        tau = np.maximum(a[sel], -Dl) if FLEX[c] else np.zeros(sel.sum())
        starts.append(tau)
        weights.append(ne.exit_mass[c, sel])
        flex.append(np.full(sel.sum(), FLEX[c]))
    tau = np.concatenate(starts)
    m = np.concatenate(weights)
    is_flex = np.concatenate(flex)
    order = np.argsort(tau, kind="stable")
    tau, m, is_flex = tau[order], m[order], is_flex[order]
    cm = np.concatenate([[0.0], np.cumsum(m)])
    cmt = np.concatenate([[0.0], np.cumsum(m * tau)])

    def F(w):
        w = np.atleast_1d(np.asarray(w, float))
        k = np.searchsorted(tau, w, side="right")
        below = w * cm[k] - cmt[k]
        above = (cmt[-1] - cmt[k]) - w * (cm[-1] - cm[k])
        return model.kappa * (model.H * model.N - below - above)

    F_r = float(F(0.0)[0])
    dev = {}
    for c, g in ((1, "H"), (3, "I")):
        dev[g] = float(F(max(a[ne.best_slot[c]], -Dl))[0])
    n_f = m[is_flex].sum()
    if n_f > 1e-9 * model.N:
        F_f = float(np.sum(m[is_flex] * F(tau[is_flex])) / n_f)
        F_f_H = F_f_I = F_f
    else:
        F_f, F_f_H, F_f_I = dev["H"], dev["H"], dev["I"]
    eps = -1 + model.mu * ne.split.v_H + (1 - model.mu) * ne.split.v_I
    return OutputPair(F_r=F_r, F_f=F_f, epsilon=eps, F_f_H=F_f_H, F_f_I=F_f_I)


# ---------------------------------------------------------------------------
# certification


@dataclass(frozen=True)
class Tolerances:
    cost: float = 0.01
    output: float = 0.005


@dataclass
class ValidationReport:
    model: dict
    split: tuple
    case: str
    tables: str
    closed_costs: tuple
    numeric_costs: tuple
    cost_deviation: tuple
    closed_outputs: tuple
    numeric_outputs: tuple
    output_deviation: tuple
    residual: float
    K: int
    tolerances: Tolerances
    flagged: list

    @property
    def ok(self) -> bool:
        return not self.flagged

    def as_dict(self) -> dict:
        return {
            "model": self.model,
            "split": list(self.split),
            "case": self.case,
            "tables": self.tables,
            "K": self.K,
            "residual": self.residual,
            "tolerances": {"cost": self.tolerances.cost, "output": self.tolerances.output},
            "costs": {
                k: {"closed_form": cf, "numeric": nu, "deviation": dv}
                for k, cf, nu, dv in zip(("P_H_r", "P_H_f", "P_I_r", "P_I_f"), self.closed_costs, self.numeric_costs, self.cost_deviation)
            },
            "outputs": {
                k: {"closed_form": cf, "numeric": nu, "deviation": dv}
                for k, cf, nu, dv in zip(("F_r", "F_f_H", "F_f_I"), self.closed_outputs, self.numeric_outputs, self.output_deviation)
            },
            "flagged": self.flagged,
            "ok": self.ok,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2)


def relative_deviation(numeric: float, closed: float, scale: float) -> float:
    """|numeric - closed| relative to |closed|, floored at ``scale`` so that
    zero-valued entries are judged against the natural unit."""
    return abs(numeric - closed) / max(abs(closed), scale)


def cross_validate(
    model: Model,
    split,
    tolerances: Tolerances | None = None,
    grid_cfg: GridConfig | None = None,
    tables: str = "corrected",
    ne: NumericEquilibrium | None = None,
) -> ValidationReport:
    tol = tolerances or Tolerances()
    cfg = grid_cfg or GridConfig()
    split = as_split(split)
    ne = ne or solve_numeric_equilibrium(model, split, cfg)
    cf = closed_form_costs(model, split, tables).as_tuple()
    nu = numeric_cost_quad(ne).as_tuple()
    # a group with no members has no equilibrium to certify; its entries are
    # reported but not compared (deviation None)
    absent = {"H": model.mu == 0.0, "I": model.mu == 1.0}
    cdev = tuple(
        None if absent[name[0]] else relative_deviation(x, y, 2 * model.cost_unit)
        for name, x, y in zip(CLASSES, nu, cf)
    )
    op = output_pair(model, split, tables)
    onu = numeric_output_pair(ne, model)
    cf_out = (op.F_r, op.F_f_H, op.F_f_I)
    nu_out = (onu.F_r, onu.F_f_H, onu.F_f_I)
    # outputs are judged relative to the full daily output kappa*H*N
    odev = tuple(
        None if absent.get(name[-1]) else relative_deviation(x, y, model.output_unit)
        for name, x, y in zip(("F_r", "F_f_H", "F_f_I"), nu_out, cf_out)
    )
    flagged = []
    for name, d in zip(CLASSES, cdev):
        if d is not None and d > tol.cost:
            flagged.append(f"cost {name}: deviation {d:.4g} > {tol.cost}")
    for name, d in zip(("F_r", "F_f_H", "F_f_I"), odev):
        if d is not None and d > tol.output:
            flagged.append(f"output {name}: deviation {d:.4g} > {tol.output}")
    return ValidationReport(
        model=model.as_dict(), split=split.as_tuple(), case=classify_case(model, split).case,
        tables=tables, closed_costs=cf, numeric_costs=nu, cost_deviation=cdev,
        closed_outputs=cf_out, numeric_outputs=nu_out, output_deviation=odev,
        residual=ne.residual, K=cfg.K, tolerances=tol, flagged=flagged,
    )
