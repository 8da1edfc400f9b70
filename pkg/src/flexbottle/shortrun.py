"""Closed-form short-run equilibrium: arrival rates, commuting costs, pattern.

All closed forms come in two flavours selected by ``tables``:

``"corrected"`` (default)
    The forms certified by the numerical oracle. They differ from the
    printed tables only in case D, where the rigid household cost is
    ``(2 - theta + mu*v_H)`` per morning rather than ``(3 - mu - 2*theta + 2*mu*v_H)``.
``"printed"``
    The forms exactly as published, kept for negative controls and for
    reproducing downstream claims that were derived from them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .model import CASES, Model, as_split, case_index

TABLES = ("corrected", "printed")

# class order used everywhere: household rigid/flex, individual rigid/flex
CLASSES = ("H_r", "H_f", "I_r", "I_f")


def check_tables(tables: str) -> str:
    if tables not in TABLES:
        raise ValueError(f"tables must be one of {TABLES}, got {tables!r}")
    return tables


@dataclass(frozen=True)
class RateSet:
    r_rigid: float
    r_flex_early: float
    r_H_flex_peak: float
    r_I_flex_peak: float


@dataclass(frozen=True)
class CostQuad:
    """Daily commuting cost per person for each class (money)."""

    P_H_r: float
    P_H_f: float
    P_I_r: float
    P_I_f: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.P_H_r, self.P_H_f, self.P_I_r, self.P_I_f)

    @property
    def morning(self) -> tuple[float, float, float, float]:
        return tuple(0.5 * p for p in self.as_tuple())


def arrival_rates(model: Model) -> RateSet:
    a, b, s = model.alpha, model.beta, model.s
    r = a * s / (a - b)
    return RateSet(r_rigid=r, r_flex_early=r, r_H_flex_peak=2 * a * s / (2 * a - b), r_I_flex_peak=s)


def morning_cost_shares(mu, theta, v_H, v_I, tables="corrected"):
    """Morning costs in units of beta*N/s, stacked on the last axis (H_r, H_f, I_r, I_f)."""
    check_tables(tables)
    mu, theta, v_H, v_I = np.broadcast_arrays(*(np.asarray(x, float) for x in (mu, theta, v_H, v_I)))
    k = case_index(mu, theta, v_H, v_I)
    h_r = np.where(k < 3, 1 + mu, 2 - theta + mu * v_H)
    if tables == "printed":
        h_r = np.where(k < 3, 1 + mu, 3 - mu - 2 * theta + 2 * mu * v_H)
    h_f = 1 + mu - theta
    i_r = np.select([k == 0, k == 1], [1 - mu, (1 - mu) * (1 + v_I) - theta], (1 - mu) * v_I)
    i_f = np.where(k < 2, 1 - mu - theta, 0.0)
    return np.stack(np.broadcast_arrays(h_r, h_f, i_r, i_f), axis=-1)


def closed_form_costs(model: Model, split, tables: str = "corrected") -> CostQuad:
    split = as_split(split)
    m = morning_cost_shares(model.mu, model.theta, split.v_H, split.v_I, tables)
    return CostQuad(*(float(2 * x * model.cost_unit) for x in m))


# ---------------------------------------------------------------------------
# canonical commute pattern


@dataclass(frozen=True)
class ExitSegment:
    """Commuters of one class leaving the bottleneck on [a0, a1] at rate s.

    ``w0``/``w1`` are the queueing delays of the first and last of them.
    """

    cls: str
    a0: float
    a1: float
    w0: float
    w1: float

    def w(self, a: float) -> float:
        if self.a1 == self.a0:
            return self.w0
        return self.w0 + (self.w1 - self.w0) * (a - self.a0) / (self.a1 - self.a0)


@dataclass(frozen=True)
class CommutePattern:
    case: str
    t0: float
    s: float
    t_s: float
    Delta: float
    exit_segments: tuple[ExitSegment, ...]
    outflow: tuple[tuple[float, float, float], ...]
    departure_windows: dict
    queue: tuple[tuple[float, float], ...]
    start_atoms: tuple[tuple[float, float], ...]  # (flex atom at -Delta), (rigid atom at 0)
    start_segments: tuple[tuple[float, float, float], ...]

    @property
    def total_mass(self) -> float:
        return sum(m for _, m in self.start_atoms) + sum((r - l) * q for l, r, q in self.start_segments)

    def to_json(self) -> str:
        return json.dumps(pattern_dict(self), sort_keys=True, indent=2)


def pattern_dict(p: CommutePattern) -> dict:
    return {
        "case": p.case,
        "t0": p.t0,
        "t_s": p.t_s,
        "flex_window_start": -p.Delta,
        "outflow": [{"start": a, "end": b, "rate": r} for a, b, r in p.outflow],
        "exit_segments": [
            {"class": e.cls, "exit_start": e.a0, "exit_end": e.a1, "wait_start": e.w0, "wait_end": e.w1}
            for e in p.exit_segments
        ],
        "departure_windows": {k: list(v) for k, v in sorted(p.departure_windows.items())},
        "queue": {"time": [t for t, _ in p.queue], "length": [q for _, q in p.queue]},
        "work_start": {
            "atoms": [{"time": t, "mass": m} for t, m in p.start_atoms],
            "segments": [{"start": a, "end": b, "rate": r} for a, b, r in p.start_segments],
        },
    }


def build_pattern(model: Model, split) -> CommutePattern:
    """One equilibrium commute pattern in exit-time coordinates.

    Within a group the order of early flex and rigid commuters is not pinned
    down by equilibrium; flex commuters are placed first. The individuals'
    queue restarts from zero at the school bell.
    """
    split = as_split(split)
    N, s, mu, th = model.N, model.s, model.mu, model.theta
    case = CASES[int(case_index(mu, th, split.v_H, split.v_I))]
    T = N / s
    b = model.beta / model.alpha
    Delta = th * T
    t_s = model.t_s
    nHr, nHf = split.v_H * mu * N, (1 - split.v_H) * mu * N
    nIr, nIf = split.v_I * (1 - mu) * N, (1 - split.v_I) * (1 - mu) * N

    segs: list[ExitSegment] = []

    def run(cls, a, w, mass, slope):
        mass = max(mass, 0.0)
        end = a + mass / s
        if mass > 0:
            segs.append(ExitSegment(cls, a, end, w, w + slope * (end - a)))
        return end, w + slope * (end - a)

    # households
    a, w = -T, 0.0
    if case == "D":
        early = (1 - th) * N
        a, w = run("H_f", a, w, early, b)
        a, w = run("H_f", a, w, nHf - early, b / 2)
    else:
        a, w = run("H_f", a, w, nHf, b)
    a, w = run("H_r", a, w, nHr, b)
    # individuals, queue restarts at the bell
    a, w = t_s, 0.0
    if case == "A":
        a, w = run("I_f", a, w, nIf, b)
    elif case == "B":
        early = (1 - mu - th) * N
        a, w = run("I_f", a, w, early, b)
        a, w = run("I_f", a, w, nIf - early, 0.0)
    else:
        a, w = run("I_f", a, w, nIf, 0.0)
    a, w = run("I_r", a, w, nIr, b)

    windows = {}
    for e in segs:
        d0, d1 = e.a0 - e.w0, e.a1 - e.w1
        if e.cls in windows:
            windows[e.cls] = (min(windows[e.cls][0], d0), max(windows[e.cls][1], d1))
        else:
            windows[e.cls] = (d0, d1)

    # queue length against clock time: a commuter leaving at a departed at a - w
    pts = [(-T, 0.0)]
    for e in segs:
        pts.append((e.a0 - e.w0, s * e.w0))
        pts.append((e.a1 - e.w1, s * e.w1))
    last = segs[-1]
    pts.append((last.a1, 0.0))
    pts.sort(key=lambda p: p[0])
    queue = []
    for t, q in pts:
        if queue and abs(queue[-1][0] - t) < 1e-12 and abs(queue[-1][1] - q) < 1e-9:
            continue
        queue.append((t, q))

    # work starts: flex commuters start at max(exit, -Delta), rigid at 0
    atom = 0.0
    flex_segments = []
    for e in segs:
        if e.cls.endswith("_f"):
            lo, hi = e.a0, e.a1
            if hi <= -Delta + 1e-12 * T:
                atom += (hi - lo) * s
            else:
                if lo < -Delta:
                    atom += (-Delta - lo) * s
                    lo = -Delta
                flex_segments.append((lo, hi, s))
    n_r = nHr + nIr
    atoms = ((-Delta, atom), (0.0, n_r))
    return CommutePattern(
        case=case, t0=-T, s=s, t_s=t_s, Delta=Delta,
        exit_segments=tuple(segs),
        outflow=((-T, 0.0, s),),
        departure_windows=windows,
        queue=tuple(queue),
        start_atoms=atoms,
        start_segments=tuple(flex_segments),
    )


def class_cost(model: Model, cls: str, a, w):
    """Morning generalized cost of leaving the bottleneck at ``a`` after waiting ``w``."""
    al, be, Delta, t_s = model.alpha, model.beta, model.Delta, model.t_s
    a = np.asarray(a, float)
    w = np.asarray(w, float)
    if cls == "H_r":
        return 2 * al * w + be * (t_s - a) + be * (0 - a)
    if cls == "H_f":
        return 2 * al * w + be * (t_s - a) + be * np.maximum(0.0, -Delta - a)
    if cls == "I_r":
        return al * w + be * (0 - a)
    if cls == "I_f":
        return al * w + be * np.maximum(0.0, -Delta - a)
    raise KeyError(cls)


def _probe_points(pattern: CommutePattern, model: Model, group: str):
    """Exit times and delays at every kink a commuter of ``group`` can reach.

    Households must clear the bottleneck by the school bell and only see the
    household cluster's delays there; individuals may use either cluster.
    """
    pts = [(pattern.t0, 0.0)]
    if group == "I":
        pts.append((pattern.t_s, 0.0))
    for e in pattern.exit_segments:
        if group == "H" and not e.cls.startswith("H"):
            continue
        pts.append((e.a0, e.w0))
        pts.append((e.a1, e.w1))
        if e.a0 < -model.Delta < e.a1:
            pts.append((-model.Delta, e.w(-model.Delta)))
    return pts


def best_exit(pattern: CommutePattern, model: Model, cls: str) -> tuple[float, float, float]:
    """Cheapest (cost, exit time, delay) for a commuter of ``cls`` facing ``pattern``.

    Costs are piecewise linear in exit time so the minimum sits at a kink.
    Ties go to the latest exit time.
    """
    limit = pattern.t_s if cls.startswith("H") else 0.0
    tol = 1e-9 * model.cost_unit
    best = None
    for a, w in _probe_points(pattern, model, cls[0]):
        if a > limit + 1e-9 * pattern.s:
            continue
        c = float(class_cost(model, cls, a, w))
        if best is None or c < best[0] - tol or (abs(c - best[0]) <= tol and a > best[1]):
            best = (c, a, w)
    return best


def pattern_costs(pattern: CommutePattern, model: Model) -> CostQuad:
    """Daily costs read off the pattern (cheapest admissible exit per class)."""
    return CostQuad(*(2 * best_exit(pattern, model, c)[0] for c in CLASSES))
