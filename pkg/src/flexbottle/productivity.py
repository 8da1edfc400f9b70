"""Daily individual output with the identity shift factor f(x) = x.

A commuter who starts work at w and works H minutes produces
kappa * integral of (number on duty) over [w, w+H]. Because every start lies
inside a window shorter than H, this reduces to

    F(w) = kappa * (H*N - sum_j |w - tau_j|)

over all other commuters' start times tau_j, which is what the exact
integration below evaluates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import printed
from .errors import DomainError
from .model import CASES, Model, as_split, case_index
from .shortrun import CommutePattern, best_exit, check_tables

FLEX_EMPTY = 1e-12


@dataclass(frozen=True)
class OutputPair:
    """Daily outputs (money). ``F_f_H``/``F_f_I`` are what a household or an
    individual flex commuter earns; they coincide with ``F_f`` unless nobody
    is on flextime, where a lone deviator's start time depends on the group.
    """

    F_r: float
    F_f: float
    epsilon: float
    F_f_H: float
    F_f_I: float

    def F_f_for(self, group: str) -> float:
        return self.F_f_H if group == "H" else self.F_f_I


def _rigid_deficit(k, mu, th, x, y):
    return np.select(
        [k == 0, k == 1, k == 2],
        [
            th * (x + y - 1),
            th**2 / 2 + th * (y - 1) + x**2 / 2,
            -(mu**2) / 2 + mu + th * (y - mu) + x**2 / 2 - 0.5,
        ],
        th**2 / 2 - th + x**2 / 2 + y**2 / 2 + y - mu * y,
    )


def _flex_total(k, mu, th, x, y):
    """Sum of flex deficits weighted by population share (flex share times F^f)."""
    b = (
        2 * th**3 / 3 + th**2 * (-x / 2 + 3 * y / 2 - 1) + th * (-x * y + x + y**2 - y)
        + 5 * x**3 / 6 + 3 * x**2 * y / 2 - x**2
    )
    c = (
        4 * mu**3 / 3 + mu**2 * x / 2 - 3 * mu**2 * y / 2 - 3 * mu**2 - mu * x + 3 * mu * y + 2 * mu
        + th * (2 * mu**2 + mu * x - 3 * mu * y - 2 * mu - x * y + y**2 + 2 * y)
        + 5 * x**3 / 6 + 3 * x**2 * y / 2 - x**2 + x / 2 - 3 * y / 2 - 1 / 3
    )
    d = (
        2 * mu**2 * y + mu * x * y - 3 * mu * y**2 - 2 * mu * y
        + 2 * th**3 / 3 + th**2 * (-x / 2 - y / 2 - 1) + th * (x + y)
        + 5 * x**3 / 6 + 3 * x**2 * y / 2 - x**2 - x * y**2 / 2 - x * y + 5 * y**3 / 6 + 2 * y**2
    )
    return np.select([k == 0, k == 1, k == 2], [th * (x + y) * (x + y - 1), b, c], d)


def output_deficits(mu, theta, v_H, v_I, tables="corrected"):
    """Vectorised output deficits in units of kappa*N^2/s.

    Returns ``(F_r, F_f, F_f_H, F_f_I)`` deficits, each to be added to kappa*H*N.
    """
    check_tables(tables)
    mu, th, vH, vI = np.broadcast_arrays(*(np.asarray(v, float) for v in (mu, theta, v_H, v_I)))
    k = case_index(mu, th, vH, vI)
    x = (1 - mu) * vI
    y = mu * vH
    n = 1 - x - y
    empty = n <= FLEX_EMPTY
    safe_n = np.where(empty, 1.0, n)
    if tables == "corrected":
        fr = _rigid_deficit(k, mu, th, x, y)
        with np.errstate(divide="ignore", invalid="ignore"):
            ff = np.where(k == 0, -th * (x + y), _flex_total(k, mu, th, x, y) / safe_n)
    else:
        fr = np.empty_like(mu)
        ff = np.empty_like(mu)
        for i, case in enumerate(CASES):
            sel = k == i
            if np.any(sel):
                a, b = printed.output_deficits(case, mu[sel], th[sel], vH[sel], vI[sel])
                fr[sel] = a
                ff[sel] = b
    # nobody on flextime: a lone household deviator starts at -Delta; a lone
    # individual starts at -Delta in case A but at the school bell in case C
    dev_H = -th
    dev_I = np.where(k == 0, -th, -(1 - mu))
    ff_H = np.where(empty, dev_H, ff)
    ff_I = np.where(empty, dev_I, ff)
    ff = np.where(empty, dev_H, ff)
    return fr, ff, ff_H, ff_I


def output_pair(model: Model, split, tables: str = "corrected") -> OutputPair:
    split = as_split(split)
    fr, ff, fh, fi = output_deficits(model.mu, model.theta, split.v_H, split.v_I, tables)
    base = model.kappa * model.H * model.N
    u = model.output_unit
    eps = -1 + model.mu * split.v_H + (1 - model.mu) * split.v_I
    return OutputPair(
        F_r=float(base + u * fr),
        F_f=float(base + u * ff),
        epsilon=float(eps),
        F_f_H=float(base + u * fh),
        F_f_I=float(base + u * fi),
    )


def window_average_output(model: Model, t1: float, t2: float) -> float:
    """Average output of a continuous run of starts at rate s on [t1, t2]."""
    if not t1 < t2:
        raise DomainError("WINDOW_EMPTY", f"need t1 < t2, got {t1}, {t2}")
    L = t2 - t1
    return model.kappa * L * (3 * model.N + L * model.s) / 6


def window_average_output_finite(model: Model, t1: float, t2: float, n: int) -> float:
    """The same quantity built from n discrete cohorts; tends to the above as n grows."""
    L = t2 - t1
    return model.kappa * (1 + n) * L * (3 * n * model.N + (n - 1) * L * model.s) / (6 * n**2)


# ---------------------------------------------------------------------------
# exact integration over a commute pattern


def _seg_abs(w, l, r):
    """Integral over tau in [l, r] of |w - tau|."""
    return 0.5 * ((r - w) * abs(r - w) - (l - w) * abs(l - w))


def _cube(x):
    return abs(x) ** 3 / 6


def _seg_seg_abs(a, b, c, d):
    """Double integral of |x - y| over x in [a, b], y in [c, d]."""
    return -(_cube(b - d) - _cube(a - d) - _cube(b - c) + _cube(a - c))


def _start_distribution(pattern: CommutePattern):
    atoms = [(t, m) for t, m in pattern.start_atoms if m > 0]
    segs = [seg for seg in pattern.start_segments if seg[1] > seg[0]]
    return atoms, segs


def cohort_output(pattern: CommutePattern, model: Model, w: float) -> float:
    """Exact daily output of a commuter who starts work at ``w``."""
    atoms, segs = _start_distribution(pattern)
    dev = sum(m * abs(w - t) for t, m in atoms)
    dev += sum(q * _seg_abs(w, l, r) for l, r, q in segs)
    return model.kappa * (model.H * model.N - dev)


def pattern_outputs(pattern: CommutePattern, model: Model) -> OutputPair:
    """Outputs obtained by integrating the pattern's on-duty counts exactly."""
    atoms, segs = _start_distribution(pattern)
    F_r = cohort_output(pattern, model, 0.0)
    flex_atom = pattern.start_atoms[0]
    n_f = flex_atom[1] + sum((r - l) * q for l, r, q in segs)
    dev_H = _deviator_output(pattern, model, "H_f")
    dev_I = _deviator_output(pattern, model, "I_f")
    if n_f > FLEX_EMPTY * model.N:
        kHN = model.kappa * model.H * model.N
        total = flex_atom[1] * cohort_output(pattern, model, flex_atom[0])
        for l, r, q in segs:
            dev = sum(m * _seg_abs(t, l, r) for t, m in atoms)
            dev += sum(q2 * _seg_seg_abs(l, r, l2, r2) for l2, r2, q2 in segs)
            total += q * ((r - l) * kHN - model.kappa * dev)
        F_f = total / n_f
        F_f_H = F_f_I = F_f
    else:
        F_f, F_f_H, F_f_I = dev_H, dev_H, dev_I
    eps = -1 + (pattern.start_atoms[1][1]) / model.N
    return OutputPair(F_r=F_r, F_f=F_f, epsilon=eps, F_f_H=F_f_H, F_f_I=F_f_I)


def _deviator_output(pattern, model, cls):
    _, a, _ = best_exit(pattern, model, cls)
    return cohort_output(pattern, model, max(a, -model.Delta))


# ---------------------------------------------------------------------------
# on-duty profile


@dataclass(frozen=True)
class OnDutyProfile:
    """Piecewise-linear on-duty counts. A time listed twice marks a jump
    (left limit first, then right limit)."""

    times: tuple[float, ...]
    rigid: tuple[float, ...]
    flex: tuple[float, ...]

    @property
    def total(self) -> tuple[float, ...]:
        return tuple(r + f for r, f in zip(self.rigid, self.flex))

    def integral(self, lo: float, hi: float) -> float:
        """Integral of the total on-duty count over [lo, hi]."""
        t = np.asarray(self.times)
        v = np.asarray(self.total)
        out = 0.0
        for i in range(len(t) - 1):
            a, b = max(t[i], lo), min(t[i + 1], hi)
            if b <= a or t[i + 1] == t[i]:
                continue
            slope = (v[i + 1] - v[i]) / (t[i + 1] - t[i])
            va = v[i] + slope * (a - t[i])
            vb = v[i] + slope * (b - t[i])
            out += 0.5 * (va + vb) * (b - a)
        return out


def _cum_starts(atoms, segs, t, side):
    c = 0.0
    for tau, m in atoms:
        if tau < t or (side == "right" and tau == t):
            c += m
    for l, r, q in segs:
        c += q * min(max(t - l, 0.0), r - l)
    return c


def onduty_profile(pattern: CommutePattern, model: Model) -> OnDutyProfile:
    H = model.H
    flex_atoms = [pattern.start_atoms[0]] if pattern.start_atoms[0][1] > 0 else []
    segs = list(pattern.start_segments)
    n_r = pattern.start_atoms[1][1]
    knots = {0.0, H}
    for t, _ in flex_atoms:
        knots.update((t, t + H))
    for l, r, _ in segs:
        knots.update((l, r, l + H, r + H))
    times, rigid, flex = [], [], []
    for t in sorted(knots):
        for side in ("left", "right"):
            f = _cum_starts(flex_atoms, segs, t, side) - _cum_starts(flex_atoms, segs, t - H, side)
            r = n_r if (0.0 < t < H or (t == 0.0 and side == "right") or (t == H and side == "left")) else 0.0
            if times and times[-1] == t and rigid[-1] == r and abs(flex[-1] - f) < 1e-9:
                continue
            times.append(t)
            rigid.append(r)
            flex.append(f)
    return OnDutyProfile(tuple(times), tuple(rigid), tuple(flex))
