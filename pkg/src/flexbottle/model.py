"""Parameters, commuter accounting and the four-case classification.

Times are minutes relative to the rigid work start, so ``t_w = 0`` and the
school bell rings at ``t_s = -N_I/s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import ParameterError

CASES = ("A", "B", "C", "D")
TIE_TOL = 1e-12

_REQUIRED = ("N", "s", "H", "kappa", "mu", "theta")


@dataclass(frozen=True)
class Model:
    """Validated global parameters. Build through :func:`validate`."""

    N: float
    s: float
    H: float
    kappa: float
    alpha: float
    beta: float
    mu: float
    theta: float

    @property
    def Delta(self) -> float:
        return self.theta * self.N / self.s

    @property
    def rho(self) -> float:
        return self.beta / (self.kappa * self.N)

    @property
    def t_w(self) -> float:
        return 0.0

    @property
    def t_s(self) -> float:
        return self.t_w - self.N_I / self.s

    @property
    def N_H(self) -> float:
        return self.mu * self.N

    @property
    def N_I(self) -> float:
        return (1.0 - self.mu) * self.N

    @property
    def cost_unit(self) -> float:
        """beta*N/s, the scale of every per-person commuting cost."""
        return self.beta * self.N / self.s

    @property
    def output_unit(self) -> float:
        """kappa*N^2/s, the scale of every output deficit and of D_J."""
        return self.kappa * self.N**2 / self.s

    def replace(self, **changes) -> "Model":
        raw = self.as_dict()
        if "rho" in changes:
            raw.pop("beta")
        if "beta" in changes or "rho" in changes or "kappa" in changes or "N" in changes:
            # keep alpha only if the caller pinned it
            if "alpha" not in changes:
                raw.pop("alpha")
        raw.update(changes)
        return validate(raw)

    def as_dict(self) -> dict:
        return {
            "N": self.N, "s": self.s, "H": self.H, "kappa": self.kappa,
            "alpha": self.alpha, "beta": self.beta, "mu": self.mu, "theta": self.theta,
        }


@dataclass(frozen=True)
class ScheduleSplit:
    """Shares of households (v_H) and individuals (v_I) on the rigid schedule."""

    v_H: float
    v_I: float

    def __post_init__(self):
        for name in ("v_H", "v_I"):
            v = getattr(self, name)
            if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                raise ParameterError("SPLIT_OUT_OF_RANGE", f"{name}={v!r} not in [0, 1]")

    def as_tuple(self) -> tuple[float, float]:
        return (self.v_H, self.v_I)


@dataclass(frozen=True)
class GroupCounts:
    n_H_r: float
    n_H_f: float
    n_I_r: float
    n_I_f: float
    n_fe: float

    @property
    def n_r(self) -> float:
        return self.n_H_r + self.n_I_r

    @property
    def n_f(self) -> float:
        return self.n_H_f + self.n_I_f


@dataclass(frozen=True)
class CaseLabel:
    case: str
    on_boundary: str | None = None


def _finite(name, value):
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ParameterError("NOT_A_NUMBER", f"{name}={value!r}") from None
    if not math.isfinite(x):
        raise ParameterError("NOT_FINITE", f"{name}={value!r}")
    return x


def validate(raw: Mapping[str, float]) -> Model:
    """Check raw parameters and return a :class:`Model`.

    Exactly one of ``beta`` and ``rho`` must be present (``beta = rho*kappa*N``).
    ``alpha`` defaults to the midpoint ``(beta + kappa*N)/2``.
    """
    missing = [k for k in _REQUIRED if raw.get(k) is None]
    if missing:
        raise ParameterError("MISSING_FIELD", ", ".join(missing))
    p = {k: _finite(k, raw[k]) for k in _REQUIRED}
    for k in ("N", "s", "H", "kappa"):
        if p[k] <= 0:
            raise ParameterError("NONPOSITIVE_" + k.upper(), f"{k}={p[k]} must be > 0")

    has_beta = raw.get("beta") is not None
    has_rho = raw.get("rho") is not None
    if has_beta and has_rho:
        raise ParameterError("BETA_RHO_CONFLICT", "give exactly one of beta or rho")
    if not (has_beta or has_rho):
        raise ParameterError("MISSING_FIELD", "beta or rho")
    kN = p["kappa"] * p["N"]
    if has_rho:
        rho = _finite("rho", raw["rho"])
        if not 0.0 < rho < 1.0:
            raise ParameterError("RHO_OUT_OF_RANGE", f"rho={rho} not in (0, 1)")
        beta = rho * kN
    else:
        beta = _finite("beta", raw["beta"])
    if beta <= 0:
        raise ParameterError("BETA_NONPOSITIVE", f"beta={beta} must be > 0")

    alpha = raw.get("alpha")
    alpha = 0.5 * (beta + kN) if alpha is None else _finite("alpha", alpha)
    if beta >= alpha:
        raise ParameterError("BETA_GE_ALPHA", f"beta={beta} must be < alpha={alpha}")
    if alpha > kN * (1 + 1e-12):
        raise ParameterError("ALPHA_GT_KAPPA_N", f"alpha={alpha} exceeds kappa*N={kN}")
    if not 0.0 < beta / kN < 1.0:
        raise ParameterError("RHO_OUT_OF_RANGE", f"rho={beta / kN} not in (0, 1)")

    if not 0.0 < p["theta"] <= 1.0:
        raise ParameterError("THETA_OUT_OF_RANGE", f"theta={p['theta']} not in (0, 1]")
    if not 0.0 <= p["mu"] <= 1.0:
        raise ParameterError("MU_OUT_OF_RANGE", f"mu={p['mu']} not in [0, 1]")
    if p["H"] <= 2 * p["N"] / p["s"]:
        raise ParameterError("H_TOO_SHORT", f"H={p['H']} must exceed 2N/s={2 * p['N'] / p['s']}")
    return Model(alpha=alpha, beta=beta, **p)


def as_split(split) -> ScheduleSplit:
    if isinstance(split, ScheduleSplit):
        return split
    v_H, v_I = split
    return ScheduleSplit(float(v_H), float(v_I))


def case_index(mu, theta, v_H, v_I):
    """Vectorised case classifier: 0..3 for cases A..D.

    Ties go to A and C. At mu = 0 the C/D threshold is taken as 0 (no
    households to split), at mu = 1 the A/B branch never applies.
    """
    mu, theta, v_H, v_I = np.broadcast_arrays(*(np.asarray(x, float) for x in (mu, theta, v_H, v_I)))
    lower = theta + mu < 1 - TIE_TOL
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        thr_I = np.where(mu < 1, theta / np.where(mu < 1, 1 - mu, 1), np.inf)
        thr_H = np.where(mu > 0, (theta + mu - 1) / np.where(mu > 0, mu, 1), 0.0)
    ab = np.where(v_I >= thr_I - TIE_TOL, 0, 1)
    cd = np.where(v_H >= thr_H - TIE_TOL, 2, 3)
    return np.where(lower, ab, cd)


def classify_case(model: Model, split) -> CaseLabel:
    split = as_split(split)
    mu, th = model.mu, model.theta
    case = CASES[int(case_index(mu, th, split.v_H, split.v_I))]
    marker = None
    if abs(th + mu - 1) <= TIE_TOL:
        marker = "theta+mu=1"
    elif case in "AB" and mu < 1 and abs(split.v_I - th / (1 - mu)) <= TIE_TOL:
        marker = "v_I=theta/(1-mu)"
    elif case in "CD" and mu > 0 and abs(split.v_H - (th + mu - 1) / mu) <= TIE_TOL:
        marker = "v_H=(theta+mu-1)/mu"
    return CaseLabel(case, marker)


def n_fe_share(case, mu, theta, v_H, v_I):
    """Flex commuters arriving before the flex-interval, as a share of N."""
    table = {
        "A": 1 - v_I + (v_I - v_H) * mu,
        "B": 1 - theta - v_H * mu,
        "C": mu * (1 - v_H),
        "D": 1 - theta,
    }
    return table[case]


def group_counts(model: Model, split) -> GroupCounts:
    split = as_split(split)
    N, mu = model.N, model.mu
    case = classify_case(model, split).case
    return GroupCounts(
        n_H_r=split.v_H * mu * N,
        n_H_f=(1 - split.v_H) * mu * N,
        n_I_r=split.v_I * (1 - mu) * N,
        n_I_f=(1 - split.v_I) * (1 - mu) * N,
        n_fe=n_fe_share(case, mu, model.theta, split.v_H, split.v_I) * N,
    )


REFERENCE_SCALE = {"N": 10000.0, "s": 100.0, "H": 400.0, "kappa": 0.001}
"""Scale used by the worked numerical example (capacity 100 veh/min)."""


def reference_model(mu: float = 0.2, theta: float = 0.6, rho: float = 0.25, **extra) -> Model:
    raw = dict(REFERENCE_SCALE, mu=mu, theta=theta, rho=rho)
    raw.update(extra)
    return validate(raw)
