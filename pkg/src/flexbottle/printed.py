"""Closed forms as published, for negative controls and claim reproduction.

Only entries that disagree with the corrected forms live here; everything
else is shared. Units: output deficits in kappa*N^2/s (to be added to
kappa*H*N), total-benefit kernels ``g`` in kappa*N^3/s, total costs in
2*beta*N^2/s.
"""

from __future__ import annotations

import numpy as np


def _eps(mu, v_H, v_I):
    return -1 + mu * v_H + (1 - mu) * v_I


def output_deficits(case: str, mu, th, vH, vI):
    """(F^r, F^f) deficits of the published output table for one case."""
    eps = _eps(mu, vH, vI)
    with np.errstate(divide="ignore", invalid="ignore"):
        if case == "A":
            return eps * th, (-eps + 1) * th
        if case == "B":
            fr = 0.5 * (th * (th + 2 * mu * vH - 2) + (1 - mu) ** 2 * vI**2)
            ff = (
                -4 * th**3
                + (1 - mu) ** 2 * vI**2 * (6 - 9 * mu * vH - 5 * vI + 5 * mu * vI)
                - 6 * th * (mu * vH - 1) * (mu * (vH + vI) - vI)
                + 3 * th**2 * (2 + vI - mu * (3 * vH + vI))
            ) / (6 * eps)
            return fr, ff
        if case == "C":
            fr = 0.5 * (mu * (2 * th * (vH - 1) + (mu - 2) * (vI**2 - 1)) + vI**2 - 1)
            ff = (
                mu * (-2 * (6 + mu * (4 * mu - 9)) - 6 * th * (2 + mu * (vH - 2)) * (vH - 1) + 9 * (mu - 1) ** 2 * vH)
                + 2
                - 3 * vI
                + 3 * mu * (3 + (mu - 3) * mu + 2 * th * (-1 + mu + vH - mu * vH)) * vI
                - 3 * (mu - 1) ** 2 * (3 * mu * vH - 2) * vI**2
                + 5 * (mu - 1) ** 3 * vI**3
            ) / (6 * eps)
            return fr, ff
        if case == "D":
            fr = 0.5 * ((th - 2) * th + (mu - 1) ** 2 * vI**2 + mu * vH * (2 + mu * (vH - 2)))
            ff = (
                17 + 2 * eps**3 + th**3 - 18 * mu + 3 * mu**3
                + 3 * th**2 * (mu - 1) * (vI - 1)
                + 3 * th * (-2 + (mu + vI - mu * vI) ** 2)
                + 3 * (mu - 1) * (12 + (mu - 10) * mu) * vI
                - 15 * (mu - 2) * (mu - 1) ** 2 * vI**2
                + 9 * (-1 + mu) ** 3 * vI**3
                + 3 * eps**2 * (5 + th - 3 * mu + 3 * (-1 + mu) * vI)
                + 3 * eps * (9 + 2 * th - 8 * mu - 2 * th * mu + mu**2 + 2 * (7 + th - 4 * mu) * (mu - 1) * vI + 7 * (mu - 1) ** 2 * vI**2)
            ) / (6 * eps)
            return fr, ff
    raise KeyError(case)


def total_cost_D(mu, th, vH, vI):
    """Published case-D total commuting cost (units 2*beta*N^2/s)."""
    return 2 * mu**2 * vH**2 + (2 * mu - th * mu - 2 * mu**2) * vH + mu - th * mu + mu**2 + (1 - mu) ** 2 * vI**2


def total_cost_D_partials(mu, th, vH, vI):
    """Published derivative columns for case D: d/dv_H, d/dv_I, d/dtheta."""
    return mu * (2 - th - 2 * mu + 4 * mu * vH), 2 * (1 - mu) ** 2 * vI, -mu * (1 + vH)


def g_C(mu, th, vH, vI, rho):
    """Published case-C benefit kernel, verbatim (including its -theta*v_I term)."""
    return (
        -1 / 3 + 4 / 3 * vI**3
        + 2 * mu * ((-1 + th) * (-1 + vH) + (1 + vH) * vI**2 - 2 * vI**3)
        + 1 / 3 * mu**3 * (4 - 4 * vI**3 + 6 * vH * (-1 + vI**2))
        + mu**2 * (-3 + 2 * th * (-1 + vH) ** 2 + 4 * vH * (1 - vI**2) + vI**2 * (4 * vI - rho - 1) - rho)
        + mu * (2 * vI**2 - 1 + th - th * vI) * rho
        - vI**2 * (1 + rho)
    )


def g_D(mu, th, vH, vI, rho):
    """Published case-D benefit kernel, verbatim."""
    return (
        0.5 + th**3 / 6
        + 0.5 * th**2 * (1 + mu * (vH - 1))
        + mu**3 / 6 * (3 + vH * (3 + 5 * (-3 + vH) * vH) + 12 * vH * vI**2 - 8 * vI**3)
        + 0.5 * th * (-3 + mu**2 * (-1 + vH) ** 2 + 2 * mu * (1 + vH * (-1 + rho) + rho))
        + vI**2 * (4 * vI - 3 * (1 + rho)) / 3
        + 0.5 * mu * (vH * (1 + 4 * vI**2 - 4 * rho) - 1 - 2 * rho + 4 * vI**2 * (1 - 2 * vI + rho))
        - 0.5 * mu**2 * (1 + vH * (2 + 8 * vI**2 - 4 * rho) + 2 * rho + 2 * vI**2 * (1 - 4 * vI + rho) + vH**2 * (-5 + 4 * rho))
    )


def tc_min_v_H(mu, theta=1.0):
    """Published minimiser of total commuting cost over v_H (case D)."""
    return (-2 + theta + 2 * mu) / (4 * mu) if mu > 0.5 else 0.0


def interior_v_H(mu, theta, rho):
    """Published interior household share of the benefit optimum on v_I = 0.

    Returns nan when the radicand is negative.
    """
    rad = 5 * (1 - mu) ** 2 - theta**2 + theta * (5 - 9 * rho) - 10 * (1 - mu) * rho + 16 * rho**2
    if rad < 0:
        return float("nan")
    return 1 - (5 + theta - 8 * rho + 2 * np.sqrt(rad)) / (5 * mu)


def interior_applies(mu, theta, rho) -> bool:
    """Occurrence conditions attached to the published interior optimum."""
    if not mu > 2 * (np.sqrt(2) - 1):
        return False
    if not theta > 2 * np.sqrt(2 * (1 - mu)) + mu - 1:
        return False
    den = 4 * (theta + 2 * mu - 2)
    if den <= 0:
        return False
    return rho >= (2 * theta * (1 + mu) - theta**2 - (1 - mu) ** 2) / den
