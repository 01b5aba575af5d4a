"""Gradient-inequality exponent estimation from flow trajectories.

Near a critical point the gradient norm controls the value gap through
|grad mu| >= |mu|^{1 - theta} for some theta in (0, 1/2]. Along a recorded
gradient-gauge trajectory both sides are sampled directly (rhs_l2 is the
gradient norm in that gauge), so theta is estimated by a least-squares fit of
log |grad mu| against log |mu|, then reconciled with the largest exponent not
exceeding one half for which the inequality holds at every sample of the fit
window. The fit residual and exclusion counts are always reported; nothing is
asserted a priori.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError

_ROUNDING_SLACK = 1e-12


@dataclass(frozen=True)
class LojasiewiczFit:
    """Fitted gradient-inequality exponent and its certificates.

    theta_slope is the raw least-squares estimate 1 - slope; theta_hat
    additionally respects the cap at one half and the pointwise feasibility
    of the inequality on the window, so it is NaN when no positive exponent
    works. sigma_hat = theta_hat - eta + theta_hat * eta combines theta with
    the interpolation exponent eta when that diagnostic was fitted; eta is
    measured, not asserted, and may fall outside (0, 1).
    """

    theta_hat: float
    theta_slope: float
    fit_residual: float
    window: tuple
    n_samples: int
    n_excluded: int
    holds_everywhere: bool
    eta: Optional[float] = None
    sigma_hat: Optional[float] = None
    eta_residual: Optional[float] = None
    eta_prefactor: Optional[float] = None

    def as_dict(self):
        return {
            "theta_hat": self.theta_hat,
            "theta_slope": self.theta_slope,
            "fit_residual": self.fit_residual,
            "window": list(self.window),
            "n_samples": self.n_samples,
            "n_excluded": self.n_excluded,
            "holds_everywhere": self.holds_everywhere,
            "eta": self.eta,
            "sigma_hat": self.sigma_hat,
            "eta_residual": self.eta_residual,
            "eta_prefactor": self.eta_prefactor,
        }


def _records_of(trajectory):
    if hasattr(trajectory, "records"):
        if getattr(trajectory, "states", None):
            gauge = trajectory.states[-1].gauge
            if gauge != "mu_gradient":
                raise ConfigError(
                    f"exponent fit needs a mu_gradient trajectory, got {gauge!r}")
        return trajectory.records
    return list(trajectory)


def _feasible_cap(log_lam, log_grad):
    """Largest theta <= 1/2 with log grad >= (1 - theta) log |mu| pointwise.

    Samples with |mu| < 1 bound theta from above, samples with |mu| > 1 from
    below; |mu| = 1 samples just require grad >= 1. Returns (cap, feasible).
    """
    upper = 0.5
    lower = 0.0
    feasible = True
    for x, y in zip(log_lam, log_grad):
        ratio = 1.0 - y / x if x != 0.0 else None
        if x < 0.0:
            upper = min(upper, ratio)
        elif x > 0.0:
            lower = max(lower, ratio)
        elif y < 0.0:
            feasible = False
    if upper <= lower or upper <= 0.0:
        feasible = False
    return upper, feasible


def lojasiewicz_estimate(trajectory, window_fraction=0.5, window=None,
                         min_samples=10, fit_eta=False):
    """Fit the gradient-inequality exponent on a trajectory's tail.

    trajectory is a Trajectory from the mu_gradient gauge (or a bare list of
    record dicts with keys t, lambda, rhs_l2). Samples with lambda >= 0 or a
    vanishing gradient norm are excluded and counted. The fit window is the
    trailing window_fraction of the remaining samples, or the explicit (t0,
    t1) interval when window is given; fewer than min_samples usable rows is
    an error.

    With fit_eta=True the records must carry the sup-norm proxy rhs_c0; the
    interpolation diagnostic fits log rhs_c0 = log C + (1 - eta) log rhs_l2
    over the same window.
    """
    records = _records_of(trajectory)
    rows = [
        r for r in records
        if math.isfinite(r["lambda"]) and r["lambda"] < 0.0
        and r["rhs_l2"] > 0.0
    ]
    n_excluded = len(records) - len(rows)
    if window is not None:
        t0, t1 = window
        rows = [r for r in rows if t0 <= r["t"] <= t1]
    else:
        start = int(math.floor(len(rows) * (1.0 - window_fraction)))
        rows = rows[start:]
    if len(rows) < min_samples:
        raise ConfigError(
            f"fit window holds {len(rows)} usable samples; "
            f"need at least {min_samples}")

    log_lam = np.log(np.abs(np.array([r["lambda"] for r in rows])))
    log_grad = np.log(np.array([r["rhs_l2"] for r in rows]))
    slope, intercept = np.polyfit(log_lam, log_grad, 1)
    theta_slope = 1.0 - float(slope)
    fitted = slope * log_lam + intercept
    fit_residual = float(np.sqrt(np.mean((log_grad - fitted) ** 2)))

    cap, feasible = _feasible_cap(log_lam, log_grad)
    theta_hat = min(theta_slope, cap)
    if not feasible or theta_hat <= 0.0:
        theta_hat = float("nan")
        holds = False
    else:
        # recheck the inequality at the reported exponent, with only a
        # rounding-level slack
        bound = (1.0 - theta_hat) * log_lam
        holds = bool(np.all(log_grad >= bound - _ROUNDING_SLACK))

    eta = sigma_hat = eta_residual = eta_prefactor = None
    if fit_eta:
        if any("rhs_c0" not in r for r in rows):
            raise ConfigError(
                "records lack the rhs_c0 column needed for the eta fit")
        log_c0 = np.log(np.array([r["rhs_c0"] for r in rows]))
        slope2, intercept2 = np.polyfit(log_grad, log_c0, 1)
        eta = 1.0 - float(slope2)
        eta_prefactor = float(np.exp(intercept2))
        fitted2 = slope2 * log_grad + intercept2
        eta_residual = float(np.sqrt(np.mean((log_c0 - fitted2) ** 2)))
        if math.isfinite(theta_hat):
            sigma_hat = theta_hat - eta + theta_hat * eta

    t_values = [r["t"] for r in rows]
    return LojasiewiczFit(
        theta_hat=float(theta_hat),
        theta_slope=theta_slope,
        fit_residual=fit_residual,
        window=(float(min(t_values)), float(max(t_values))),
        n_samples=len(rows),
        n_excluded=n_excluded,
        holds_everywhere=holds,
        eta=eta,
        sigma_hat=sigma_hat,
        eta_residual=eta_residual,
        eta_prefactor=eta_prefactor,
    )
