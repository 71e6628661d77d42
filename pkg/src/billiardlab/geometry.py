"""Width profiles of partially rectangular billiards.

A billiard here is the set {(x, y) : -B0 <= x <= B1, 0 <= y <= L(x)} where the
width function L is constant (= L0) on the rectangular side x <= 0 and
non-increasing on the wing side x > 0, behaving like L0 - c_L * x**gamma near
the junction.  Everything downstream (assembly, mode analysis, estimate
sweeps) reads the geometry exclusively through this module.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ParameterError

KIND_STADIUM = "truncated-quarter-stadium"
KIND_POWER = "power-profile"
KIND_CONSTANT = "constant-rectangle"

_SUP_SAMPLES = 2048  # dense fallback when |L'| monotonicity is not guaranteed


@dataclass(frozen=True)
class BilliardProfile:
    """Immutable width profile with its wing parameters.

    Parameters
    ----------
    kind : str
        One of the supported profile tags.
    L0 : float
        Height of the rectangle (width at x <= 0).
    B0 : float
        Depth of the rectangle (the domain starts at x = -B0).
    B1 : float
        Depth of the wing (the domain ends at x = B1, with L(B1) > 0).
    gamma : float
        Leading exponent of L0 - L(x) near x = 0.
    c_L : float
        Leading coefficient of L0 - L(x) near x = 0.
    truncation_fraction : float or None
        Only for the truncated quarter stadium: B1 = fraction * L0.
    """

    kind: str
    L0: float
    B0: float
    B1: float
    gamma: float
    c_L: float
    truncation_fraction: float | None = None
    _L_custom: Callable | None = field(default=None, repr=False, compare=False)
    _Lp_custom: Callable | None = field(default=None, repr=False, compare=False)

    def L(self, x):
        """Width at x; exactly L0 for x <= 0, vectorized."""
        x = np.asarray(x, dtype=float)
        if self.kind == KIND_CONSTANT:
            return np.full_like(x, self.L0)
        if self._L_custom is not None:
            wing = self._L_custom(np.minimum(x, self.B1))
        elif self.kind == KIND_STADIUM:
            xw = np.minimum(x, self.B1)
            wing = np.sqrt(np.maximum(self.L0**2 - xw**2, 0.0))
        elif self.kind == KIND_POWER:
            xw = np.minimum(x, self.B1)
            wing = self.L0 - self.c_L * np.maximum(xw, 0.0) ** self.gamma
        else:
            raise ParameterError(f"unknown profile kind {self.kind!r}")
        return np.where(x <= 0.0, self.L0, wing)

    def Lprime(self, x):
        """dL/dx at x; exactly 0 for x <= 0, vectorized."""
        x = np.asarray(x, dtype=float)
        if self.kind == KIND_CONSTANT:
            return np.zeros_like(x)
        if self._Lp_custom is not None:
            wing = self._Lp_custom(np.minimum(x, self.B1))
        elif self.kind == KIND_STADIUM:
            xw = np.minimum(x, self.B1)
            wing = -xw / np.sqrt(np.maximum(self.L0**2 - xw**2, 1e-300))
        elif self.kind == KIND_POWER:
            xw = np.maximum(np.minimum(x, self.B1), 0.0)
            wing = -self.c_L * self.gamma * xw ** (self.gamma - 1.0)
        else:
            raise ParameterError(f"unknown profile kind {self.kind!r}")
        return np.where(x <= 0.0, 0.0, wing)

    @property
    def abs_Lprime_monotone(self) -> bool:
        """True when |L'| is known non-decreasing on (0, B1)."""
        return self.kind in (KIND_STADIUM, KIND_POWER, KIND_CONSTANT)


def make_truncated_quarter_stadium(L0: float, truncation_fraction: float,
                                   B0: float | None = None) -> BilliardProfile:
    """Quarter-stadium profile: circular-arc wing L(x) = sqrt(L0^2 - x^2).

    The arc is truncated at B1 = truncation_fraction * L0 so the wing ends on
    a vertical wall of positive height.  gamma = 2 and c_L = 1/(2*L0) follow
    from the Taylor expansion of the arc at x = 0.  B0 defaults to L0.
    """
    if L0 <= 0:
        raise ParameterError(f"L0 must be positive, got {L0}")
    if not 0.5 < truncation_fraction <= 0.99:
        raise ParameterError(
            f"truncation_fraction must lie in (0.5, 0.99], got {truncation_fraction}")
    if B0 is None:
        B0 = L0
    if B0 <= 0:
        raise ParameterError(f"B0 must be positive, got {B0}")
    return BilliardProfile(
        kind=KIND_STADIUM, L0=float(L0), B0=float(B0),
        B1=float(truncation_fraction) * float(L0),
        gamma=2.0, c_L=0.5 / float(L0),
        truncation_fraction=float(truncation_fraction))


def make_power_profile(L0: float, B0: float, B1: float, gamma: float,
                       c_L: float) -> BilliardProfile:
    """Profile with exact power-law wing L(x) = L0 - c_L * x**gamma."""
    if L0 <= 0 or B0 <= 0 or B1 <= 0:
        raise ParameterError("L0, B0, B1 must all be positive")
    if gamma < 1.5:
        raise ParameterError(f"wing exponent gamma must be >= 3/2, got {gamma}")
    if c_L <= 0:
        raise ParameterError(f"c_L must be positive, got {c_L}")
    if L0 - c_L * B1**gamma <= 0:
        x_crit = (L0 / c_L) ** (1.0 / gamma)
        raise ParameterError(
            f"profile hits zero at x = {x_crit:.6g} before B1 = {B1:.6g}; "
            "shorten the wing or reduce c_L")
    return BilliardProfile(kind=KIND_POWER, L0=float(L0), B0=float(B0),
                           B1=float(B1), gamma=float(gamma), c_L=float(c_L))


def make_constant_rectangle(L0: float, B0: float, B1: float) -> BilliardProfile:
    """Constant-width fixture (c_L = 0).

    Solver test fixture only: it violates the wing conditions on purpose and
    is excluded from estimate sweeps.
    """
    if L0 <= 0 or B0 <= 0 or B1 <= 0:
        raise ParameterError("L0, B0, B1 must all be positive")
    return BilliardProfile(kind=KIND_CONSTANT, L0=float(L0), B0=float(B0),
                           B1=float(B1), gamma=float("nan"), c_L=0.0)


def delta_b(profile: BilliardProfile, b: float) -> float:
    """sup |L'| + sup |L'|^2 over (0, b].

    For the built-in kinds |L'| is non-decreasing so the sup is the endpoint
    value; otherwise a dense sample of 2048 points is used.  Both sup terms
    coincide with sup and sup-squared of the same quantity because |L'| is
    monotone for every supported kind.
    """
    if not 0 < b < profile.B1:
        raise ParameterError(f"b must lie in (0, B1) = (0, {profile.B1}), got {b}")
    if profile.abs_Lprime_monotone and profile._Lp_custom is None:
        sup = abs(float(profile.Lprime(b)))
    else:
        xs = np.linspace(b / _SUP_SAMPLES, b, _SUP_SAMPLES)
        sup = float(np.max(np.abs(profile.Lprime(xs))))
    return sup + sup * sup


@dataclass
class GeometryReport:
    """Pass/fail record of every profile invariant plus measured slopes."""

    checks: list  # (name, passed: bool, detail: str)
    gamma_slope: float | None
    gamma_prime_slope: float | None
    sup_abs_Lprime: float
    sup_Lprime_squared: float

    @property
    def ok(self) -> bool:
        return all(passed for _, passed, _ in self.checks)

    def failures(self):
        return [(n, d) for n, p, d in self.checks if not p]


def _loglog_slope(x, y):
    mask = y > 0
    if mask.sum() < 8:
        return None
    return float(np.polyfit(np.log(x[mask]), np.log(y[mask]), 1)[0])


def validate(profile) -> GeometryReport:
    """Check all profile invariants; the report carries failures, not raises.

    The asymptotic checks fit a log-log slope of L0 - L(x) (resp. -L'(x))
    against x on [1e-4, 1e-2] and require agreement with gamma (resp.
    gamma - 1) within 0.02.
    """
    checks = []
    L0, B1 = profile.L0, profile.B1
    is_const = profile.kind == KIND_CONSTANT

    xr = np.linspace(-profile.B0, 0.0, 257)
    rect_ok = bool(np.all(profile.L(xr) == L0))
    checks.append(("rectangle-constant", rect_ok, "L(x) == L0 for all x <= 0"))

    checks.append(("L0-exact-at-zero", float(profile.L(0.0)) == L0,
                   "L(0) returns L0 bitwise"))

    gap = abs(float(profile.L(-1e-12)) - float(profile.L(1e-12)))
    checks.append(("continuity-at-zero", gap <= 1e-9 * L0,
                   f"|L(-1e-12) - L(1e-12)| = {gap:.3e}"))

    xw = np.linspace(B1 / 4096.0, B1, 4096)
    Lw = profile.L(xw)
    mono_ok = bool(np.all(np.diff(Lw) <= 1e-14 * L0))
    checks.append(("wing-non-increasing", mono_ok, "L non-increasing on (0, B1)"))

    checks.append(("wing-positive", float(profile.L(B1)) > 0.0,
                   f"L(B1) = {float(profile.L(B1)):.6g}"))

    gamma_ok = is_const or profile.gamma >= 1.5
    checks.append(("gamma-admissible", gamma_ok,
                   f"gamma = {profile.gamma} (>= 3/2 required unless constant fixture)"))

    gamma_slope = gamma_prime_slope = None
    if not is_const and profile.c_L > 0:
        xs = np.geomspace(1e-4, 1e-2, 64)
        gamma_slope = _loglog_slope(xs, L0 - profile.L(xs))
        gamma_prime_slope = _loglog_slope(xs, -profile.Lprime(xs))
        s_ok = gamma_slope is not None and abs(gamma_slope - profile.gamma) <= 0.02
        checks.append(("asymptotic-L", s_ok,
                       f"log-log slope of L0 - L(x) = {gamma_slope}"))
        sp_ok = (gamma_prime_slope is not None
                 and abs(gamma_prime_slope - (profile.gamma - 1.0)) <= 0.02)
        checks.append(("asymptotic-Lprime", sp_ok,
                       f"log-log slope of -L'(x) = {gamma_prime_slope}"))

    # sup |L'| and sup |L'|^2 recorded separately; equal for monotone |L'|.
    xs_sup = np.linspace(B1 / _SUP_SAMPLES, B1 * (1 - 1e-12), _SUP_SAMPLES)
    a = np.abs(profile.Lprime(xs_sup))
    sup_abs = float(np.max(a))
    sup_sq = float(np.max(a * a))

    return GeometryReport(checks=checks, gamma_slope=gamma_slope,
                          gamma_prime_slope=gamma_prime_slope,
                          sup_abs_Lprime=sup_abs, sup_Lprime_squared=sup_sq)


def profile_record(profile: BilliardProfile) -> dict:
    """Flat key-value serialization used in config files and cache headers."""
    rec = {
        "kind": profile.kind,
        "L0": profile.L0,
        "B0": profile.B0,
        "B1": profile.B1,
        "gamma": profile.gamma,
        "c_L": profile.c_L,
    }
    if profile.truncation_fraction is not None:
        rec["truncation_fraction"] = profile.truncation_fraction
    return rec


def profile_from_record(rec: dict) -> BilliardProfile:
    kind = rec["kind"]
    if kind == KIND_STADIUM:
        return make_truncated_quarter_stadium(
            float(rec["L0"]), float(rec["truncation_fraction"]), B0=float(rec["B0"]))
    if kind == KIND_POWER:
        return make_power_profile(float(rec["L0"]), float(rec["B0"]),
                                  float(rec["B1"]), float(rec["gamma"]),
                                  float(rec["c_L"]))
    if kind == KIND_CONSTANT:
        return make_constant_rectangle(float(rec["L0"]), float(rec["B0"]),
                                       float(rec["B1"]))
    raise ParameterError(f"unknown profile kind {kind!r}")
