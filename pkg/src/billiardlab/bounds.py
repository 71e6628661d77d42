"""Exponent formulas, wing-depth optimization and estimate verification.

The non-concentration bound states |u|_Omega <= C * E^rho * |u|_W for
eigenfunctions whose energy keeps a distance c0 * E^-eps from the rectangle
spectrum.  This module evaluates the exponents exactly in rational
arithmetic, picks the wing depths b = M * E^-alpha used by the decaying-mode
and oscillatory-mode estimates, measures the achieved constants of both
squared estimates per eigenpair, and assembles the cross-validated sweep
report for the main bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.stats import theilslopes

from . import adiabatic as ad
from .discretize import EigenPair, restrict_norm
from .errors import ParameterError, ResolutionError
from .resonance import nu as nu_distance


def _frac(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, int):
        return Fraction(v)
    return Fraction(v).limit_denominator(10**12)


def alpha_large(gamma) -> Fraction:
    """Wing-depth exponent 1/(2*gamma - 1) for the decaying-mode estimate."""
    g = _frac(gamma)
    if g < Fraction(3, 2):
        raise ParameterError(f"gamma must be >= 3/2, got {gamma}")
    return 1 / (2 * g - 1)


def alpha_small(gamma, eps) -> Fraction:
    """max((3+2e)/(2g+1), (2+2e)/(2g-1)) for the oscillatory-mode estimate."""
    g, e = _frac(gamma), _frac(eps)
    if g < Fraction(3, 2):
        raise ParameterError(f"gamma must be >= 3/2, got {gamma}")
    if e < 0:
        raise ParameterError(f"eps must be >= 0, got {eps}")
    return max((3 + 2 * e) / (2 * g + 1), (2 + 2 * e) / (2 * g - 1))


def rho(gamma, eps) -> Fraction:
    """Non-concentration exponent max of the two regime exponents.

    Cross-checked against the identity rho = (1 + 2*eps + alpha_small)/2,
    which ties the bound to the oscillatory-mode optimization.
    """
    g, e = _frac(gamma), _frac(eps)
    value = max((2 + g + 2 * (g + 1) * e) / (2 * g + 1),
                (1 + 2 * g + 4 * g * e) / (4 * g - 2))
    identity = (1 + 2 * e + alpha_small(g, e)) / 2
    if value != identity:
        raise AssertionError(
            f"exponent identity violated: rho = {value} but "
            f"(1 + 2 eps + alpha_small)/2 = {identity}")
    return value


@dataclass
class ChosenB:
    """Wing depths M * E^-alpha snapped to grid lines."""

    b_large_raw: float
    b_small_raw: float
    b_large: float
    b_small: float
    cell_large: int           # node index of the snapped depth
    cell_small: int
    snap_large: float
    snap_small: float


def choose_b(E: float, gamma, eps, M_large: float = 1.0, M_small: float = 1.0,
             *, grid, b0: float | None = None) -> ChosenB:
    """Wing depths for both estimates at energy E, snapped to s-nodes."""
    if E <= 0 or M_large <= 0 or M_small <= 0:
        raise ParameterError("need E > 0 and positive M factors")
    if b0 is None:
        b0 = grid.profile.B1 / 4.0
    bl_raw = M_large * E ** (-float(alpha_large(gamma)))
    bs_raw = M_small * E ** (-float(alpha_small(gamma, eps)))
    if min(bl_raw, bs_raw) >= b0:
        raise ParameterError(
            f"chosen depths ({bl_raw:.4g}, {bs_raw:.4g}) must stay below "
            f"b0 = {b0:.4g}; raise E or lower the M factors")
    out = []
    for raw in (bl_raw, bs_raw):
        i, snapped, dist = grid.snap_s(min(raw, b0))
        if i <= grid.i0:
            raise ResolutionError(
                f"depth {raw:.4g} snaps to the interface; the grid spacing "
                f"{grid.hs:.4g} is too coarse for E = {E:.4g}")
        out.append((i, snapped, dist))
    (il, bl, dl), (is_, bs, ds) = out
    return ChosenB(b_large_raw=bl_raw, b_small_raw=bs_raw, b_large=bl,
                   b_small=bs, cell_large=il, cell_small=is_,
                   snap_large=dl, snap_small=ds)


# ---------------------------------------------------------------------------
# per-pair estimate checks
# ---------------------------------------------------------------------------

@dataclass
class ModeEstimateRow:
    k: int
    lhs: float      # |u_k|_{L2(-B0, b)}
    rhs: float
    constant: float


@dataclass
class LargeModeReport:
    """Measured constants of the decaying-mode estimate at one eigenpair."""

    E: float
    b: float
    lhs: float                       # |u_+|^2 over the rectangle
    term_dx: float                   # b^(2g-1) |du/dx|^2_{W_b}
    term_dy: float                   # E^-1 b^(2g-3) |du/dy|^2_{W_b}
    term_mass: float                 # b^-1 |u|^2_{W_b}
    constant: float
    per_mode: list[ModeEstimateRow] = field(default_factory=list)

    @property
    def rhs(self) -> float:
        return self.term_dx + self.term_dy + self.term_mass


def check_large_modes(pair: EigenPair, decomp: ad.ModeDecomposition,
                      fg: ad.FGData, b: float) -> LargeModeReport:
    """Decaying-mode estimate: rectangle mass of u_+ against wing data.

    Empty large-mode sets yield a zero report rather than an error.
    """
    grid = pair.grid
    gamma = grid.profile.gamma
    ib, b_snap, _ = grid.snap_s(b)
    split = ad.split_modes(decomp)
    lhs = ad.field_region_mass(pair.forms, split.u_plus, 0, grid.i0)

    dx, dy = ad.derivative_fields(pair)
    dxn = ad.region_field_norm2(grid, dx, grid.i0, ib)
    dyn = ad.region_field_norm2(grid, dy, grid.i0, ib)
    mass_wb = restrict_norm(pair, 0.0, b_snap)
    term_dx = b_snap ** (2 * gamma - 1) * dxn
    term_dy = b_snap ** (2 * gamma - 3) * dyn / pair.E
    term_mass = mass_wb / b_snap
    rhs = term_dx + term_dy + term_mass

    rows = []
    for k in split.large:
        if k > fg.kmax:
            break
        lhs_k = math.sqrt(ad.mode_interval_norm2(decomp, k, 0, ib))
        u_wing = math.sqrt(ad.mode_interval_norm2(decomp, k, grid.i0, ib))
        rhs_k = (b_snap ** (gamma - 0.5) * math.sqrt(fg.F_norm2[k - 1])
                 + b_snap ** (gamma - 1.5) * math.sqrt(fg.G_norm2[k - 1])
                 / math.sqrt(pair.E)
                 + u_wing / math.sqrt(b_snap))
        rows.append(ModeEstimateRow(k=int(k), lhs=lhs_k, rhs=rhs_k,
                                    constant=lhs_k / rhs_k if rhs_k else 0.0))
    constant = lhs / rhs if rhs > 0 else 0.0
    return LargeModeReport(E=pair.E, b=b_snap, lhs=lhs, term_dx=term_dx,
                           term_dy=term_dy, term_mass=term_mass,
                           constant=constant, per_mode=rows)


@dataclass
class SmallModeReport:
    """Measured constants of the oscillatory-mode estimate at one eigenpair."""

    E: float
    b: float
    nu: float
    applicable: bool                 # E in the requested non-resonance set
    resonant: bool                   # nu = 0, estimate void
    lhs: float                       # |u_-|^2 over the rectangle
    term_dx: float                   # E b^(2g+1) |du/dx|^2_W  (nu-prefactored)
    term_dy: float                   # b^(2g-1) |du/dy|^2_W
    term_mass: float                 # (1 + E b^(g+2))^2 b^-1 |u|^2_W
    prefactor: float                 # E / nu^2
    constant: float
    per_mode: list[ModeEstimateRow] = field(default_factory=list)

    @property
    def rhs(self) -> float:
        return self.prefactor * (self.term_dx + self.term_dy + self.term_mass)


def check_small_modes(pair: EigenPair, decomp: ad.ModeDecomposition,
                      fg: ad.FGData, b: float, eps: float,
                      c0: float) -> SmallModeReport:
    """Oscillatory-mode estimate with the resonance-distance prefactor.

    Pairs outside the requested non-resonance set are reported as not
    applicable; exactly resonant energies (nu = 0) as void.
    """
    grid = pair.grid
    prof = grid.profile
    gamma = prof.gamma
    ib, b_snap, _ = grid.snap_s(b)
    nu_res = nu_distance(pair.E, prof.L0, prof.B0)
    nu_val = nu_res.value
    applicable = nu_val >= c0 * pair.E ** (-eps)
    split = ad.split_modes(decomp)
    lhs = ad.field_region_mass(pair.forms, split.u_minus, 0, grid.i0)
    if nu_val == 0.0:
        return SmallModeReport(E=pair.E, b=b_snap, nu=0.0, applicable=False,
                               resonant=True, lhs=lhs, term_dx=0.0,
                               term_dy=0.0, term_mass=0.0,
                               prefactor=float("inf"), constant=0.0)

    dx, dy = ad.derivative_fields(pair)
    dxn = ad.region_field_norm2(grid, dx, grid.i0, grid.ns)   # whole wing
    dyn = ad.region_field_norm2(grid, dy, grid.i0, grid.ns)
    mass_w = restrict_norm(pair, 0.0, None)
    E = pair.E
    pref_mass = (1.0 + E * b_snap ** (gamma + 2)) ** 2
    term_dx = E * b_snap ** (2 * gamma + 1) * dxn
    term_dy = b_snap ** (2 * gamma - 1) * dyn
    term_mass = pref_mass * mass_w / b_snap
    prefactor = E / nu_val**2
    rhs = prefactor * (term_dx + term_dy + term_mass)

    rows = []
    for k in split.small:
        if k > fg.kmax:
            break
        lhs_k = math.sqrt(ad.mode_interval_norm2(decomp, k, 0, ib))
        rhs_k = (math.sqrt(E) / nu_val) * (
            math.sqrt(E) * b_snap ** (gamma + 0.5) * math.sqrt(fg.F_norm2[k - 1])
            + b_snap ** (gamma - 0.5) * math.sqrt(fg.G_norm2[k - 1])
            + (1.0 + E * b_snap ** (gamma + 2))
            * math.sqrt(ad.mode_interval_norm2(decomp, k, grid.i0, ib))
            / math.sqrt(b_snap))
        rows.append(ModeEstimateRow(k=int(k), lhs=lhs_k, rhs=rhs_k,
                                    constant=lhs_k / rhs_k if rhs_k else 0.0))
    return SmallModeReport(E=pair.E, b=b_snap, nu=nu_val,
                           applicable=applicable, resonant=False, lhs=lhs,
                           term_dx=term_dx, term_dy=term_dy,
                           term_mass=term_mass, prefactor=prefactor,
                           constant=lhs / rhs if rhs > 0 else 0.0,
                           per_mode=rows)


# ---------------------------------------------------------------------------
# the main-theorem sweep
# ---------------------------------------------------------------------------

def theil_sen_slope(x: np.ndarray, y: np.ndarray) -> float:
    """Robust median-of-pairwise-slopes estimate (resonance-heavy data)."""
    return float(theilslopes(y, x)[0])


@dataclass
class BoundRow:
    E: float
    nu: float
    in_Z: bool
    norm_W: float
    norm_Omega: float
    ratio: float
    E_rho: float
    bhw_ratio: float            # ratio / E, the classical-benchmark column
    b_large: float
    b_small: float
    large: LargeModeReport | None
    small: SmallModeReport | None


@dataclass
class BoundReport:
    """Sweep of the non-concentration ratio against the predicted power law."""

    gamma: float
    eps: float
    c0: float
    rho_exponent: float
    rows: list[BoundRow]
    C_fit: float | None = None          # max lower-half ratio / E^rho over Z
    validation: float | None = None     # max upper-half ratio/(C_fit E^rho)
    slope_ratio: float | None = None    # Theil-Sen of log ratio vs log E on Z
    slope_large: float | None = None    # trend of the decaying-mode constant
    slope_small: float | None = None
    insufficient: bool = False
    n_in_Z: int = 0


def theorem_sweep(pairs: list[EigenPair], eps: float, c0: float | None,
                  gamma: float | None = None, M_large: float = 1.0,
                  M_small: float = 1.0, b0: float | None = None,
                  kmax: int | None = None) -> BoundReport:
    """Measure |u|_Omega / |u|_W against C * E^rho over a computed spectrum.

    The constant is fitted on the lower-energy half of the non-resonant pairs
    and validated on the upper half; both estimate constants are tracked for
    trend.  Needs >= 20 pairs spanning a decade to report fits; fewer pairs
    yield an insufficient-data report instead of an error.
    """
    if not pairs:
        raise ParameterError("no eigenpairs supplied")
    prof = pairs[0].grid.profile
    if gamma is None:
        gamma = prof.gamma
    rho_val = float(rho(gamma, eps))
    nu_vals = np.array([nu_distance(p.E, prof.L0, prof.B0).value
                        for p in pairs])
    if c0 is None:
        from .resonance import choose_c0
        c0 = choose_c0(nu_vals)

    rows = []
    for pair, nu_val in zip(pairs, nu_vals):
        E = pair.E
        w2 = restrict_norm(pair, 0.0, None)
        o2 = float(pair.U @ (pair.forms.M @ pair.U))
        ratio = math.sqrt(o2 / w2)
        decomp = ad.decompose(pair, kmax=kmax)
        chosen = choose_b(E, gamma, eps, M_large, M_small,
                          grid=pair.grid, b0=b0)
        fg = ad.compute_FG(pair, max(chosen.b_large, chosen.b_small),
                           kmax=decomp.kmax)
        fg_small = ad.compute_FG(pair, chosen.b_small, kmax=decomp.kmax) \
            if chosen.b_small != chosen.b_large else fg
        large = check_large_modes(pair, decomp, fg, chosen.b_large)
        small = check_small_modes(pair, decomp, fg_small, chosen.b_small,
                                  eps, c0)
        rows.append(BoundRow(
            E=E, nu=float(nu_val), in_Z=bool(nu_val >= c0 * E ** (-eps)),
            norm_W=math.sqrt(w2), norm_Omega=math.sqrt(o2), ratio=ratio,
            E_rho=E**rho_val, bhw_ratio=ratio / E,
            b_large=chosen.b_large, b_small=chosen.b_small,
            large=large, small=small))

    report = BoundReport(gamma=gamma, eps=eps, c0=float(c0),
                         rho_exponent=rho_val, rows=rows)
    zrows = [r for r in rows if r.in_Z]
    report.n_in_Z = len(zrows)
    energies = np.array([r.E for r in zrows])
    if len(zrows) < 20 or (energies.size and
                           energies.max() < 2.0 * energies.min()):
        report.insufficient = True
        return report

    order = np.argsort(energies)
    zrows = [zrows[i] for i in order]
    half = len(zrows) // 2
    lower, upper = zrows[:half], zrows[half:]
    report.C_fit = max(r.ratio / r.E_rho for r in lower)
    report.validation = max(r.ratio / (report.C_fit * r.E_rho) for r in upper)
    logE = np.log([r.E for r in zrows])
    report.slope_ratio = theil_sen_slope(logE, np.log([r.ratio for r in zrows]))
    cl = np.array([r.large.constant for r in zrows])
    cs = np.array([r.small.constant for r in zrows])
    ok_l = cl > 0
    ok_s = cs > 0
    if ok_l.sum() >= 10:
        report.slope_large = theil_sen_slope(logE[ok_l], np.log(cl[ok_l]))
    if ok_s.sum() >= 10:
        report.slope_small = theil_sen_slope(logE[ok_s], np.log(cs[ok_s]))
    return report
