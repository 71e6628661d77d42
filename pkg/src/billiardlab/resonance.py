"""Rectangle spectrum, resonance distance and the arithmetic helpers.

The rectangle R = [-B0, 0] x [0, L0] has Dirichlet spectrum
Sigma = {k^2 pi^2/L0^2 + l^2 pi^2/B0^2 : k, l >= 1}.  Energies far from Sigma
(distance nu(E) above a floor c0 * E^-eps) form the non-resonance sets where
the small-mode estimates apply.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass
class RectSpectrum:
    values: np.ndarray          # sorted, with multiplicity
    labels: np.ndarray          # (n, 2) ints, matching (k, l)
    cap: float
    empty_warning: bool = False


def rect_spectrum(L0: float, B0: float, cap: float) -> RectSpectrum:
    """All rectangle eigenvalues <= cap, sorted, with their (k, l) labels."""
    ground = math.pi**2 / L0**2 + math.pi**2 / B0**2
    if cap < ground:
        return RectSpectrum(values=np.empty(0), labels=np.empty((0, 2), int),
                            cap=cap, empty_warning=True)
    kmax = int(math.floor(L0 * math.sqrt(cap) / math.pi))
    lmax = int(math.floor(B0 * math.sqrt(cap) / math.pi))
    k, l = np.meshgrid(np.arange(1, kmax + 1), np.arange(1, lmax + 1),
                       indexing="ij")
    vals = (k * np.pi / L0) ** 2 + (l * np.pi / B0) ** 2
    keep = vals <= cap
    vals = vals[keep]
    labels = np.stack([k[keep], l[keep]], axis=1)
    order = np.argsort(vals, kind="stable")
    return RectSpectrum(values=vals[order], labels=labels[order], cap=cap)


@dataclass
class NuResult:
    value: float
    k: int
    l: int
    outside_margin: float  # how far every outside-the-box candidate exceeds nu


def _lattice_box(E: float, L0: float, B0: float, factor: int = 1):
    kmax = int(math.ceil(L0 * math.sqrt(2.0 * E) / math.pi)) + 1
    lmax = int(math.ceil(B0 * math.sqrt(2.0 * E) / math.pi)) + 1
    return max(1, factor * kmax), max(1, factor * lmax)


def nu(E: float, L0: float, B0: float) -> NuResult:
    """Distance from E to the rectangle spectrum, with the attaining (k, l).

    The minimum is taken over the finite box k <= ceil(L0 sqrt(2E)/pi) + 1,
    l <= ceil(B0 sqrt(2E)/pi) + 1; outside it every candidate lies above 2E
    while the box already contains one below E + ground level, so the true
    argmin is inside.  The logged margin quantifies that exclusion.
    """
    if E <= 0:
        raise ParameterError(f"E must be positive, got {E}")
    kmax, lmax = _lattice_box(E, L0, B0)
    k, l = np.meshgrid(np.arange(1, kmax + 1), np.arange(1, lmax + 1),
                       indexing="ij")
    vals = (k * np.pi / L0) ** 2 + (l * np.pi / B0) ** 2
    d = np.abs(E - vals)
    idx = np.unravel_index(np.argmin(d), d.shape)
    value = float(d[idx])
    # cheapest candidate beyond the box exceeds 2E + ground - E
    outside = (2.0 * E + math.pi**2 / L0**2 + math.pi**2 / B0**2) - E - value
    return NuResult(value=value, k=int(k[idx]), l=int(l[idx]),
                    outside_margin=float(outside))


def nu_bruteforce(E: float, L0: float, B0: float, factor: int = 3) -> float:
    """Oracle: same minimum over a lattice box enlarged by `factor`."""
    kmax, lmax = _lattice_box(E, L0, B0, factor=factor)
    k = np.arange(1, kmax + 1)
    l = np.arange(1, lmax + 1)
    vals = (k[:, None] * np.pi / L0) ** 2 + (l[None, :] * np.pi / B0) ** 2
    return float(np.min(np.abs(E - vals)))


def in_Z_eps(E: float, eps: float, c0: float, L0: float, B0: float) -> bool:
    """Whether nu(E) >= c0 * E^-eps (ties count as inside the set)."""
    if eps < 0 or c0 <= 0:
        raise ParameterError("need eps >= 0 and c0 > 0")
    return nu(E, L0, B0).value >= c0 * E ** (-eps)


@dataclass
class SinBound:
    c_measured: float
    z_k: float
    resonant_excluded: bool
    passes_floor: bool | None


def sin_lower_bound(E: float, k: int, beta: float, B0: float, L0: float,
                    floor: float | None = None) -> SinBound:
    """Achieved constant in |sin(B0 sqrt(z_k))| >= c * nu(E)/sqrt(z_k).

    z_k = E - k^2 pi^2 / L0^2 must be at least beta^2 (oscillatory regime);
    below that the caller must use the decaying-mode path instead.
    """
    z_k = E - (k * math.pi / L0) ** 2
    if z_k < beta**2:
        from .errors import RegimeError
        raise RegimeError(
            f"z_k = {z_k:.6g} < beta^2 = {beta**2:.6g}: not an oscillatory mode")
    nu_val = nu(E, L0, B0).value
    s = abs(math.sin(B0 * math.sqrt(z_k)))
    if nu_val == 0.0:
        return SinBound(c_measured=float("nan"), z_k=z_k,
                        resonant_excluded=True, passes_floor=None)
    c = s * math.sqrt(z_k) / nu_val
    return SinBound(c_measured=c, z_k=z_k, resonant_excluded=False,
                    passes_floor=None if floor is None else c >= floor)


def step_ratio(lam: float, alpha: float) -> float:
    """f(lambda) = (lambda + l(lambda)*alpha)/lambda with l the nearest
    multiple index; half-integer ties resolve to the smaller l."""
    if lam <= 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    if alpha <= 0:
        raise ParameterError(f"alpha must be positive, got {alpha}")
    q = lam / alpha
    l = math.floor(q + 0.5)
    if q + 0.5 == l:  # exact tie: keep the lower multiple
        l -= 1
    return (lam + l * alpha) / lam


def choose_c0(nu_values: np.ndarray, fraction: float = 0.3) -> float:
    """Largest c0 for which at least `fraction` of the energies satisfy
    nu(E) >= c0 (the run-reported default for the eps = 0 set)."""
    nu_sorted = np.sort(np.asarray(nu_values))[::-1]
    m = max(1, math.ceil(fraction * nu_sorted.size))
    return float(nu_sorted[m - 1])


@dataclass
class ResonanceReport:
    """Per-energy resonance data for a list of (eps, c0) set definitions."""

    E: float
    nu: float
    argmin_k: int
    argmin_l: int
    z_flags: dict  # (eps, c0) -> bool
    sin_constants: dict  # k -> measured c for the oscillatory small modes


def resonance_report(E: float, L0: float, B0: float,
                     eps_c0_list: list[tuple[float, float]],
                     beta: float) -> ResonanceReport:
    r = nu(E, L0, B0)
    flags = {(eps, c0): r.value >= c0 * E ** (-eps) for eps, c0 in eps_c0_list}
    sin_constants = {}
    kmax = int(math.floor(L0 * math.sqrt(max(E - beta**2, 0.0)) / math.pi))
    for k in range(1, kmax + 1):
        sb = sin_lower_bound(E, k, beta, B0, L0)
        if not sb.resonant_excluded:
            sin_constants[k] = sb.c_measured
    return ResonanceReport(E=E, nu=r.value, argmin_k=r.k, argmin_l=r.l,
                           z_flags=flags, sin_constants=sin_constants)
