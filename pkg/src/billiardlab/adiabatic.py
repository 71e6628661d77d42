"""Transverse mode analysis of eigenpairs on the transformed grid.

An eigenfunction is expanded in the x-dependent sine basis
u(x, y) = sum_k u_k(x) sin(k*pi*y/L(x)); in (s, t) coordinates the
coefficients are plain sine coefficients in t.  On the grid they are computed
with the type-I discrete sine transform of the nodal values, and every
quadratic form built from them uses the per-mode weights

    m_k = (2 + cos(k*pi*ht)) / 6          ->  1/2
    s_k = (1 - cos(k*pi*ht)) / ht**2      ->  k^2 pi^2 / 2

which are the exact eigenvalues of the 1D element mass/stiffness matrices on
the sine vectors.  With these weights the mode sums of the N and a forms
reproduce the assembled quadratic forms exactly when all nt-1 grid modes are
kept, so truncation error is the only discrepancy ever reported.

Derivative fields use one convention everywhere: nodal centered differences
(second-order one-sided at boundaries, i.e. numpy.gradient), mapped by the
chain rule du/dy = U_t/L and du/dx = U_s - t*(L'/L)*U_t.  Interval and region
norms of sampled fields use the trapezoid rule.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct, dst

from .discretize import EigenPair
from .errors import ParameterError, ResolutionError

DEFAULT_KMAX_EXTRA = 40


def kstar(E: float, L0: float) -> int:
    """Smallest k whose transverse energy k^2 pi^2/L0^2 - E reaches E.

    Modes with k >= kstar decay into the rectangle; a k sitting exactly on
    the threshold counts as large.
    """
    return int(math.ceil(L0 * math.sqrt(2.0 * E) / math.pi))


def mode_weights(nt: int, ks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(m_k, s_k) discrete mass/stiffness weights for mode indices ks."""
    ht = 1.0 / nt
    c = np.cos(ks * np.pi * ht)
    return (2.0 + c) / 6.0, (1.0 - c) / ht**2


def sine_coefficients(full_field: np.ndarray, nt: int) -> np.ndarray:
    """All nt-1 sine coefficients of each row of a full nodal array.

    Row i holds u(s_i, t_j); returns array (ns+1, nt-1) whose column k-1 is
    u_k(s_i) = 2*ht*sum_j u(s_i, t_j) sin(k*pi*t_j) (trapezoid = DST-I).
    """
    return dst(full_field[:, 1:nt], type=1, axis=1) / nt


def synthesize(coeffs: np.ndarray, ks: np.ndarray, nt: int) -> np.ndarray:
    """Nodal field sum_k coeffs[:, k] * sin(k*pi*t_j) for the given modes."""
    t = np.arange(nt + 1) / nt
    return coeffs @ np.sin(np.outer(ks, np.pi * t))  # (ns+1, nt+1)


def s_trapz_weights(grid, i_lo: int, i_hi: int) -> np.ndarray:
    """Trapezoid weights on the s-nodes i_lo..i_hi."""
    w = np.full(i_hi - i_lo + 1, grid.hs)
    w[0] = w[-1] = 0.5 * grid.hs
    return w


@dataclass
class ModeDecomposition:
    """Sampled mode coefficients of one eigenpair plus the large/small split."""

    pair: EigenPair
    kmax: int
    u_k: np.ndarray = field(repr=False)   # (kmax, ns+1) values on s-nodes
    kstar: int
    tail: float                           # squared N-mass beyond kmax

    @property
    def grid(self):
        return self.pair.grid

    def small_modes(self) -> np.ndarray:
        return np.arange(1, min(self.kstar, self.kmax + 1))

    def large_modes(self) -> np.ndarray:
        return np.arange(self.kstar, self.kmax + 1)


def decompose(pair: EigenPair, kmax: int | None = None) -> ModeDecomposition:
    """Mode coefficients u_k, k = 1..kmax, of an eigenpair.

    kmax defaults to kstar(E) + 40 (capped at the nt-1 grid modes); values
    below kstar(E) + 5 are rejected because the large/small split would be
    meaningless.
    """
    grid = pair.grid
    ks = kstar(pair.E, grid.profile.L0)
    if ks + 5 > grid.nt - 1:
        raise ResolutionError(
            f"grid has only {grid.nt - 1} transverse modes but kstar + 5 = "
            f"{ks + 5}; refine nt")
    if kmax is None:
        kmax = min(ks + DEFAULT_KMAX_EXTRA, grid.nt - 1)
    if kmax < ks + 5:
        raise ParameterError(
            f"kmax = {kmax} too small; need at least kstar + 5 = {ks + 5}")
    if kmax > grid.nt - 1:
        raise ParameterError(
            f"kmax = {kmax} exceeds the {grid.nt - 1} modes the grid carries")

    coeffs = sine_coefficients(pair.field(), grid.nt)  # (ns+1, nt-1)
    full_norm = float(pair.U @ (pair.forms.M @ pair.U))
    tail = full_norm - _n_mode_sum(pair.forms, coeffs, np.arange(1, kmax + 1))
    return ModeDecomposition(pair=pair, kmax=kmax,
                             u_k=coeffs[:, :kmax].T.copy(), kstar=ks,
                             tail=float(tail))


def _n_mode_sum(forms, coeffs, ks, cell_lo=0, cell_hi=None) -> float:
    """Mode-sum N form over cells [cell_lo, cell_hi) for coefficient array."""
    A = forms.s_tridiag("mass_L", cell_lo, cell_hi)
    D = coeffs[1:-1, ks - 1]
    m_k, _ = mode_weights(forms.grid.nt, ks)
    return float(np.einsum("ik,ik->", D * m_k[None, :], A @ D))


def _a_mode_sum(forms, coeffs, ks, cell_lo=0, cell_hi=None) -> float:
    C = forms.s_tridiag("stiff_L", cell_lo, cell_hi)
    Ash = forms.s_tridiag("mass_invL", cell_lo, cell_hi)
    D = coeffs[1:-1, ks - 1]
    m_k, s_k = mode_weights(forms.grid.nt, ks)
    return float(np.einsum("ik,ik->", D * m_k[None, :], C @ D)
                 + np.einsum("ik,ik->", D * s_k[None, :], Ash @ D))


@dataclass
class FormValues:
    """a_b and N_b by mode sum and by matrix quadratic form, with q_b."""

    b: float
    snap_distance: float
    kmax: int
    q_b: float
    a_b_matrix: float
    a_b_modes: float
    N_b_matrix: float
    N_b_modes: float

    @property
    def a_gap_rel(self) -> float:
        return abs(self.a_b_modes - self.a_b_matrix) / abs(self.a_b_matrix)

    @property
    def N_gap(self) -> float:
        return abs(self.N_b_modes - self.N_b_matrix)


def form_values(pair: EigenPair, b: float, kmax: int | None = None) -> FormValues:
    """Evaluate q_b, a_b, N_b over the cells with s <= b (b snapped to a node).

    The a and N forms are computed twice: as truncated mode sums (kmax=None
    keeps every grid mode, making the identity exact) and as the assembled
    quadratic forms; the discrepancy is the reported truncation error.
    """
    grid = pair.grid
    ib, b_snap, dist = grid.snap_s(b)
    if ib < 1:
        raise ParameterError(f"b = {b} snaps to the left domain end")
    if kmax is None:
        kmax = grid.nt - 1
    ks = np.arange(1, kmax + 1)
    coeffs = sine_coefficients(pair.field(), grid.nt)
    U = pair.U
    forms = pair.forms
    return FormValues(
        b=b_snap, snap_distance=dist, kmax=kmax,
        q_b=float(U @ (forms.region_Kq(0, ib) @ U)),
        a_b_matrix=float(U @ (forms.region_Ka(0, ib) @ U)),
        a_b_modes=_a_mode_sum(forms, coeffs, ks, 0, ib),
        N_b_matrix=float(U @ (forms.region_M(0, ib) @ U)),
        N_b_modes=_n_mode_sum(forms, coeffs, ks, 0, ib))


@dataclass
class GapCheck:
    """One evaluation of the gap functional against a test field."""

    lam: float                 # a_b(u, v) - q_b(u, v)
    bound: float               # delta_b(b) * sqrt(q_b(u) * q_b(v))
    quasi_gap: float           # |a_b(u, v) - E*N_b(u, v) - lam|
    quasi_tol: float           # residual-level bound on quasi_gap

    @property
    def within_bound(self) -> bool:
        return abs(self.lam) <= self.bound * (1 + 1e-12)

    @property
    def quasi_ok(self) -> bool:
        return self.quasi_gap <= self.quasi_tol


def gap_functional(pair: EigenPair, v: np.ndarray, b: float) -> GapCheck:
    """Gap Lambda(v) = a_b(u, v) - q_b(u, v) for v supported in s <= b.

    Verifies the norm-comparison bound |Lambda(v)| <= delta_b(b) *
    sqrt(q_b(u) q_b(v)) and the eigen-identity a_b(u, v) - E N_b(u, v) =
    Lambda(v) at residual-level tolerance.
    """
    from .geometry import delta_b as _delta_b

    grid = pair.grid
    forms = pair.forms
    ib, b_snap, _ = grid.snap_s(b)
    v = np.asarray(v, dtype=float)
    if v.shape == (grid.ns + 1, grid.nt + 1):
        v = v[1:grid.ns, 1:grid.nt].reshape(-1)
    if v.shape != (forms.ndof,):
        raise ParameterError("v must be an interior dof vector or full field")
    V2 = v.reshape(grid.ns - 1, grid.nt - 1)
    if ib <= grid.ns - 1 and np.any(V2[ib - 1:, :] != 0.0):
        raise ParameterError(
            f"v must vanish on cells with s > b = {b_snap} (nodes from index {ib})")

    U = pair.U
    Kav = forms.K_a @ v
    Kqv = forms.K_q @ v
    lam = float(U @ Kav - U @ Kqv)
    qb_u = float(U @ (forms.region_Kq(0, ib) @ U))
    qb_v = float(v @ Kqv)
    bound = _delta_b(grid.profile, min(b_snap, grid.profile.B1 * (1 - 1e-12))) \
        * math.sqrt(max(qb_u, 0.0) * max(qb_v, 0.0))
    Mv = forms.M @ v
    quasi_gap = abs(float(U @ Kav) - pair.E * float(U @ Mv) - lam)
    quasi_tol = max(pair.residual, 1e-14) * pair.E \
        * float(np.linalg.norm(forms.M @ U)) * float(np.linalg.norm(v)) * 10.0
    return GapCheck(lam=lam, bound=bound, quasi_gap=quasi_gap,
                    quasi_tol=quasi_tol)


# ---------------------------------------------------------------------------
# derivative fields and wing functionals
# ---------------------------------------------------------------------------

def derivative_fields(pair: EigenPair) -> tuple[np.ndarray, np.ndarray]:
    """(du/dx, du/dy) nodal fields via the documented difference convention."""
    grid = pair.grid
    U = pair.field()
    Us = np.gradient(U, grid.hs, axis=0)
    Ut = np.gradient(U, grid.ht, axis=1)
    L = grid.profile.L(grid.s)
    Lp = grid.profile.Lprime(grid.s)
    dy = Ut / L[:, None]
    dx = Us - grid.t[None, :] * (Lp / L)[:, None] * Ut
    return dx, dy


def region_field_norm2(grid, f: np.ndarray, i_lo: int, i_hi: int) -> float:
    """Trapezoid integral of f^2 * L(s) ds dt over s-nodes i_lo..i_hi."""
    ws = s_trapz_weights(grid, i_lo, i_hi)
    wt = np.full(grid.nt + 1, grid.ht)
    wt[0] = wt[-1] = 0.5 * grid.ht
    L = grid.profile.L(grid.s[i_lo:i_hi + 1])
    return float(np.einsum("i,j,ij->", ws * L, wt, f[i_lo:i_hi + 1] ** 2))


@dataclass
class FGData:
    """Wing functionals F_k, G_k sampled on the s-nodes of [0, b]."""

    b: float
    kmax: int
    s_index: tuple[int, int]           # (i0, ib) node range of the samples
    F: np.ndarray = field(repr=False)  # (kmax, ib - i0 + 1)
    G: np.ndarray = field(repr=False)
    F_norm2: np.ndarray = None         # per-mode squared L2(0, b) norms
    G_norm2: np.ndarray = None
    dx_norm2_wing: float = 0.0         # |du/dx|^2 over W_b, same quadrature
    dy_norm2_wing: float = 0.0

    @property
    def C_F(self) -> float:
        return float(np.sum(self.F_norm2) / self.dx_norm2_wing)

    @property
    def C_G(self) -> float:
        return float(np.sum(self.G_norm2) / self.dy_norm2_wing)


def compute_FG(pair: EigenPair, b: float, kmax: int | None = None) -> FGData:
    """Wing functionals of the comparison machinery.

    F_k(s) = 2 L(s) int_0^1 t (du/dx) cos(k pi t) dt  and
    G_k(s) = 2 int_0^1 t L(s) (du/dy) sin(k pi t) dt = 2 int t U_t sin dt,
    both via the trapezoid transforms (DCT-I / DST-I) of the nodal fields.
    """
    grid = pair.grid
    nt = grid.nt
    ib, b_snap, _ = grid.snap_s(b)
    if ib <= grid.i0:
        raise ParameterError(f"b = {b} snaps inside the rectangle")
    if kmax is None:
        kmax = min(kstar(pair.E, grid.profile.L0) + DEFAULT_KMAX_EXTRA, nt - 1)
    dx, _ = derivative_fields(pair)
    U = pair.field()
    Ut = np.gradient(U, grid.ht, axis=1)
    L = grid.profile.L(grid.s)

    sl = slice(grid.i0, ib + 1)
    f_field = grid.t[None, :] * dx[sl]                 # t * du/dx
    g_field = grid.t[None, :] * Ut[sl]                 # t * U_t = t * L * du/dy
    F_all = grid.ht * dct(f_field, type=1, axis=1) * L[sl, None]
    F = F_all[:, 1:kmax + 1].T.copy()
    G = (dst(g_field[:, 1:nt], type=1, axis=1) / nt)[:, :kmax].T.copy()

    ws = s_trapz_weights(grid, grid.i0, ib)
    F_norm2 = np.einsum("ks,s->k", F**2, ws)
    G_norm2 = np.einsum("ks,s->k", G**2, ws)
    dxn = region_field_norm2(grid, dx, grid.i0, ib)
    # |du/dy|^2 with the same interior-node t-sum the sine Parseval sees
    wt_int = np.full(nt - 1, grid.ht)
    dy_int = (Ut / L[:, None])[sl, 1:nt]
    dyn = float(np.einsum("i,j,ij->", ws * L[sl], wt_int, dy_int**2))
    return FGData(b=b_snap, kmax=kmax, s_index=(grid.i0, ib), F=F, G=G,
                  F_norm2=F_norm2, G_norm2=G_norm2,
                  dx_norm2_wing=dxn, dy_norm2_wing=dyn)


@dataclass
class ModeSplit:
    """Grid fields of the sub- and super-threshold parts of an eigenpair."""

    u_minus: np.ndarray = field(repr=False)
    u_plus: np.ndarray = field(repr=False)
    small: np.ndarray
    large: np.ndarray
    tail: float


def split_modes(decomp: ModeDecomposition, E: float | None = None) -> ModeSplit:
    """Split the decomposition at the decay threshold (ties go to u_plus)."""
    grid = decomp.grid
    if E is None:
        ks = decomp.kstar
    else:
        ks = kstar(E, grid.profile.L0)
    small = np.arange(1, min(ks, decomp.kmax + 1))
    large = np.arange(ks, decomp.kmax + 1)
    coeffs = decomp.u_k.T  # (ns+1, kmax)
    u_minus = synthesize(coeffs[:, small - 1], small, grid.nt) if small.size \
        else np.zeros((grid.ns + 1, grid.nt + 1))
    u_plus = synthesize(coeffs[:, large - 1], large, grid.nt) if large.size \
        else np.zeros((grid.ns + 1, grid.nt + 1))
    return ModeSplit(u_minus=u_minus, u_plus=u_plus, small=small, large=large,
                     tail=decomp.tail)


def field_region_mass(forms, field_: np.ndarray, cell_lo: int = 0,
                      cell_hi: int | None = None) -> float:
    """Assembly-quadrature squared mass of a full nodal field over s-cells."""
    grid = forms.grid
    v = field_[1:grid.ns, 1:grid.nt].reshape(-1)
    return float(v @ (forms.region_M(cell_lo, cell_hi) @ v))


def mode_interval_norm2(decomp: ModeDecomposition, k: int, i_lo: int,
                        i_hi: int) -> float:
    """Trapezoid squared L2 norm of u_k over s-nodes i_lo..i_hi."""
    w = s_trapz_weights(decomp.grid, i_lo, i_hi)
    vals = decomp.u_k[k - 1, i_lo:i_hi + 1]
    return float(np.sum(w * vals**2))
