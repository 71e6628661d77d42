"""Transformed-rectangle discretization and Dirichlet eigensolver.

The billiard is mapped onto the reference rectangle by (s, t) = (x, y/L(x)).
Under that map the energy form, the separated comparison form and the mass
form become

    q(u) = integral [ (U_s - t*(L'/L)*U_t)^2 + (U_t/L)^2 ] * L ds dt
    a(u) = integral [ U_s^2 + (U_t/L)^2 ] * L ds dt
    N(u) = integral U^2 * L ds dt

on a tensor grid of bilinear elements with 2x2 Gauss quadrature per cell.
Because the quadrature is a tensor product and the coefficients of a and N
depend on s only, both matrices factor exactly as Kronecker products of 1D
matrices; q picks up an extra cross term supported on wing cells only.  All
region restrictions reuse the same per-cell quadrature, which keeps norm
additivity exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._inertia import count_eigs_below
from .errors import (ConvergenceError, DegenerateGeometryError,
                     EmptyRegionError, ParameterError)
from .geometry import BilliardProfile

_GAUSS_XI = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
_GAUSS_W = np.array([0.5, 0.5])

DEFAULT_RESIDUAL_TOL = 1e-8
DENSE_CUTOFF = 4000
_CLUSTER_REL_GAP = 1e-6
_V0_SEED = 20260811


@dataclass(frozen=True)
class TensorGrid:
    """Uniform tensor grid on [-B0, B1] x [0, 1] with an s-node at s = 0."""

    profile: BilliardProfile
    ns: int
    nt: int
    s: np.ndarray = field(repr=False)
    t: np.ndarray = field(repr=False)
    i0: int  # index of the s-node sitting exactly at 0

    @property
    def hs(self) -> float:
        return float(self.s[1] - self.s[0])

    @property
    def ht(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def ndof(self) -> int:
        return (self.ns - 1) * (self.nt - 1)

    def node_index(self, x: float) -> int:
        """Index of the s-node nearest to x."""
        return int(round((x - self.s[0]) / self.hs))

    def snap_s(self, x: float) -> tuple[int, float, float]:
        """(node index, snapped coordinate, snap distance) for an s-value."""
        i = min(max(self.node_index(x), 0), self.ns)
        return i, float(self.s[i]), abs(float(self.s[i]) - x)

    def embed(self, u_dof: np.ndarray) -> np.ndarray:
        """Interior dof vector -> full nodal array with Dirichlet zeros."""
        full = np.zeros((self.ns + 1, self.nt + 1))
        full[1:self.ns, 1:self.nt] = u_dof.reshape(self.ns - 1, self.nt - 1)
        return full


def make_grid(profile: BilliardProfile, ns: int, nt: int) -> TensorGrid:
    """Build the grid; ns must place a node exactly on the interface s = 0."""
    if ns < 8 or nt < 8:
        raise ParameterError(f"need ns >= 8 and nt >= 8, got ({ns}, {nt})")
    total = profile.B0 + profile.B1
    h = total / ns
    ratio = profile.B0 / h
    i0 = int(round(ratio))
    if abs(ratio - i0) > 1e-9 or not 0 < i0 < ns:
        good = suggest_ns(profile, h)
        raise ParameterError(
            f"ns = {ns} puts no s-node at the interface x = 0; "
            f"nearest admissible values include {good}")
    s = (np.arange(ns + 1) - i0) * h
    s[i0] = 0.0
    t = np.arange(nt + 1) / nt
    return TensorGrid(profile=profile, ns=ns, nt=nt, s=s, t=t, i0=i0)


def suggest_ns(profile: BilliardProfile, target_h: float) -> list[int]:
    """A few admissible ns values near a target spacing."""
    out = []
    for m0 in range(1, 100000):
        h = profile.B0 / m0
        m1 = profile.B1 / h
        if abs(m1 - round(m1)) < 1e-9:
            ns = m0 + int(round(m1))
            if ns >= 8:
                out.append((abs(h - target_h), ns))
        if len(out) > 200 or h < target_h / 4:
            break
    out.sort()
    return [ns for _, ns in out[:4]]


def _cell_matrices_1d(grid: TensorGrid, w_gauss: np.ndarray):
    """Per-cell 2x2 mass and stiffness blocks with weight values at Gauss pts.

    w_gauss has shape (2, ns): the weight evaluated at both Gauss abscissae of
    every s-cell.  Returns (mass_cells, stiff_cells) of shape (ns, 2, 2).
    """
    hs = grid.hs
    ns = grid.ns
    mass = np.zeros((ns, 2, 2))
    stiff = np.zeros((ns, 2, 2))
    for q in range(2):
        xi = _GAUSS_XI[q]
        wq = _GAUSS_W[q] * hs * w_gauss[q]
        shp = np.array([1.0 - xi, xi])
        dsh = np.array([-1.0, 1.0]) / hs
        mass += wq[:, None, None] * np.outer(shp, shp)[None]
        stiff += wq[:, None, None] * np.outer(dsh, dsh)[None]
    return mass, stiff


def _tridiag_from_cells(cells: np.ndarray, n_nodes: int, lo: int, hi: int) -> sp.csr_matrix:
    """Assemble cell blocks for cell indices [lo, hi) into a tridiagonal."""
    diag = np.zeros(n_nodes)
    off = np.zeros(n_nodes - 1)
    np.add.at(diag, np.arange(lo, hi), cells[lo:hi, 0, 0])
    np.add.at(diag, np.arange(lo, hi) + 1, cells[lo:hi, 1, 1])
    np.add.at(off, np.arange(lo, hi), cells[lo:hi, 0, 1])
    return sp.diags([off, diag, off], [-1, 0, 1], format="csr")


def _fem1d_t(nt: int):
    """Exact 1D P1 mass and stiffness tridiagonals on [0, 1] (interior)."""
    ht = 1.0 / nt
    n = nt - 1
    Mt = sp.diags([np.full(n - 1, ht / 6), np.full(n, 2 * ht / 3),
                   np.full(n - 1, ht / 6)], [-1, 0, 1], format="csr")
    Kt = sp.diags([np.full(n - 1, -1 / ht), np.full(n, 2 / ht),
                   np.full(n - 1, -1 / ht)], [-1, 0, 1], format="csr")
    return Mt, Kt


@dataclass
class AssembledForms:
    """Sparse forms over interior dofs plus the 1D factors they came from."""

    grid: TensorGrid
    K_q: sp.csr_matrix
    K_a: sp.csr_matrix
    M: sp.csr_matrix
    area: float
    # (ns, 2, 2) per-cell blocks of the s-direction factors
    mass_L: np.ndarray = field(repr=False)      # weight L
    stiff_L: np.ndarray = field(repr=False)     # weight L
    mass_invL: np.ndarray = field(repr=False)   # weight 1/L
    mass_1: np.ndarray = field(repr=False)      # weight 1
    Mt: sp.csr_matrix = field(repr=False)
    Kt: sp.csr_matrix = field(repr=False)
    L_gauss: np.ndarray = field(repr=False)     # (2, ns)
    Lp_gauss: np.ndarray = field(repr=False)    # (2, ns)

    @property
    def ndof(self) -> int:
        return self.grid.ndof

    # -- 1D slices --------------------------------------------------------
    def s_tridiag(self, name: str, cell_lo: int = 0, cell_hi: int | None = None,
                  interior: bool = True) -> sp.csr_matrix:
        cells = {"mass_L": self.mass_L, "stiff_L": self.stiff_L,
                 "mass_invL": self.mass_invL, "mass_1": self.mass_1}[name]
        hi = self.grid.ns if cell_hi is None else cell_hi
        A = _tridiag_from_cells(cells, self.grid.ns + 1, cell_lo, hi)
        if interior:
            A = A[1:self.grid.ns, 1:self.grid.ns]
        return A

    # -- region-restricted 2D forms ---------------------------------------
    def region_M(self, cell_lo: int = 0, cell_hi: int | None = None) -> sp.csr_matrix:
        return sp.kron(self.s_tridiag("mass_L", cell_lo, cell_hi), self.Mt,
                       format="csr")

    def region_Ka(self, cell_lo: int = 0, cell_hi: int | None = None) -> sp.csr_matrix:
        return (sp.kron(self.s_tridiag("stiff_L", cell_lo, cell_hi), self.Mt)
                + sp.kron(self.s_tridiag("mass_invL", cell_lo, cell_hi),
                          self.Kt)).tocsr()

    def region_Kq(self, cell_lo: int = 0, cell_hi: int | None = None) -> sp.csr_matrix:
        return (self.region_Ka(cell_lo, cell_hi)
                + _cross_matrix(self.grid, self.L_gauss, self.Lp_gauss,
                                cell_lo, cell_hi)).tocsr()


def _cross_matrix(grid: TensorGrid, L_gauss, Lp_gauss,
                  cell_lo: int = 0, cell_hi: int | None = None) -> sp.csr_matrix:
    """The q - a correction, supported on cells where L' != 0.

    Integrand: [-tau*(L'/L)*(U_s V_t + U_t V_s) + tau^2*(L'/L)^2 U_t V_t] * L
    with tau the global t coordinate of the Gauss point.
    """
    ns, nt = grid.ns, grid.nt
    hs, ht = grid.hs, grid.ht
    hi = ns if cell_hi is None else cell_hi
    wing = np.arange(cell_lo, hi)
    wing = wing[np.abs(Lp_gauss[:, wing]).max(axis=0) > 0.0]
    n_int = grid.ndof
    if wing.size == 0:
        return sp.csr_matrix((n_int, n_int))

    tcells = np.arange(nt)
    # global interior dof ids of the 4 corners of cell (ic, jc); -1 = boundary
    def dof_id(i, j):
        ok = (i >= 1) & (i <= ns - 1) & (j >= 1) & (j <= nt - 1)
        return np.where(ok, (i - 1) * (nt - 1) + (j - 1), -1)

    IC, JC = np.meshgrid(wing, tcells, indexing="ij")
    ids = np.stack([dof_id(IC + di, JC + dj)
                    for di in (0, 1) for dj in (0, 1)], axis=-1)  # (nw, nt, 4)
    ids = ids.reshape(-1, 4)

    rows, cols, vals = [], [], []
    for q1 in range(2):
        Lv = L_gauss[q1][wing]
        c1 = Lp_gauss[q1][wing] / Lv
        xi = _GAUSS_XI[q1]
        for q2 in range(2):
            eta = _GAUSS_XI[q2]
            tau = (tcells + _GAUSS_XI[q2]) * ht
            w = _GAUSS_W[q1] * _GAUSS_W[q2] * hs * ht * Lv  # (nw,)
            # local bases ordered to match dof stacking: (0,0),(0,1),(1,0),(1,1)
            dsh_s = np.array([-(1 - eta), -eta, 1 - eta, eta]) / hs
            dsh_t = np.array([-(1 - xi), 1 - xi, -xi, xi]) / ht
            A4 = np.outer(dsh_s, dsh_t) + np.outer(dsh_t, dsh_s)
            B4 = np.outer(dsh_t, dsh_t)
            alpha = -np.outer(w * c1, tau)            # (nw, nt)
            beta = np.outer(w * c1**2, tau**2)
            blocks = (alpha.reshape(-1)[:, None, None] * A4[None]
                      + beta.reshape(-1)[:, None, None] * B4[None])
            rows.append(np.repeat(ids, 4, axis=1).reshape(-1))
            cols.append(np.tile(ids, (1, 4)).reshape(-1))
            vals.append(blocks.reshape(-1))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    keep = (rows >= 0) & (cols >= 0)
    X = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])),
                      shape=(n_int, n_int))
    return X.tocsr()


def assemble_forms(grid: TensorGrid) -> AssembledForms:
    """Assemble K_q, K_a, M over interior dofs (all four edges Dirichlet)."""
    prof = grid.profile
    sg = np.array([grid.s[:-1] + grid.hs * g for g in _GAUSS_XI])  # (2, ns)
    Lg = prof.L(sg)
    if np.any(Lg < 1e-6 * prof.L0):
        raise DegenerateGeometryError(
            "width drops below 1e-6 * L0 at a quadrature point; "
            "truncate the wing earlier")
    Lpg = prof.Lprime(sg)

    mass_L, stiff_L = _cell_matrices_1d(grid, Lg)
    mass_invL, _ = _cell_matrices_1d(grid, 1.0 / Lg)
    mass_1, _ = _cell_matrices_1d(grid, np.ones_like(Lg))
    Mt, Kt = _fem1d_t(grid.nt)

    forms = AssembledForms(
        grid=grid, K_q=None, K_a=None, M=None,
        area=float(np.sum(_GAUSS_W[:, None] * grid.hs * Lg)),
        mass_L=mass_L, stiff_L=stiff_L, mass_invL=mass_invL, mass_1=mass_1,
        Mt=Mt, Kt=Kt, L_gauss=Lg, Lp_gauss=Lpg)
    forms.K_a = forms.region_Ka()
    forms.M = forms.region_M()
    forms.K_q = (forms.K_a + _cross_matrix(grid, Lg, Lpg)).tocsr()
    return forms


@dataclass
class EigenPair:
    """One Dirichlet eigenpair on the transformed grid (M-normalized)."""

    E: float
    U: np.ndarray = field(repr=False)   # interior dof vector
    residual: float
    forms: AssembledForms = field(repr=False)
    possibly_unresolved: bool = False

    @property
    def grid(self) -> TensorGrid:
        return self.forms.grid

    def field(self) -> np.ndarray:
        """Full nodal array including Dirichlet boundary zeros."""
        return self.grid.embed(self.U)


def _fix_sign(v: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(v)))
    return v if v[i] > 0 else -v


def count_below(forms: AssembledForms, sigma: float) -> int:
    """Eigenvalue count of (K_q, M) strictly below sigma (LDL^T slicing)."""
    return count_eigs_below(forms.K_q, forms.M, sigma)


def _residuals(forms, E, V):
    KU = forms.K_q @ V
    MU = forms.M @ V
    num = np.linalg.norm(KU - MU * E[None, :], axis=0)
    den = np.abs(E) * np.linalg.norm(MU, axis=0)
    return num / den


def _solve_window_sparse(forms, lo, hi, m_expect, residual_tol):
    """All eigenpairs in [lo, hi) via shift-invert, count-verified."""
    n = forms.ndof
    Kc = forms.K_q.tocsc()
    Mc = forms.M.tocsc()
    sigma = 0.5 * (lo + hi)
    rng = np.random.default_rng(_V0_SEED)
    v0 = rng.standard_normal(n)
    k = min(m_expect + 3, n - 1)
    last_err = None
    for attempt in range(4):
        try:
            vals, vecs = spla.eigsh(Kc, k=k, M=Mc, sigma=sigma, which="LM",
                                    v0=v0, tol=1e-12, maxiter=5000)
        except spla.ArpackNoConvergence as exc:
            last_err = exc
            k = min(k + 10, n - 1)
            continue
        inside = (vals >= lo) & (vals < hi)
        if int(inside.sum()) == m_expect:
            order = np.argsort(vals[inside])
            return vals[inside][order], vecs[:, inside][:, order]
        # k eigenvalues nearest sigma did not cover the window: enlarge
        k = min(k + max(10, m_expect - int(inside.sum()) + 5), n - 1)
    raise ConvergenceError(
        f"window [{lo}, {hi}) expected {m_expect} eigenvalues; "
        f"iteration did not resolve them ({last_err})",
        best_residual=None)


def _split_windows(forms, lo, hi, max_block=60):
    """Bisect [lo, hi) until each sub-window holds <= max_block eigenvalues."""
    c_lo = count_below(forms, lo)
    c_hi = count_below(forms, hi)
    out = []

    def rec(a, b, ca, cb):
        if cb - ca == 0:
            return
        if cb - ca <= max_block:
            out.append((a, b, cb - ca))
            return
        mid = 0.5 * (a + b)
        cm = count_below(forms, mid)
        rec(a, mid, ca, cm)
        rec(mid, b, cm, cb)

    rec(lo, hi, c_lo, c_hi)
    return out, c_lo, c_hi


def _mark_clusters(pairs):
    for a, b in zip(pairs, pairs[1:]):
        if b.E - a.E < _CLUSTER_REL_GAP * max(abs(b.E), 1.0):
            a.possibly_unresolved = True
            b.possibly_unresolved = True


def solve_eigenpairs(forms: AssembledForms, window: tuple[float, float] | None = None,
                     count: int | None = None,
                     residual_tol: float = DEFAULT_RESIDUAL_TOL) -> list[EigenPair]:
    """Eigenpairs of K_q u = E M u, either all in [lo, hi) or the lowest m.

    Window completeness is certified by LDL^T inertia counts at both window
    edges.  Every returned pair is M-normalized, has relative residual below
    residual_tol, and carries a flag when it sits in a cluster tighter than
    1e-6 * E (such clusters may be unresolved rather than genuinely split).
    """
    if (window is None) == (count is None):
        raise ParameterError("give exactly one of window=(lo, hi) or count=m")
    if count is not None:
        if count < 1:
            raise ParameterError("count must be >= 1")
        hi = 4.0 * np.pi * (count + 2) / forms.area + 10.0
        while count_below(forms, hi) < count:
            hi *= 2.0
        pairs = solve_eigenpairs(forms, window=(0.0, hi),
                                 residual_tol=residual_tol)
        return pairs[:count]

    lo, hi = float(window[0]), float(window[1])
    if lo < 0 or hi <= lo:
        raise ParameterError(f"window must satisfy 0 <= lo < hi, got {window}")

    n = forms.ndof
    if n < DENSE_CUTOFF:
        vals, vecs = scipy.linalg.eigh(forms.K_q.toarray(), forms.M.toarray())
        inside = (vals >= lo) & (vals < hi)
        vals, vecs = vals[inside], vecs[:, inside]
    else:
        windows, _, _ = _split_windows(forms, lo, hi)
        vals_list, vecs_list = [], []
        for a, b, m in windows:
            va, ve = _solve_window_sparse(forms, a, b, m, residual_tol)
            vals_list.append(va)
            vecs_list.append(ve)
        if not vals_list:
            return []
        vals = np.concatenate(vals_list)
        vecs = np.concatenate(vecs_list, axis=1)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]

    if vals.size == 0:
        return []
    # M-normalize, fix signs, verify residuals
    mnorm = np.sqrt(np.einsum("ij,ij->j", vecs, forms.M @ vecs))
    vecs = vecs / mnorm[None, :]
    res = _residuals(forms, vals, vecs)
    bad = res > residual_tol
    if np.any(bad):
        raise ConvergenceError(
            f"{int(bad.sum())} eigenpairs exceed the residual tolerance "
            f"{residual_tol}", best_residual=float(res[bad].min()))
    pairs = [EigenPair(E=float(vals[j]), U=_fix_sign(vecs[:, j].copy()),
                       residual=float(res[j]), forms=forms)
             for j in range(vals.size)]
    _mark_clusters(pairs)
    return pairs


def restrict_norm(pair: EigenPair, s_lo: float | None = None,
                  s_hi: float | None = None) -> float:
    """Squared L2 mass of the pair over the cells with s in [s_lo, s_hi].

    Bounds are snapped to the nearest s-nodes (use grid.snap_s to inspect the
    snap distance); None means the corresponding domain end.  Evaluated with
    the assembly quadrature, so region masses add exactly.
    """
    g = pair.grid
    c_lo = 0 if s_lo is None else g.snap_s(s_lo)[0]
    c_hi = g.ns if s_hi is None else g.snap_s(s_hi)[0]
    if c_hi <= c_lo:
        raise EmptyRegionError(
            f"region [{s_lo}, {s_hi}] snaps to no grid cells")
    Mr = pair.forms.region_M(c_lo, c_hi)
    return float(pair.U @ (Mr @ pair.U))
