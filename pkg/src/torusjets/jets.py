"""Intermittent jets: cutoff profiles, placement, identities, norms.

Profiles follow the normalizations int phi^2 = 4 pi^2 over R^2 and
int psi^2 = 2 pi over R, with phi = -Laplacian(Phi).  Jets are built
from rescaled, periodized, shifted profiles

    psi_(xi)(t,x) = psi_{r_par}(n* r_perp lam (x.xi + mu t)),
    phi_(xi)(x)   = phi_{r_perp}(n* r_perp lam (x-a_xi).A,
                                 n* r_perp lam (x-a_xi).(xi x A)),
    W_(xi)        = xi psi_(xi) phi_(xi),
    V_(xi)        = xi psi_(xi) Phi_(xi) / (n*^2 lam^2),
    W^(c)_(xi)    = curl curl V_(xi) - W_(xi),

with shifts a_xi placed greedily on a lattice of pitch 2 r_perp so the
supports of {Phi_(xi)} are pairwise disjoint on the grid.

Time dependence is analytic (no time grid): all fields are evaluated
at an arbitrary time from the x.xi + mu t argument.
"""

from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad

from . import _kernels
from .spectral_core import FourierField3, curl, divergence

__all__ = [
    "CutoffProfiles",
    "JetFamily",
    "JetIdentityReport",
    "JetNormReport",
    "PlacementError",
    "QuadratureError",
    "ResolutionError",
    "StationaryPhaseReport",
    "build_cutoffs",
    "build_jet_family",
    "check_stationary_phase_product",
    "estimate_jet_norms",
    "fit_scaling_exponent",
    "verify_jet_identities",
]

TWO_PI = 2.0 * np.pi


class PlacementError(Exception):
    """No disjoint shift placement found; carries the overlap pairs."""

    def __init__(self, index, overlap_pairs):
        self.index = index
        self.overlap_pairs = tuple(overlap_pairs)
        super().__init__(
            "no disjoint placement for direction %d; overlapping pairs: %s"
            % (index, self.overlap_pairs)
        )


class QuadratureError(Exception):
    """Profile normalization quadrature did not converge."""


class ResolutionError(Exception):
    """Grid too coarse to resolve the r_perp scale; carries minimum n."""

    def __init__(self, n, minimum_n):
        self.minimum_n = minimum_n
        super().__init__(
            "grid n=%d cannot resolve the transverse jet scale; need n >= %d"
            % (n, minimum_n)
        )


def _wrap(z):
    """Wrap to the fundamental period [-pi, pi)."""
    return (z + np.pi) % TWO_PI - np.pi


def _fd4(fun, x, h):
    """Fourth-order centered first derivative of a callable."""
    return (-fun(x + 2 * h) + 8 * fun(x + h)
            - 8 * fun(x - h) + fun(x - 2 * h)) / (12.0 * h)


# ---------------------------------------------------------------------------
# cutoff profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CutoffProfiles:
    """Normalized C-infinity cutoff profiles on the unit ball.

    ``Phi`` is c_phi times the radial bump exp(-s/(1-|x|^2)); ``phi`` is
    its negated Laplacian (so phi = -Laplacian(Phi) holds exactly at the
    level of the analytic formulas); ``psi`` is the odd profile
    c_psi * u * exp(-s/(1-u^2)).
    """

    steepness: float
    smoothness_order: int
    c_phi: float
    c_psi: float
    quad_errors: tuple

    def Phi(self, u, v):
        return self.c_phi * _kernels.bump2d_Phi(u, v, self.steepness)

    def phi(self, u, v):
        return self.c_phi * _kernels.bump2d_phi(u, v, self.steepness)

    def psi(self, u):
        return self.c_psi * _kernels.bump1d_psi(u, self.steepness)

    def dpsi(self, u):
        return self.c_psi * _kernels.bump1d_dpsi(u, self.steepness)

    def psi_deriv(self, u, order, h=1e-3):
        """order-th derivative of psi; orders >= 2 by nested FD."""
        if order == 0:
            return self.psi(u)
        if order == 1:
            return self.dpsi(u)
        return _fd4(lambda x: self.psi_deriv(x, order - 1, h), u, h)

    def phi_partial(self, u, v, du, dv, h=1e-3):
        """Mixed partial d^du_u d^dv_v of phi by nested FD."""
        if du > 0:
            return _fd4(lambda x: self.phi_partial(x, v, du - 1, dv, h), u, h)
        if dv > 0:
            return _fd4(lambda x: self.phi_partial(u, x, 0, dv - 1, h), v, h)
        return self.phi(u, v)

    def Phi_partial(self, u, v, du, dv, h=1e-3):
        """Mixed partial d^du_u d^dv_v of Phi by nested FD."""
        if du > 0:
            return _fd4(lambda x: self.Phi_partial(x, v, du - 1, dv, h), u, h)
        if dv > 0:
            return _fd4(lambda x: self.Phi_partial(u, x, 0, dv - 1, h), v, h)
        return self.Phi(u, v)


def _checked_quad(fun, a, b):
    val, err = quad(fun, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)
    if not np.isfinite(val) or err > 1e-9 * max(1.0, abs(val)):
        raise QuadratureError(
            "profile quadrature did not converge (value %r, error %r)"
            % (val, err)
        )
    return val, err


def build_cutoffs(smoothness_order=4, steepness=1.0):
    """Construct normalized cutoff profiles.

    The profiles are C-infinity bumps (smooth to every order); the
    ``smoothness_order`` argument states the minimum order the caller
    relies on and must be at least 4.
    """
    if smoothness_order < 4:
        raise ValueError("smoothness_order must be >= 4")
    s = float(steepness)

    # int_{R^2} (Laplacian Phi0)^2 = 2 pi int_0^1 (Delta b)^2 r dr for the
    # radial bump b; scale Phi0 by c_phi = 2 pi / sqrt(I) so that
    # phi = -Laplacian(c_phi Phi0) has int phi^2 = 4 pi^2 exactly.
    def lap_sq(r):
        return _kernels.bump2d_phi(np.array([r]), np.array([0.0]), s)[0] ** 2

    i_phi, e_phi = _checked_quad(lambda r: lap_sq(r) * TWO_PI * r, 0.0, 1.0)
    c_phi = TWO_PI / np.sqrt(i_phi)

    def psi0_sq(u):
        return _kernels.bump1d_psi(np.array([u]), s)[0] ** 2

    i_psi, e_psi = _checked_quad(psi0_sq, -1.0, 1.0)
    c_psi = np.sqrt(TWO_PI / i_psi)

    return CutoffProfiles(
        steepness=s,
        smoothness_order=int(smoothness_order),
        c_phi=c_phi,
        c_psi=c_psi,
        quad_errors=(e_phi, e_psi),
    )


# ---------------------------------------------------------------------------
# jet family
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JetFamily:
    """Intermittent jets for every direction of a DirectionSet.

    Fields are evaluated analytically at any time; nothing bulky is
    cached.  ``shifts`` holds the transverse shift of each family in the
    wrapped profile-argument coordinates (period 2 pi).
    """

    profiles: CutoffProfiles
    directions: object
    r_perp: float
    r_par: float
    lam: float
    mu: float
    grid: object
    shifts: tuple
    build_time: float
    build_report: dict = field(compare=False, repr=False)

    def __len__(self):
        return len(self.directions)

    @property
    def n_star(self):
        return self.directions.n_star

    @property
    def arg_rate(self):
        """Common argument rate n* r_perp lam."""
        return self.n_star * self.r_perp * self.lam

    def _frame(self, i):
        xi, a, b = self.directions.frame(i)
        return (np.asarray(xi, float), np.asarray(a, float),
                np.asarray(b, float))

    def _transverse_args(self, i):
        xi, a, b = self._frame(i)
        x1, x2, x3 = self.grid.x
        c = self.arg_rate
        u0, v0 = self.shifts[i]
        u = _wrap(c * (x1 * a[0] + x2 * a[1] + x3 * a[2]) - u0)
        v = _wrap(c * (x1 * b[0] + x2 * b[1] + x3 * b[2]) - v0)
        return u, v

    def _parallel_arg(self, i, t):
        xi, _, _ = self._frame(i)
        x1, x2, x3 = self.grid.x
        c = self.arg_rate
        return _wrap(c * (x1 * xi[0] + x2 * xi[1] + x3 * xi[2] + self.mu * t))

    def psi(self, i, t):
        w = self._parallel_arg(i, t)
        return self.profiles.psi(w / self.r_par) / np.sqrt(self.r_par)

    def dpsi(self, i, t):
        """Derivative of psi_(xi) with respect to its wrapped argument."""
        w = self._parallel_arg(i, t)
        return self.profiles.dpsi(w / self.r_par) / self.r_par ** 1.5

    def phi(self, i):
        u, v = self._transverse_args(i)
        return self.profiles.phi(u / self.r_perp, v / self.r_perp) / self.r_perp

    def Phi(self, i):
        u, v = self._transverse_args(i)
        return self.profiles.Phi(u / self.r_perp, v / self.r_perp) / self.r_perp

    def support_mask(self, i):
        u, v = self._transverse_args(i)
        return u * u + v * v < self.r_perp ** 2

    def renormalization(self, i, t):
        """Factor c with grid-mean of c * (phi psi)^2 equal to one.

        The continuum mean of phi_(xi)^2 psi_(xi)^2 is exactly one; on a
        finite grid aliasing of the narrow tubes shifts it.  Products
        entering the convex-integration algebra use the renormalized
        samples so the discrete quadrature identities are exact.
        """
        q = (self.phi(i) * self.psi(i, t)) ** 2
        mean = float(np.mean(q))
        if mean <= 0.0:
            raise ResolutionError(self.grid.n, self.minimum_resolution())
        return 1.0 / mean

    def minimum_resolution(self):
        """Smallest grid size resolving the transverse tube scale."""
        return int(np.ceil(8.0 * self.n_star * self.lam))

    def Q(self, i, t, renormalized=True):
        """Samples of phi_(xi)^2 psi_(xi)^2 (grid mean one if renormalized)."""
        q = (self.phi(i) * self.psi(i, t)) ** 2
        if renormalized:
            q = q / np.mean(q)
        return q

    def W(self, i, t, renormalized=True):
        """Samples of the intermittent jet xi psi_(xi) phi_(xi), shape (3,n,n,n)."""
        xi, _, _ = self._frame(i)
        w = self.phi(i) * self.psi(i, t)
        if renormalized:
            w = w * np.sqrt(self.renormalization(i, t))
        return xi[:, None, None, None] * w[None]

    def V(self, i, t, renormalized=True):
        """Samples of xi psi_(xi) Phi_(xi) / (n*^2 lam^2)."""
        xi, _, _ = self._frame(i)
        v = self.Phi(i) * self.psi(i, t) / (self.n_star * self.lam) ** 2
        if renormalized:
            v = v * np.sqrt(self.renormalization(i, t))
        return xi[:, None, None, None] * v[None]

    def Wc(self, i, t, renormalized=True):
        """Discrete corrector curl curl V_(xi) - W_(xi) (spectral curl)."""
        v = FourierField3.from_samples(self.grid, self.V(i, t, renormalized))
        return curl(curl(v)).values() - self.W(i, t, renormalized)

    def Wc_analytic(self, i, t):
        """Corrector via nabla psi / (n* lam)^2 x curl(Phi xi).

        Evaluates the closed form psi'_(xi) grad Phi_(xi) / (arg-rate
        bookkeeping); resolution-independent but not used in the
        discrete telescoping algebra.
        """
        xi, a, b = self._frame(i)
        u, v = self._transverse_args(i)
        dpu = self.profiles.Phi_partial(
            u / self.r_perp, v / self.r_perp, 1, 0) / self.r_perp ** 2
        dpv = self.profiles.Phi_partial(
            u / self.r_perp, v / self.r_perp, 0, 1) / self.r_perp ** 2
        dps = self.dpsi(i, t)
        grad_phi = (a[:, None, None, None] * dpu[None]
                    + b[:, None, None, None] * dpv[None])
        # nabla psi / (n* lam)^2 x curl(Phi xi) collapses to
        # r_perp^2 psi'_(xi) grad Phi_(xi) since xi x (w x xi) = w for
        # w orthogonal to xi.
        return self.r_perp ** 2 * dps[None] * grad_phi

    def jet_mean(self, i):
        """Continuum mean of W_(xi) via the factorized profile quadrature.

        The frame map is measure preserving, so the torus average splits
        into the product of the transverse and parallel profile means;
        the parallel profile is odd, hence the mean vanishes.
        """
        p = self.profiles
        m_perp, _ = _checked_quad(
            lambda r: p.phi(np.array([r]), np.array([0.0]))[0]
            * TWO_PI * r, 0.0, 1.0)
        m_par, _ = _checked_quad(lambda u: p.psi(np.array([u]))[0], -1.0, 1.0)
        xi = np.asarray(self.directions.xi[i], float)
        return xi * (self.r_perp * m_perp / (4 * np.pi ** 2)) \
            * (np.sqrt(self.r_par) * m_par / TWO_PI)

    def transport_rate(self, i, t):
        """Samples of (xi . grad)(phi^2 psi^2) via the analytic chain rule."""
        w = self._parallel_arg(i, t)
        dq_par = 2.0 * self.profiles.psi(w / self.r_par) * \
            self.profiles.dpsi(w / self.r_par) / self.r_par ** 2
        return self.phi(i) ** 2 * dq_par * self.arg_rate

    def fields_at(self, t, renormalized=False):
        """Materialize all per-direction fields at time ``t``."""
        out = []
        for i in range(len(self)):
            out.append({
                "psi": self.psi(i, t),
                "phi": self.phi(i),
                "Phi": self.Phi(i),
                "W": self.W(i, t, renormalized),
                "Wc": self.Wc(i, t, renormalized),
                "V": self.V(i, t, renormalized),
            })
        return out


def _greedy_placement(directions, grid, r_perp, lam):
    """Greedy shift placement on a lattice of pitch 2 r_perp.

    Shifts are chosen in deterministic order over the direction set; the
    first lattice candidate whose tube support does not meet any
    already-placed family is taken.
    """
    n_star = directions.n_star
    c = n_star * r_perp * lam
    x1, x2, x3 = grid.x
    pitch = 2.0 * r_perp
    n_cand = int(np.floor(TWO_PI / pitch))
    masks = []
    shifts = []
    occupied = np.zeros((grid.n,) * 3, dtype=bool)
    for i in range(len(directions)):
        _, a, b = directions.frame(i)
        a = np.asarray(a, float)
        b = np.asarray(b, float)
        u_base = c * (x1 * a[0] + x2 * a[1] + x3 * a[2])
        v_base = c * (x1 * b[0] + x2 * b[1] + x3 * b[2])
        placed = False
        blockers = set()
        for iu in range(n_cand):
            for iv in range(n_cand):
                u0, v0 = iu * pitch, iv * pitch
                mask = (_wrap(u_base - u0) ** 2
                        + _wrap(v_base - v0) ** 2) < r_perp ** 2
                if not (mask & occupied).any():
                    occupied |= mask
                    masks.append(mask)
                    shifts.append((u0, v0))
                    placed = True
                    break
                for j, mj in enumerate(masks):
                    if (mask & mj).any():
                        blockers.add((j, i))
            if placed:
                break
        if not placed:
            raise PlacementError(i, sorted(blockers))
    return shifts, masks


def build_jet_family(profiles, directions, scales, grid, time=0.0):
    """Build the jet family on ``grid`` for the given toy or ledger scales.

    ``scales`` maps ``r_perp``, ``r_par``, ``lam``, ``mu`` to floats with
    lam * r_perp a positive integer and r_perp < r_par < 1.
    """
    from .ledger import LedgerError

    r_perp = float(scales["r_perp"])
    r_par = float(scales["r_par"])
    lam = float(scales["lam"])
    mu = float(scales["mu"])
    prod = lam * r_perp
    if abs(prod - round(prod)) > 1e-12 or round(prod) < 1:
        raise LedgerError(
            "lam * r_perp must be a positive integer, got %r" % prod)
    if not (0.0 < r_perp < r_par < 1.0):
        raise LedgerError(
            "need 0 < r_perp < r_par < 1, got r_perp=%r r_par=%r"
            % (r_perp, r_par))

    shifts, masks = _greedy_placement(directions, grid, r_perp, lam)

    # Disjointness verification on the grid (exact: profile samples are
    # identically zero outside the masks).
    overlap = []
    for i in range(len(masks)):
        for j in range(i + 1, len(masks)):
            if (masks[i] & masks[j]).any():
                overlap.append((i, j))
    if overlap:
        raise PlacementError(-1, overlap)

    report = {
        "fill_fraction": float(np.mean([m.mean() for m in masks])),
        "support_cells": [int(m.sum()) for m in masks],
        "shifts": tuple(shifts),
    }
    fam = JetFamily(
        profiles=profiles,
        directions=directions,
        r_perp=r_perp,
        r_par=r_par,
        lam=lam,
        mu=mu,
        grid=grid,
        shifts=tuple(shifts),
        build_time=float(time),
        build_report=report,
    )
    # Materialize the build-time factors once; directions whose narrow
    # tube misses every grid point record None (fields vanish on the
    # grid; renormalized products are then unavailable at this n).
    factors = []
    for i in range(len(fam)):
        try:
            factors.append(fam.renormalization(i, time))
        except ResolutionError:
            factors.append(None)
    report["renormalization"] = tuple(factors)
    return fam


# ---------------------------------------------------------------------------
# identities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JetIdentityReport:
    """Residuals of the defining jet identities (relative, worst over xi)."""

    residual_div: float          # (i)  div(W + Wc) = 0
    residual_curlcurl: float     # (ii) curl curl V = W + Wc
    residual_transport: float    # (iii) div(W (x) W) = mu^-1 d_t(phi^2 psi^2 xi)
    residual_geometry: float     # (iv) (B.5) at R = Id through geometry.gamma
    renormalization: tuple       # grid-mean correction factors
    quadrature_geometry: float   # (iv) via continuum profile quadrature
    corrector_mismatch: float    # discrete vs analytic corrector (info only)


def verify_jet_identities(family, t=None, solver=None):
    """Verify the jet identities (i)-(iv) and report relative residuals."""
    from .geometry import build_gamma_solver

    if t is None:
        t = family.build_time
    if solver is None:
        solver = build_gamma_solver(family.directions)
    g = family.grid

    res_div = 0.0
    res_cc = 0.0
    res_transport = 0.0
    corr_mismatch = 0.0
    renorms = []
    second_moment = np.zeros((3, 3))
    for i in range(len(family)):
        w = family.W(i, t)
        wc = family.Wc(i, t)
        v = FourierField3.from_samples(g, family.V(i, t))
        scale = float(np.max(np.abs(w))) or 1.0

        # (i): div(W + Wc) = div curl curl V, zero by multiplier algebra.
        ccv = curl(curl(v))
        dvg = divergence(ccv)
        denom = float(np.max(np.abs(ccv.coeffs))) * g.n or 1.0
        res_div = max(res_div, float(np.max(np.abs(dvg))) / denom)

        # (ii): curl curl V - (W + Wc) = 0 by the discrete definition of Wc.
        res_cc = max(res_cc, float(np.max(np.abs(ccv.values() - w - wc))) / scale)

        # (iii): div(W (x) W) = mu^-1 d_t(phi^2 psi^2 xi).  Left side via
        # the analytic chain rule along xi; right side via high-order
        # finite differences of the analytic time dependence.
        xi = np.asarray(family.directions.xi[i], float)
        lhs = family.transport_rate(i, t)
        h = 1e-3 * family.r_par / (family.arg_rate * family.mu)

        def q_raw(s, i=i):
            return (family.phi(i) * family.psi(i, s)) ** 2

        rhs = _fd4(q_raw, t, h) / family.mu
        qscale = float(np.max(np.abs(lhs))) or 1.0
        res_transport = max(
            res_transport, float(np.max(np.abs(lhs - rhs))) / qscale)

        # (iv) accumulation: grid quadrature of W (x) W (renormalized).
        second_moment += float(np.mean(family.Q(i, t))) * \
            solver.gamma(np.eye(3))[i] ** 2 * np.outer(xi, xi)

        renorms.append(family.renormalization(i, t))

        wc_an = family.Wc_analytic(i, t)
        wcs = float(np.max(np.abs(wc_an))) or 1.0
        corr_mismatch = max(
            corr_mismatch, float(np.max(np.abs(wc - wc_an))) / wcs)

    res_geom = float(np.max(np.abs(second_moment - np.eye(3))))

    # (iv) again via the continuum profile quadrature (independent of the
    # grid): the jet second moment is the product of the profile masses.
    p = family.profiles
    mass_perp, _ = _checked_quad(
        lambda r: p.phi(np.array([r]), np.array([0.0]))[0] ** 2
        * TWO_PI * r, 0.0, 1.0)
    mass_par, _ = _checked_quad(
        lambda u: p.psi(np.array([u]))[0] ** 2, -1.0, 1.0)
    quad_geom = abs(mass_perp / (4 * np.pi ** 2) * mass_par / TWO_PI - 1.0)

    return JetIdentityReport(
        residual_div=res_div,
        residual_curlcurl=res_cc,
        residual_transport=res_transport,
        residual_geometry=res_geom,
        renormalization=tuple(renorms),
        quadrature_geometry=quad_geom,
        corrector_mismatch=corr_mismatch,
    )


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JetNormReport:
    """Measured L^p norms of jet derivative fields and predicted bounds."""

    N: int
    M: int
    p: float
    measured: dict
    predicted: dict
    ratio: dict
    method: str


def _gauss_nodes(n, lo=-1.0, hi=1.0):
    x, w = leggauss(n)
    return 0.5 * (hi - lo) * x + 0.5 * (hi + lo), 0.5 * (hi - lo) * w


def _psi_table(profiles, order, nodes):
    return profiles.psi_deriv(nodes, order)


def _norm_psi(family, N, M, p, nq=200):
    """Exact factorized L^p norm of grad^N d_t^M psi_(xi)."""
    s, ws = _gauss_nodes(nq)
    tab = np.abs(_psi_table(family.profiles, N + M, s))
    c = family.arg_rate / family.r_par
    amp = c ** N * (c * family.mu) ** M / np.sqrt(family.r_par)
    integral = np.sum(ws * (amp * tab / family.r_par ** 0) ** p)
    # measure factor: fint_{T^3} reduces to (r_par / 2 pi) int du
    return (TWO_PI ** 3 * family.r_par / TWO_PI * integral) ** (1.0 / p)


def _norm_transverse(family, which, N, p, nq=160):
    """Exact factorized L^p norm of grad^N phi_(xi) or grad^N Phi_(xi)."""
    prof = family.profiles
    part = prof.phi_partial if which == "phi" else prof.Phi_partial
    u, wu = _gauss_nodes(nq)
    uu, vv = np.meshgrid(u, u, indexing="ij")
    wgt = np.outer(wu, wu)
    c = family.arg_rate / family.r_perp  # = n* lam
    mag_sq = np.zeros_like(uu)
    for a in range(N + 1):
        b = N - a
        d = part(uu, vv, a, b) / family.r_perp
        mag_sq += comb(N, a) * d * d
    mag = c ** N * np.sqrt(mag_sq)
    integral = np.sum(wgt * mag ** p)
    return (TWO_PI ** 3 * family.r_perp ** 2 / (TWO_PI ** 2)
            * integral) ** (1.0 / p)


def _norm_jet(family, which, N, M, p, nq2=120, nq1=200):
    """Factorized L^p norm of grad^N d_t^M of W, V, or Wc.

    Works in profile coordinates where spatial derivatives along the
    orthonormal frame split into transverse partials of the 2D profile
    and parallel derivatives of the 1D profile; the Frobenius norm of
    the derivative tensor is a multinomial sum of separable squares.
    """
    prof = family.profiles
    u, wu = _gauss_nodes(nq2)
    s, ws = _gauss_nodes(nq1)
    uu, vv = np.meshgrid(u, u, indexing="ij")
    wgt2 = np.outer(wu, wu)

    c_perp = family.arg_rate / family.r_perp
    c_par = family.arg_rate / family.r_par
    c_time = c_par * family.mu

    if which == "W":
        def trans_sq(a, b):
            d = prof.phi_partial(uu, vv, a, b) / family.r_perp
            return d * d
        extra_par = 0
        overall = 1.0
    elif which == "V":
        def trans_sq(a, b):
            d = prof.Phi_partial(uu, vv, a, b) / family.r_perp
            return d * d
        extra_par = 0
        overall = 1.0 / (family.n_star * family.lam) ** 2
    elif which == "Wc":
        # Wc = psi'(s) (A d_p Phi + B d_q Phi)(p,q) / r_par^{3/2}; the two
        # frame components are orthogonal so their squares add.
        def trans_sq(a, b):
            d1 = prof.Phi_partial(uu, vv, a + 1, b)
            d2 = prof.Phi_partial(uu, vv, a, b + 1)
            return d1 * d1 + d2 * d2
        extra_par = 1
        overall = 1.0
    else:
        raise ValueError("unknown jet field %r" % which)

    total_sq = None
    for a in range(N + 1):
        for b in range(N + 1 - a):
            gnum = N - a - b
            mult = factorial(N) / (factorial(a) * factorial(b)
                                   * factorial(gnum))
            t2 = trans_sq(a, b)
            p1 = prof.psi_deriv(s, gnum + M + extra_par) / \
                np.sqrt(family.r_par)
            if which == "Wc":
                # one extra 1/r_par from the psi'_(xi) value scale
                p1 = p1 / family.r_par
            coeff = mult * c_perp ** (2 * (a + b)) * c_par ** (2 * gnum) \
                * c_time ** (2 * M)
            term = coeff * t2[:, :, None] * (p1 * p1)[None, None, :]
            total_sq = term if total_sq is None else total_sq + term
    mag = overall * np.sqrt(total_sq)
    wgt3 = wgt2[:, :, None] * ws[None, None, :]
    integral = np.sum(wgt3 * mag ** p)
    return (TWO_PI ** 3 * family.r_perp ** 2 * family.r_par
            / TWO_PI ** 3 * integral) ** (1.0 / p)


def _norm_grid(family, which, N, M, p, t):
    """Grid-quadrature L^p norm; only meaningful on resolving grids."""
    if family.grid.n < family.minimum_resolution():
        raise ResolutionError(family.grid.n, family.minimum_resolution())
    if N > 0 or M > 0:
        raise ValueError("grid method supports N = M = 0 only")
    fields = {
        "psi": lambda: family.psi(0, t)[None],
        "phi": lambda: family.phi(0)[None],
        "Phi": lambda: family.Phi(0)[None],
        "W": lambda: family.W(0, t, renormalized=False),
        "Wc": lambda: family.Wc(0, t, renormalized=False),
        "V": lambda: family.V(0, t, renormalized=False),
    }
    f = fields[which]()
    mag = np.sqrt(np.sum(f * f, axis=0))
    return float((family.grid.cell_volume * np.sum(mag ** p)) ** (1.0 / p))


def _predictions(family, N, M, p):
    rp, rl, lam, mu = family.r_perp, family.r_par, family.lam, family.mu
    time_f = (rp * lam * mu / rl) ** M
    pred = {
        "psi": rl ** (1.0 / p - 0.5) * (rp * lam / rl) ** N * time_f,
        "phi": rp ** (2.0 / p - 1.0) * lam ** N,
        "Phi": rp ** (2.0 / p - 1.0) * lam ** N,
        "W": rp ** (2.0 / p - 1.0) * rl ** (1.0 / p - 0.5)
        * lam ** N * time_f,
    }
    pred["Wc"] = rp / rl * pred["W"]
    pred["V"] = pred["W"] / lam ** 2
    return pred


def estimate_jet_norms(family, N, M, p, method="quadrature", t=None):
    """Measure L^p norms of grad^N d_t^M of the jet fields.

    ``method="quadrature"`` evaluates the factorized profile-space
    integrals (resolution independent); ``method="grid"`` uses the 3D
    grid quadrature and rejects grids that cannot resolve the transverse
    scale (and supports N = M = 0 only).
    """
    if N < 0 or M < 0 or N + M > 3:
        raise ValueError("need N, M >= 0 with N + M <= 3")
    if t is None:
        t = family.build_time
    measured = {}
    if method == "quadrature":
        measured["psi"] = _norm_psi(family, N, M, p)
        if M == 0:
            measured["phi"] = _norm_transverse(family, "phi", N, p)
            measured["Phi"] = _norm_transverse(family, "Phi", N, p)
        for which in ("W", "Wc", "V"):
            measured[which] = _norm_jet(family, which, N, M, p)
    elif method == "grid":
        for which in ("psi", "phi", "Phi", "W", "Wc", "V"):
            measured[which] = _norm_grid(family, which, N, M, p, t)
    else:
        raise ValueError("method must be 'quadrature' or 'grid'")
    predicted = _predictions(family, N, M, p)
    ratio = {k: measured[k] / predicted[k] for k in measured}
    return JetNormReport(N=N, M=M, p=float(p), measured=measured,
                         predicted=predicted, ratio=ratio, method=method)


def fit_scaling_exponent(values, scales):
    """Least-squares slope of log(values) against log(scales)."""
    x = np.log(np.asarray(scales, float))
    y = np.log(np.asarray(values, float))
    return float(np.polyfit(x, y, 1)[0])


# ---------------------------------------------------------------------------
# stationary phase product bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StationaryPhaseReport:
    """Measured product-norm ratio and stationary-phase hypotheses."""

    ratio: float
    hypothesis_slow_fast: bool   # 2 pi sqrt(3) zeta / kappa <= 1/3
    hypothesis_power: bool       # zeta^N <= kappa^(N-2)
    flagged: bool
    zeta: float
    kappa: float
    N: int


def check_stationary_phase_product(f, g, c_f, grid, p, zeta, kappa, N):
    """Measure |f g|_{L^p} / (C_f |g|_{L^p}) and check the hypotheses.

    ``f`` is a smooth field with derivative control constant ``c_f``;
    ``g`` is (T/kappa)^3-periodic.  The scale-separation hypothesis
    2 pi sqrt(3) zeta / kappa <= 1/3 and the power-counting hypothesis
    zeta^N <= kappa^(N-2) are checked, not assumed; on failure the
    report is flagged but the measured ratio is still returned.
    """
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    f = np.asarray(f, float)
    g = np.asarray(g, float)
    vol = grid.cell_volume
    norm_fg = (vol * np.sum(np.abs(f * g) ** p)) ** (1.0 / p)
    norm_g = (vol * np.sum(np.abs(g) ** p)) ** (1.0 / p)
    if norm_g == 0.0:
        raise ValueError("g vanishes identically")
    hyp1 = TWO_PI * np.sqrt(3.0) * zeta / kappa <= 1.0 / 3.0
    hyp2 = zeta ** N <= kappa ** (N - 2)
    return StationaryPhaseReport(
        ratio=float(norm_fg / (c_f * norm_g)),
        hypothesis_slow_fast=bool(hyp1),
        hypothesis_power=bool(hyp2),
        flagged=not (hyp1 and hyp2),
        zeta=float(zeta),
        kappa=float(kappa),
        N=int(N),
    )
