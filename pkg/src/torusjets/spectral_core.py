"""Pseudo-spectral field algebra on the 3-torus [-pi, pi]^3.

Fields are stored as truncated Fourier coefficient arrays with the
convention ``coeffs = fftn(samples) / n**3``, so the coefficient at
wavenumber zero is the spatial mean and physical samples are recovered
by ``ifftn(coeffs) * n**3``.  Wavenumbers are integers in [-n/2, n/2).

Scalar fields are plain complex coefficient arrays of shape (n, n, n);
vector and symmetric-tensor fields are the dataclasses below.
"""

import struct
import warnings
from dataclasses import dataclass, replace
from functools import cached_property, lru_cache
from itertools import combinations_with_replacement

import numpy as np
from numpy.polynomial.legendre import leggauss

__all__ = [
    "Grid3",
    "FourierField3",
    "SymTensorField3",
    "SYM_INDEX",
    "to_coeffs",
    "to_values",
    "fractional_laplacian",
    "leray_project",
    "inverse_divergence",
    "heat_semigroup",
    "norm",
    "mollify",
    "TimeMollifier",
    "spatial_mollifier_multiplier",
    "divergence",
    "gradient",
    "curl",
    "inverse_laplacian",
    "tensor_divergence",
    "project_nonzero",
    "lowpass",
    "dealiased_product",
    "save_snapshot",
    "load_snapshot",
]

SYM_INDEX = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
_SYM_OF = {(0, 0): 0, (0, 1): 1, (0, 2): 2, (1, 1): 3, (1, 2): 4, (2, 2): 5,
           (1, 0): 1, (2, 0): 2, (2, 1): 4}


@dataclass(frozen=True)
class Grid3:
    """Uniform sampling grid on the torus [-pi, pi]^3.

    Parameters
    ----------
    n : int
        Samples per axis; even and at least 8.
    dealias_factor : float
        Products are evaluated on a grid enlarged by this factor before
        truncation (3/2 rule by default).
    """

    n: int
    dealias_factor: float = 1.5

    def __post_init__(self):
        if self.n < 8 or self.n % 2 != 0:
            raise ValueError("grid size must be even and >= 8, got %d" % self.n)
        if self.dealias_factor < 1:
            raise ValueError("dealias_factor must be >= 1")

    @cached_property
    def k1d(self):
        """Integer wavenumbers along one axis, fft ordering."""
        return np.fft.fftfreq(self.n, 1.0 / self.n).astype(np.int64)

    @cached_property
    def k(self):
        """Wavenumber arrays (k1, k2, k3), each of shape (n, n, n)."""
        k = self.k1d.astype(np.float64)
        return np.meshgrid(k, k, k, indexing="ij")

    @cached_property
    def k_sq(self):
        k1, k2, k3 = self.k
        return k1 * k1 + k2 * k2 + k3 * k3

    @cached_property
    def x1d(self):
        """Sample coordinates along one axis, x_i = -pi + 2 pi i / n."""
        return -np.pi + 2.0 * np.pi * np.arange(self.n) / self.n

    @cached_property
    def x(self):
        """Coordinate arrays (x1, x2, x3), each of shape (n, n, n)."""
        return np.meshgrid(self.x1d, self.x1d, self.x1d, indexing="ij")

    @property
    def cell_volume(self):
        return (2.0 * np.pi / self.n) ** 3


@lru_cache(maxsize=8)
def _origin_phase(n):
    """Phase (-1)^(k1+k2+k3) relating fft output to coefficients w.r.t.
    e^{i k.x} on a grid starting at x = -pi."""
    k = np.fft.fftfreq(n, 1.0 / n).astype(np.int64)
    sign = np.where(k % 2 == 0, 1.0, -1.0)
    return sign[:, None, None] * sign[None, :, None] * sign[None, None, :]


def to_coeffs(samples):
    """Fourier coefficients of real samples w.r.t. e^{i k.x} on
    [-pi, pi]^3 (mean at wavenumber zero)."""
    samples = np.asarray(samples)
    n = samples.shape[-1]
    return np.fft.fftn(samples, axes=(-3, -2, -1)) * \
        (_origin_phase(n) / n ** 3)


def to_values(coeffs):
    """Real physical samples of a coefficient array."""
    coeffs = np.asarray(coeffs)
    n = coeffs.shape[-1]
    return np.fft.ifftn(coeffs * _origin_phase(n),
                        axes=(-3, -2, -1)).real * n ** 3


def _check_hermitian(coeffs, tol):
    values = np.fft.ifftn(coeffs, axes=(-3, -2, -1))
    scale = np.max(np.abs(values)) + 1e-300
    if np.max(np.abs(values.imag)) > tol * scale:
        raise ValueError("coefficients violate Hermitian symmetry")


@dataclass(frozen=True)
class FourierField3:
    """Three-component vector field on the torus in spectral storage.

    Parameters
    ----------
    grid : Grid3
    coeffs : ndarray
        Complex array of shape (3, n, n, n).
    time_tag : float, optional
        Time the snapshot belongs to.
    """

    grid: Grid3
    coeffs: np.ndarray
    time_tag: float = None

    def __post_init__(self):
        n = self.grid.n
        if self.coeffs.shape != (3, n, n, n):
            raise ValueError("coeffs must have shape (3, n, n, n)")

    @classmethod
    def from_samples(cls, grid, samples, time_tag=None):
        return cls(grid, to_coeffs(np.asarray(samples, dtype=np.float64)),
                   time_tag)

    def values(self):
        """Real physical samples, shape (3, n, n, n)."""
        return to_values(self.coeffs)

    def mean(self):
        """Spatial mean vector (the wavenumber-zero coefficients)."""
        return self.coeffs[:, 0, 0, 0].real.copy()

    def check(self, tol=1e-12):
        _check_hermitian(self.coeffs, tol)
        return self


@dataclass(frozen=True)
class SymTensorField3:
    """Symmetric 3x3 tensor field in spectral storage.

    Parameters
    ----------
    grid : Grid3
    coeffs : ndarray
        Complex array of shape (6, n, n, n) holding the independent
        entries (11, 12, 13, 22, 23, 33).
    trace_free : bool
        Declares the field trace-free; checked on demand.
    """

    grid: Grid3
    coeffs: np.ndarray
    time_tag: float = None
    trace_free: bool = False

    def __post_init__(self):
        n = self.grid.n
        if self.coeffs.shape != (6, n, n, n):
            raise ValueError("coeffs must have shape (6, n, n, n)")

    @classmethod
    def from_samples(cls, grid, samples, time_tag=None, trace_free=False):
        return cls(grid, to_coeffs(np.asarray(samples, dtype=np.float64)),
                   time_tag, trace_free)

    def values(self):
        """Real physical samples, shape (6, n, n, n)."""
        return to_values(self.coeffs)

    def trace_values(self):
        v = self.values()
        return v[0] + v[3] + v[5]

    def check(self, tol=1e-12):
        _check_hermitian(self.coeffs, tol)
        if self.trace_free:
            tr = self.coeffs[0] + self.coeffs[3] + self.coeffs[5]
            scale = np.max(np.abs(self.coeffs)) + 1e-300
            if np.max(np.abs(tr)) > tol * scale:
                raise ValueError("field flagged trace-free has nonzero trace")
        return self


# ---------------------------------------------------------------------------
# Fourier multipliers and projections
# ---------------------------------------------------------------------------

def fractional_laplacian(f, m):
    """Apply (-Delta)^m: multiply each mode by |k|^(2m), zero mode by 0."""
    if not np.isfinite(m):
        raise ValueError("fractional exponent m must be finite")
    if m <= 0:
        raise ValueError("fractional exponent m must be positive")
    grid = f.grid
    mult = np.zeros_like(grid.k_sq)
    nz = grid.k_sq > 0
    mult[nz] = grid.k_sq[nz] ** m
    return replace(f, coeffs=f.coeffs * mult)


def leray_project(f):
    """Leray projection onto divergence-free fields (mean preserved)."""
    grid = f.grid
    k1, k2, k3 = grid.k
    ksq = grid.k_sq.copy()
    ksq[0, 0, 0] = 1.0
    kdotv = k1 * f.coeffs[0] + k2 * f.coeffs[1] + k3 * f.coeffs[2]
    factor = kdotv / ksq
    factor[0, 0, 0] = 0.0
    coeffs = np.stack([
        f.coeffs[0] - k1 * factor,
        f.coeffs[1] - k2 * factor,
        f.coeffs[2] - k3 * factor,
    ])
    return replace(f, coeffs=coeffs)


def inverse_divergence(v):
    """Symmetric trace-free right inverse of the divergence.

    Acts mode-by-mode in Fourier space; for mean-zero v the output R
    satisfies div R = v, R symmetric and pointwise trace-free.  The mean
    of v is discarded (the operator applies to v minus its mean).
    """
    grid = v.grid
    k1, k2, k3 = grid.k
    ksq = grid.k_sq.copy()
    ksq[0, 0, 0] = 1.0
    kvec = (k1, k2, k3)
    kdotv = k1 * v.coeffs[0] + k2 * v.coeffs[1] + k3 * v.coeffs[2]
    out = np.empty((6,) + grid.k_sq.shape, dtype=complex)
    for idx, (a, b) in enumerate(SYM_INDEX):
        ka, kb = kvec[a], kvec[b]
        term1 = -1j * (ka * v.coeffs[b] + kb * v.coeffs[a]) / ksq
        delta = 1.0 if a == b else 0.0
        term2 = 0.5j * (delta + ka * kb / ksq) * kdotv / ksq
        entry = term1 + term2
        entry[0, 0, 0] = 0.0
        out[idx] = entry
    # At the self-conjugate Nyquist modes a real tensor cannot have a
    # divergence with real coefficients, so exact right inversion forces
    # a non-Hermitian remainder there; it is divergence free and only
    # matters when the input carries energy at those modes.
    return SymTensorField3(grid, out, v.time_tag, trace_free=True)


def heat_semigroup(f, t, m):
    """Apply the semigroup e^{-t(-Delta)^m} mode by mode."""
    if t < 0:
        raise ValueError("semigroup time must be nonnegative")
    if not np.isfinite(m):
        raise ValueError("fractional exponent m must be finite")
    grid = f.grid
    mult = np.ones_like(grid.k_sq)
    nz = grid.k_sq > 0
    mult[nz] = np.exp(-t * grid.k_sq[nz] ** m)
    return replace(f, coeffs=f.coeffs * mult)


def divergence(f):
    """Spectral divergence of a vector field; scalar coefficient array."""
    k1, k2, k3 = f.grid.k
    return 1j * (k1 * f.coeffs[0] + k2 * f.coeffs[1] + k3 * f.coeffs[2])


def gradient(scalar_coeffs, grid):
    """Spectral gradient of a scalar coefficient array, shape (3,n,n,n)."""
    k1, k2, k3 = grid.k
    return np.stack([1j * k1 * scalar_coeffs,
                     1j * k2 * scalar_coeffs,
                     1j * k3 * scalar_coeffs])


def curl(f):
    """Spectral curl of a vector field."""
    k1, k2, k3 = f.grid.k
    c1, c2, c3 = f.coeffs
    coeffs = np.stack([
        1j * (k2 * c3 - k3 * c2),
        1j * (k3 * c1 - k1 * c3),
        1j * (k1 * c2 - k2 * c1),
    ])
    return replace(f, coeffs=coeffs)


def inverse_laplacian(coeffs, grid):
    """Spectral inverse Laplacian on mean-zero data (zero mode dropped)."""
    ksq = grid.k_sq.copy()
    ksq[0, 0, 0] = 1.0
    out = -np.asarray(coeffs) / ksq
    out[..., 0, 0, 0] = 0.0
    return out


def tensor_divergence(T):
    """Spectral divergence of a symmetric tensor field, as a vector field."""
    grid = T.grid
    k1, k2, k3 = grid.k
    kvec = (k1, k2, k3)
    coeffs = np.zeros((3,) + grid.k_sq.shape, dtype=complex)
    for a in range(3):
        for b in range(3):
            coeffs[a] += 1j * kvec[b] * T.coeffs[_SYM_OF[(a, b)]]
    return FourierField3(grid, coeffs, T.time_tag)


def project_nonzero(coeffs):
    """Remove the zero Fourier mode (P_neq0)."""
    out = np.array(coeffs, copy=True)
    out[..., 0, 0, 0] = 0.0
    return out


def lowpass(coeffs, grid, r):
    """Sharp Fourier cutoff P_{<r}: keep modes with |k| < r."""
    mask = grid.k_sq < r * r
    return np.asarray(coeffs) * mask


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def _component_values(f):
    if isinstance(f, (FourierField3, SymTensorField3)):
        return f.values(), f.grid
    raise TypeError("norm expects a FourierField3 or SymTensorField3")

def _pointwise_magnitude(f):
    v, grid = _component_values(f)
    if isinstance(f, SymTensorField3):
        sq = (v[0] ** 2 + v[3] ** 2 + v[5] ** 2
              + 2.0 * (v[1] ** 2 + v[2] ** 2 + v[4] ** 2))
    else:
        sq = np.sum(v * v, axis=0)
    return np.sqrt(sq), grid


def _hs_coeff_sq(f):
    """Per-mode squared magnitude summed over independent components,
    with off-diagonal tensor entries counted twice."""
    c = np.abs(f.coeffs) ** 2
    if isinstance(f, SymTensorField3):
        return c[0] + c[3] + c[5] + 2.0 * (c[1] + c[2] + c[4])
    return np.sum(c, axis=0)


def _spectral_derivative_sup(f, axes):
    grid = f.grid
    mult = np.ones_like(grid.k_sq, dtype=complex)
    for ax in axes:
        mult = mult * (1j * grid.k[ax])
    sup = 0.0
    for comp in f.coeffs:
        sup = max(sup, np.max(np.abs(to_values(comp * mult))))
    return sup


def norm(f, kind, order=None):
    """Norm of a field.

    Parameters
    ----------
    f : FourierField3 or SymTensorField3
    kind : {"Lp", "Hs", "CN"}
        ``Lp``: grid quadrature of the pointwise magnitude with weights
        (2 pi / n)^3 (``order=np.inf`` gives the sup norm);
        ``Hs``: Fourier-side inhomogeneous norm with weights
        (1+|k|^2)^s, including the (2 pi)^3 Parseval factor;
        ``CN``: max over derivative orders <= N of the grid sup of
        spectral derivatives (a documented lower bound on the true sup).
    order : real
        p, s, or N respectively.
    """
    if order is None:
        raise ValueError("norm requires an order (p, s, or N)")
    if kind == "Lp":
        mag, grid = _pointwise_magnitude(f)
        if np.isinf(order):
            return float(np.max(mag))
        if order < 1:
            raise ValueError("Lp requires p >= 1")
        return float((np.sum(mag ** order) * grid.cell_volume) ** (1.0 / order))
    if kind == "Hs":
        grid = f.grid
        coeff_sq = _hs_coeff_sq(f)
        s = float(order)
        if s > 0:
            shell = grid.k_sq >= (grid.n / 3.0) ** 2
            total = np.sum(coeff_sq * (1.0 + grid.k_sq) ** s)
            tail = np.sum(coeff_sq[shell] * (1.0 + grid.k_sq[shell]) ** s)
            if total > 0 and tail > 0.1 * total:
                warnings.warn(
                    "H^s norm with s=%g: spectral tail carries %.1f%% of the "
                    "weighted mass; field may be under-resolved" %
                    (s, 100.0 * tail / total))
        else:
            total = np.sum(coeff_sq * (1.0 + grid.k_sq) ** s)
        return float(np.sqrt((2.0 * np.pi) ** 3 * total))
    if kind == "CN":
        nmax = int(order)
        if nmax < 0:
            raise ValueError("CN requires N >= 0")
        best = 0.0
        for j in range(nmax + 1):
            for axes in combinations_with_replacement(range(3), j):
                best = max(best, _spectral_derivative_sup(f, axes))
        return float(best)
    raise ValueError("unknown norm kind %r" % kind)


# ---------------------------------------------------------------------------
# mollification
# ---------------------------------------------------------------------------

def _bump(u):
    out = np.zeros_like(u)
    mask = np.abs(u) < 1.0
    out[mask] = np.exp(-1.0 / (1.0 - u[mask] ** 2))
    return out


@lru_cache(maxsize=64)
def _radial_transform_table(n_rho, rho_max):
    """Table of the 3D Fourier transform of the unit-mass radial bump.

    phi(x) = c exp(-1/(1-|x|^2)) on |x|<1; the transform is
    phihat(rho) = (4 pi / rho) int_0^1 c exp(-1/(1-r^2)) r sin(rho r) dr
    with phihat(0) = 1; evaluated by Gauss-Legendre quadrature.
    """
    nodes, weights = leggauss(200)
    r = 0.5 * (nodes + 1.0)
    w = 0.5 * weights
    shell = _bump(r) * r * r
    mass = 4.0 * np.pi * np.sum(w * shell)
    rho = np.linspace(0.0, max(rho_max, 1.0), n_rho)
    vals = np.empty_like(rho)
    vals[0] = 1.0
    for i in range(1, rho.size):
        vals[i] = 4.0 * np.pi / rho[i] * np.sum(
            w * _bump(r) * r * np.sin(rho[i] * r)) / mass
    return rho, vals


def spatial_mollifier_multiplier(grid, l):
    """Fourier multiplier of convolution with phi_l(x) = l^-3 phi(x/l)."""
    if l <= 0:
        raise ValueError("mollification length must be positive")
    kabs = np.sqrt(grid.k_sq)
    rho_max = float(l * np.max(kabs))
    table_rho, table_val = _radial_transform_table(4096, rho_max)
    mult = np.interp(l * kabs, table_rho, table_val)
    mult[0, 0, 0] = 1.0
    return mult


class TimeMollifier:
    """Causal time mollifier with kernel supported in [l/2, l].

    The kernel is a smooth bump centered at 3l/4 of half-width l/4; the
    convolution f_l(t) = int f(t - s) kernel(s) ds is evaluated by
    Gauss-Legendre quadrature with weights normalized to unit sum, so
    constants are preserved exactly.
    """

    def __init__(self, l, n_nodes=32):
        if l <= 0:
            raise ValueError("mollification length must be positive")
        self.l = float(l)
        nodes, weights = leggauss(n_nodes)
        s = 0.75 * self.l + 0.25 * self.l * nodes
        w = weights * _bump(nodes)
        self.nodes = s
        self.weights = w / np.sum(w)

    def first_moment(self):
        """Causal shift int s kernel(s) ds of the normalized kernel."""
        return float(np.sum(self.weights * self.nodes))

    def __call__(self, f, t):
        """Mollify the time-callable ``f`` at time ``t``.

        ``f`` maps a time to a scalar, ndarray, or field coefficient
        array; outputs are combined linearly.
        """
        acc = None
        for s, w in zip(self.nodes, self.weights):
            val = f(t - s)
            if isinstance(val, (FourierField3, SymTensorField3)):
                val = val.coeffs
            acc = w * val if acc is None else acc + w * val
        return acc


def mollify(times, fields, l, space=True, time=True):
    """Mollify a uniformly sampled time series of fields.

    Parameters
    ----------
    times : ndarray
        Uniform ascending sample times.
    fields : sequence of FourierField3 or SymTensorField3
        One field per sample time, all on the same grid.
    l : float
        Mollification length; the time kernel is supported in [l/2, l]
        and the spatial kernel is the radial bump at scale l.
    space, time : bool
        Which mollifications to apply.

    Returns
    -------
    (times_out, fields_out)
        The subset of times with full causal kernel coverage and the
        mollified fields there.

    Raises
    ------
    ValueError
        If the stencil is too short for the kernel support; the message
        states the required number of samples.
    """
    times = np.asarray(times, dtype=np.float64)
    if times.size < 2:
        raise ValueError("time series needs at least 2 samples")
    dt = times[1] - times[0]
    if not np.allclose(np.diff(times), dt):
        raise ValueError("time stencil must be uniform")
    grid = fields[0].grid

    history = int(np.floor(l / dt + 1e-12))
    if time:
        j_lo = max(int(np.ceil(l / (2.0 * dt) - 1e-12)), 0)
        j_hi = history
        offs = np.arange(j_lo, j_hi + 1)
        w = _bump((offs * dt - 0.75 * l) / (0.25 * l))
        if w.sum() == 0.0:
            w = np.zeros_like(w, dtype=float)
            w[np.argmin(np.abs(offs * dt - 0.75 * l))] = 1.0
        w = w / w.sum()
        if times.size <= history:
            raise ValueError(
                "stencil too short for time kernel support: need at least "
                "%d samples at dt=%g, got %d" % (history + 1, dt, times.size))
    else:
        offs, w = np.array([0]), np.array([1.0])
        history = 0

    mult = spatial_mollifier_multiplier(grid, l) if space else 1.0
    times_out = times[history:]
    fields_out = []
    for i in range(history, times.size):
        acc = None
        for j, wj in zip(offs, w):
            c = fields[i - j].coeffs
            acc = wj * c if acc is None else acc + wj * c
        acc = acc * mult
        fields_out.append(replace(fields[i], coeffs=acc,
                                  time_tag=float(times[i])))
    return times_out, fields_out


# ---------------------------------------------------------------------------
# dealiased products
# ---------------------------------------------------------------------------

def _mode_index(n, h):
    """Array positions of modes 0..h-1, -h..-1 in fft order on size n."""
    return np.r_[0:h, n - h:n]


def _embed(dst, src, dst_idx, src_idx):
    dst[..., dst_idx[:, None, None], dst_idx[None, :, None],
        dst_idx[None, None, :]] = \
        src[..., src_idx[:, None, None], src_idx[None, :, None],
            src_idx[None, None, :]]


def _pad_coeffs(coeffs, n, npad):
    big = np.zeros(coeffs.shape[:-3] + (npad, npad, npad), dtype=complex)
    h = n // 2
    _embed(big, coeffs, _mode_index(npad, h), _mode_index(n, h))
    return big


def dealiased_product(a_coeffs, b_coeffs, grid):
    """Product of two scalar fields via the enlarged-grid (3/2) rule.

    Both inputs and the output are coefficient arrays on ``grid``; the
    pointwise product is formed on a grid enlarged by
    ``grid.dealias_factor`` and truncated back, removing aliasing of
    quadratic interactions.
    """
    n = grid.n
    npad = int(np.ceil(n * grid.dealias_factor / 2.0)) * 2
    a_big = _pad_coeffs(np.asarray(a_coeffs), n, npad)
    b_big = _pad_coeffs(np.asarray(b_coeffs), n, npad)
    prod = to_coeffs(to_values(a_big) * to_values(b_big))
    h = n // 2
    out = np.zeros(prod.shape[:-3] + (n, n, n), dtype=complex)
    _embed(out, prod, _mode_index(n, h), _mode_index(npad, h))
    return out


# ---------------------------------------------------------------------------
# snapshot I/O
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sIId")
_MAGIC = b"WNF1"


def save_snapshot(field, path):
    """Write a field snapshot (magic WNF1, n, components, time_tag, data).

    Coefficients are little-endian f64 interleaved complex in row-major
    wavenumber order; round trips are bit-exact.
    """
    coeffs = np.ascontiguousarray(field.coeffs, dtype="<c16")
    ncomp = coeffs.shape[0]
    tag = field.time_tag if field.time_tag is not None else float("nan")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, field.grid.n, ncomp, tag))
        fh.write(coeffs.tobytes())


def load_snapshot(path, dealias_factor=1.5):
    """Read a snapshot written by :func:`save_snapshot`."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise ValueError("snapshot truncated: short header")
        magic, n, ncomp, tag = _HEADER.unpack(head)
        if magic != _MAGIC:
            raise ValueError("bad snapshot magic %r" % magic)
        data = fh.read()
    expect = ncomp * n ** 3 * 16
    if len(data) != expect:
        raise ValueError("snapshot truncated: expected %d data bytes, got %d"
                         % (expect, len(data)))
    coeffs = np.frombuffer(data, dtype="<c16").reshape(ncomp, n, n, n).copy()
    grid = Grid3(n, dealias_factor)
    time_tag = None if np.isnan(tag) else tag
    if ncomp == 3:
        return FourierField3(grid, coeffs, time_tag)
    if ncomp == 6:
        return SymTensorField3(grid, coeffs, time_tag)
    raise ValueError("unsupported component count %d" % ncomp)
