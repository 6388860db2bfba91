"""Rational direction set on the sphere and the geometric decomposition.

A fixed six-element set Lambda of rational unit vectors, orthonormal
rational frames (xi, A_xi, xi x A_xi), the linear coefficients c_xi with
R = sum_xi c_xi(R) xi (x) xi for symmetric R near the identity, the
smooth square roots gamma_xi = sqrt(c_xi), and the constants C_Lambda
and M used by the parameter ledger.
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "DirectionSet",
    "GammaSolver",
    "GammaDomainError",
    "build_direction_set",
    "build_gamma_solver",
    "constants",
    "C_LAMBDA",
]

# Six directions from the (3,4,5) rational family, each with a rational
# in-plane frame vector; the six dyads span Sym(3), the decomposition of
# the identity has c_xi(Id) = 1/2 for every direction, and the exact
# positivity radius of the coefficient maps is the best over this and
# the (1,2,2)/3 family.
_LAMBDA = (
    ((3, 4, 0), (-4, 3, 0)),
    ((3, -4, 0), (4, 3, 0)),
    ((0, 3, 4), (0, -4, 3)),
    ((0, 3, -4), (0, 4, 3)),
    ((4, 0, 3), (-3, 0, 4)),
    ((4, 0, -3), (3, 0, 4)),
)
_DEN = 5

SYM_COMPONENTS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


class GammaDomainError(ValueError):
    """Argument of gamma lies outside the admissible ball around Id."""

    def __init__(self, measured, radius, where=None):
        self.measured = measured
        self.radius = radius
        self.where = where
        msg = ("gamma argument outside domain: ||R - Id|| = %.6g > "
               "positivity radius %.6g" % (measured, radius))
        if where is not None:
            msg += " at grid point %s" % (where,)
        super().__init__(msg)


def _cross(u, v):
    return (u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0])


@dataclass(frozen=True)
class DirectionSet:
    """Direction set with frames, in exact rational and float form.

    Attributes
    ----------
    directions : tuple of tuple of Fraction
        The unit vectors xi.
    frames : tuple of (A_xi, xi x A_xi) pairs of Fraction tuples
        Orthonormal completion of each xi.
    n_star : int
        Smallest natural number making all frame vectors integral after
        scaling.
    positivity_radius : float
        Largest r such that every c_xi stays nonnegative on the
        operator-norm ball ||R - Id|| <= r (exact from the nuclear norms
        of the coefficient maps, certified by sampling).
    """

    directions: tuple
    frames: tuple
    n_star: int
    positivity_radius: float

    @property
    def xi(self):
        """Directions as a float array of shape (6, 3)."""
        return np.array(self.directions, dtype=float)

    def frame(self, i):
        """Float orthonormal frame (xi, A_xi, xi x A_xi) for entry i."""
        a, b = self.frames[i]
        return (np.array(self.directions[i], dtype=float),
                np.array(a, dtype=float), np.array(b, dtype=float))

    def __len__(self):
        return len(self.directions)


def _exact_directions():
    dirs, frames = [], []
    for xi_num, a_num in _LAMBDA:
        xi = tuple(Fraction(c, _DEN) for c in xi_num)
        a = tuple(Fraction(c, _DEN) for c in a_num)
        b = _cross(xi, a)
        dirs.append(xi)
        frames.append((a, b))
    return tuple(dirs), tuple(frames)


def _sym6(mat):
    """Pack a symmetric 3x3 into the 6-vector (11,12,13,22,23,33)."""
    return [mat[a][b] for a, b in SYM_COMPONENTS]


def _dyad6(xi):
    return [xi[a] * xi[b] for a, b in SYM_COMPONENTS]


def _invert_exact(rows):
    """Exact inverse of a 6x6 Fraction matrix by Gaussian elimination."""
    n = 6
    aug = [list(rows[i]) + [Fraction(int(i == j)) for j in range(n)]
           for i in range(n)]
    for col in range(n):
        piv = next(r for r in range(col, n) if aug[r][col] != 0)
        aug[col], aug[piv] = aug[piv], aug[col]
        inv = Fraction(1) / aug[col][col]
        aug[col] = [x * inv for x in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


def _coefficient_matrices(basis_inverse_exact):
    """Symmetric matrices G_xi with c_xi(R) = tr(G_xi R)."""
    mats = []
    for row in basis_inverse_exact:
        g = np.zeros((3, 3))
        for val, (a, b) in zip(row, SYM_COMPONENTS):
            if a == b:
                g[a, a] = float(val)
            else:
                g[a, b] = g[b, a] = float(val) / 2.0
        mats.append(g)
    return mats


def build_direction_set():
    """Build and validate the fixed direction set.

    Validates (in exact rational arithmetic) that each frame is
    orthonormal, computes n_star as the LCM of coordinate denominators,
    and computes the positivity radius of the coefficient maps exactly
    from nuclear norms, certifying it by dense boundary sampling.
    """
    dirs, frames = _exact_directions()
    for xi, (a, b) in zip(dirs, frames):
        for v in (xi, a, b):
            assert sum(c * c for c in v) == 1, "frame vector not unit"
        assert sum(x * y for x, y in zip(xi, a)) == 0
        assert sum(x * y for x, y in zip(xi, b)) == 0
        assert sum(x * y for x, y in zip(a, b)) == 0
        assert _cross(xi, a) == b

    n_star = 1
    for xi, (a, b) in zip(dirs, frames):
        for v in (xi, a, b):
            for c in v:
                n_star = np.lcm(n_star, c.denominator)
    n_star = int(n_star)

    basis = [_dyad6(xi) for xi in dirs]
    binv = _invert_exact(list(map(list, zip(*basis))))
    gmats = _coefficient_matrices(binv)
    c_id = [float(sum(row[i] * _sym6(np.eye(3))[i] for i in range(6)))
            for row in binv]

    radius = np.inf
    for g, c0 in zip(gmats, c_id):
        nuclear = float(np.sum(np.abs(np.linalg.eigvalsh(g))))
        radius = min(radius, c0 / nuclear)
    radius = float(radius)

    ds = DirectionSet(dirs, frames, n_star, radius)
    _certify_radius(ds, binv, gmats)
    return ds


def _certify_radius(ds, binv_exact, gmats, n_samples=2000, seed=12345):
    """Dense-sampling certificate: all c_xi > 0 strictly inside the
    ball, and the analytic minimizer drives some c_xi to zero at the
    boundary."""
    rng = np.random.default_rng(seed)
    binv = np.array(binv_exact, dtype=float)
    r = ds.positivity_radius
    for _ in range(n_samples):
        e = rng.standard_normal((3, 3))
        e = 0.5 * (e + e.T)
        e *= 0.999 * r / np.max(np.abs(np.linalg.eigvalsh(e)))
        c = binv @ np.array(_sym6(np.eye(3) + e))
        if np.min(c) <= 0:
            raise AssertionError("positivity radius certificate failed")
    worst = np.inf
    for g in gmats:
        w, v = np.linalg.eigh(g)
        minimizer = -(v * np.sign(w)) @ v.T * r
        c = binv @ np.array(_sym6(np.eye(3) + minimizer))
        worst = min(worst, float(np.min(c)))
    assert abs(worst) < 1e-12, "boundary minimizer should reach zero"


@dataclass(frozen=True)
class GammaSolver:
    """Coefficients of the geometric decomposition R = sum c_xi xi (x) xi.

    Attributes
    ----------
    direction_set : DirectionSet
    basis_inverse : ndarray
        6x6 float map from packed symmetric matrices to coefficients.
    basis_inverse_exact : tuple
        The same map with exact Fraction entries.
    """

    direction_set: DirectionSet
    basis_inverse: np.ndarray
    basis_inverse_exact: tuple

    def coefficients(self, R):
        """c_xi(R) for a single symmetric 3x3 matrix."""
        return self.basis_inverse @ np.array(_sym6(np.asarray(R)))

    def gamma(self, R):
        """gamma_xi(R) = sqrt(c_xi(R)) for R in the admissible ball.

        Raises
        ------
        GammaDomainError
            If ||R - Id|| (operator norm) exceeds the positivity radius.
        """
        R = np.asarray(R, dtype=float)
        dev = float(np.max(np.abs(np.linalg.eigvalsh(R - np.eye(3)))))
        radius = self.direction_set.positivity_radius
        if dev > radius * (1.0 + 1e-12):
            raise GammaDomainError(dev, radius)
        c = self.coefficients(R)
        return np.sqrt(np.maximum(c, 0.0))

    def gamma_field(self, sym6):
        """Vectorized gamma over packed symmetric fields.

        Parameters
        ----------
        sym6 : ndarray
            Shape (6, ...) array of packed symmetric matrices, expected
            inside the admissible ball pointwise.

        Returns
        -------
        ndarray of shape (6, ...) with gamma_xi values.

        Raises
        ------
        GammaDomainError
            If any coefficient is negative (argument left the domain);
            the error carries the offending grid point.
        """
        sym6 = np.asarray(sym6)
        c = np.einsum("ij,j...->i...", self.basis_inverse, sym6)
        cmin = np.min(c)
        if cmin < -1e-13:
            flat = np.argmin(np.min(c, axis=0))
            where = np.unravel_index(flat, sym6.shape[1:])
            raise GammaDomainError(np.nan, self.direction_set.positivity_radius,
                                   where=where)
        return np.sqrt(np.maximum(c, 0.0))

    def gradient_matrices(self):
        """Symmetric G_xi with c_xi(R) = tr(G_xi R)."""
        return _coefficient_matrices(self.basis_inverse_exact)


def build_gamma_solver(direction_set=None):
    """Build the GammaSolver (exact 6x6 inverse of the dyad basis)."""
    if direction_set is None:
        direction_set = build_direction_set()
    basis = [_dyad6(xi) for xi in direction_set.directions]
    binv_exact = _invert_exact(list(map(list, zip(*basis))))
    binv = np.array([[float(x) for x in row] for row in binv_exact])
    return GammaSolver(direction_set, binv,
                       tuple(tuple(row) for row in binv_exact))


C_LAMBDA = 8 * 6 * float(np.sqrt(1.0 + 8.0 * np.pi ** 3))


def constants(solver=None, ball_fraction=0.9, n_samples=4000, seed=2718):
    """The constants (C_Lambda, M) with sampling metadata.

    C_Lambda = 8 |Lambda| (1 + 8 pi^3)^(1/2).  M bounds
    C_Lambda sup_xi (||gamma_xi||_C0 + ||grad gamma_xi||_C0) over the
    ball of radius ball_fraction * positivity_radius around Id, with the
    sup estimated by dense random sampling (gradients analytic:
    grad gamma = G_xi / (2 gamma)).

    Returns
    -------
    (C_Lambda, M, meta) where meta records the sampling resolution.
    """
    if solver is None:
        solver = build_gamma_solver()
    ds = solver.direction_set
    r = ball_fraction * ds.positivity_radius
    gmats = solver.gradient_matrices()

    # gamma_xi + ||grad gamma_xi|| depends on R only through c = c_xi(R);
    # h(c) = sqrt(c) + ||G||_F / (2 sqrt(c)) is extremal at the endpoints
    # of the achievable range [c0 - r ||G||_nuc, c0 + r ||G||_nuc], so the
    # sup over the ball is evaluated there in closed form.
    sup = 0.0
    for g, c0 in zip(gmats, solver.coefficients(np.eye(3))):
        nuc = float(np.sum(np.abs(np.linalg.eigvalsh(g))))
        fro = float(np.linalg.norm(g))
        for c in (c0 - r * nuc, c0 + r * nuc):
            sup = max(sup, np.sqrt(c) + fro / (2.0 * np.sqrt(c)))

    # dense-sampling certificate: no sampled point exceeds the closed form
    rng = np.random.default_rng(seed)
    gnorms = np.array([np.linalg.norm(g) for g in gmats])
    sampled = 0.0
    for _ in range(n_samples):
        e = rng.standard_normal((3, 3))
        e = 0.5 * (e + e.T)
        scale = r * rng.uniform(0.5, 1.0) / \
            np.max(np.abs(np.linalg.eigvalsh(e)))
        c = solver.coefficients(np.eye(3) + scale * e)
        gam = np.sqrt(np.maximum(c, 0.0))
        grad = gnorms / (2.0 * np.maximum(gam, 1e-300))
        sampled = max(sampled, float(np.max(gam + grad)))
    assert sampled <= sup * (1.0 + 1e-12)
    meta = {"ball_fraction": ball_fraction, "n_samples": n_samples,
            "seed": seed, "ball_radius": r, "sampled_sup": sampled,
            "closed_form_sup": float(sup)}
    return C_LAMBDA, C_LAMBDA * float(sup), meta
