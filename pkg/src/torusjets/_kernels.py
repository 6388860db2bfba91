"""Hot numerical kernels with numba acceleration and a numpy fallback.

The backend is selected by the environment variable ``TORUSJETS_KERNELS``:

``auto``   use numba when importable, else numpy (default);
``numba``  require numba, raise if unavailable;
``numpy``  force the pure-numpy implementations.

All kernels are pure functions of ndarray inputs; both backends produce
bitwise-comparable results up to floating-point associativity.
"""

import os

import numpy as np

__all__ = [
    "backend_name",
    "bump_window",
    "bump2d_phi",
    "bump2d_Phi",
    "bump1d_psi",
    "bump1d_dpsi",
    "frobenius6",
]


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def _bump_window_np(u, s):
    """exp(-s/(1-u^2)) on |u|<1, 0 outside (C-infinity bump)."""
    u = np.asarray(u, dtype=np.float64)
    out = np.zeros_like(u)
    mask = np.abs(u) < 1.0
    um = u[mask]
    out[mask] = np.exp(-s / (1.0 - um * um))
    return out


def _bump2d_Phi_np(u, v, s):
    """Radial 2D bump exp(-s/(1-r^2)) on r<1, 0 outside."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    rho = u * u + v * v
    out = np.zeros_like(rho)
    mask = rho < 1.0
    out[mask] = np.exp(-s / (1.0 - rho[mask]))
    return out


def _bump2d_phi_np(u, v, s):
    """-Laplacian of the radial 2D bump, evaluated analytically.

    With b(rho) = exp(-s/(1-rho)) and rho = u^2+v^2 the 2D Laplacian of
    b(rho(x)) is 4 rho b''(rho) + 4 b'(rho); b' = -s b/(1-rho)^2 and
    b'' = (s^2/(1-rho)^4 - 2 s/(1-rho)^3) b.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    rho = u * u + v * v
    out = np.zeros_like(rho)
    mask = rho < 1.0
    rm = rho[mask]
    w = 1.0 - rm
    b = np.exp(-s / w)
    db = -s * b / (w * w)
    d2b = (s * s / (w ** 4) - 2.0 * s / (w ** 3)) * b
    out[mask] = -(4.0 * rm * d2b + 4.0 * db)
    return out


def _bump1d_psi_np(u, s):
    """Odd 1D profile u*exp(-s/(1-u^2)) on |u|<1, 0 outside."""
    u = np.asarray(u, dtype=np.float64)
    out = np.zeros_like(u)
    mask = np.abs(u) < 1.0
    um = u[mask]
    out[mask] = um * np.exp(-s / (1.0 - um * um))
    return out


def _bump1d_dpsi_np(u, s):
    """Derivative of the odd 1D profile, evaluated analytically.

    d/du [u e^{-s/(1-u^2)}] = (1 - 2 s u^2/(1-u^2)^2) e^{-s/(1-u^2)}.
    """
    u = np.asarray(u, dtype=np.float64)
    out = np.zeros_like(u)
    mask = np.abs(u) < 1.0
    um = u[mask]
    w = 1.0 - um * um
    out[mask] = (1.0 - 2.0 * s * um * um / (w * w)) * np.exp(-s / w)
    return out


def _frobenius6_np(t11, t12, t13, t22, t23, t33):
    """Pointwise Frobenius norm of a symmetric 3x3 tensor field."""
    return np.sqrt(
        t11 * t11 + t22 * t22 + t33 * t33
        + 2.0 * (t12 * t12 + t13 * t13 + t23 * t23)
    )


# ---------------------------------------------------------------------------
# numba implementations (scalar loops; compiled lazily on first use)
# ---------------------------------------------------------------------------

def _build_numba_kernels():
    from numba import njit

    @njit(cache=True)
    def bump_window_nb(u, s):
        out = np.zeros_like(u)
        for i in range(u.size):
            ui = u.flat[i]
            if -1.0 < ui < 1.0:
                out.flat[i] = np.exp(-s / (1.0 - ui * ui))
        return out

    @njit(cache=True)
    def bump2d_Phi_nb(u, v, s):
        out = np.zeros_like(u)
        for i in range(u.size):
            rho = u.flat[i] * u.flat[i] + v.flat[i] * v.flat[i]
            if rho < 1.0:
                out.flat[i] = np.exp(-s / (1.0 - rho))
        return out

    @njit(cache=True)
    def bump2d_phi_nb(u, v, s):
        out = np.zeros_like(u)
        for i in range(u.size):
            rho = u.flat[i] * u.flat[i] + v.flat[i] * v.flat[i]
            if rho < 1.0:
                w = 1.0 - rho
                b = np.exp(-s / w)
                db = -s * b / (w * w)
                d2b = (s * s / (w ** 4) - 2.0 * s / (w ** 3)) * b
                out.flat[i] = -(4.0 * rho * d2b + 4.0 * db)
        return out

    @njit(cache=True)
    def bump1d_psi_nb(u, s):
        out = np.zeros_like(u)
        for i in range(u.size):
            ui = u.flat[i]
            if -1.0 < ui < 1.0:
                out.flat[i] = ui * np.exp(-s / (1.0 - ui * ui))
        return out

    @njit(cache=True)
    def bump1d_dpsi_nb(u, s):
        out = np.zeros_like(u)
        for i in range(u.size):
            ui = u.flat[i]
            if -1.0 < ui < 1.0:
                w = 1.0 - ui * ui
                out.flat[i] = (1.0 - 2.0 * s * ui * ui / (w * w)) * np.exp(-s / w)
        return out

    @njit(cache=True)
    def frobenius6_nb(t11, t12, t13, t22, t23, t33):
        out = np.empty_like(t11)
        for i in range(t11.size):
            out.flat[i] = np.sqrt(
                t11.flat[i] ** 2 + t22.flat[i] ** 2 + t33.flat[i] ** 2
                + 2.0 * (t12.flat[i] ** 2 + t13.flat[i] ** 2 + t23.flat[i] ** 2)
            )
        return out

    return {
        "bump_window": bump_window_nb,
        "bump2d_Phi": bump2d_Phi_nb,
        "bump2d_phi": bump2d_phi_nb,
        "bump1d_psi": bump1d_psi_nb,
        "bump1d_dpsi": bump1d_dpsi_nb,
        "frobenius6": frobenius6_nb,
    }


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------

_NUMPY_KERNELS = {
    "bump_window": _bump_window_np,
    "bump2d_Phi": _bump2d_Phi_np,
    "bump2d_phi": _bump2d_phi_np,
    "bump1d_psi": _bump1d_psi_np,
    "bump1d_dpsi": _bump1d_dpsi_np,
    "frobenius6": _frobenius6_np,
}


def _select_backend():
    choice = os.environ.get("TORUSJETS_KERNELS", "auto").lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(
            "TORUSJETS_KERNELS must be one of auto|numba|numpy, got %r" % choice
        )
    if choice == "numpy":
        return "numpy", _NUMPY_KERNELS
    try:
        kernels = _build_numba_kernels()
        return "numba", kernels
    except ImportError:
        if choice == "numba":
            raise ImportError(
                "TORUSJETS_KERNELS=numba but numba is not importable"
            )
        return "numpy", _NUMPY_KERNELS


_BACKEND_NAME, _KERNELS = _select_backend()


def backend_name():
    """Return the active kernel backend, ``"numba"`` or ``"numpy"``."""
    return _BACKEND_NAME


def get_kernels(backend=None):
    """Return the kernel table for ``backend`` (default: the active one)."""
    if backend is None or backend == _BACKEND_NAME:
        return _KERNELS
    if backend == "numpy":
        return _NUMPY_KERNELS
    if backend == "numba":
        return _build_numba_kernels()
    raise ValueError("unknown backend %r" % backend)


def _dispatch(name):
    def call(*args):
        args = tuple(
            np.ascontiguousarray(a, dtype=np.float64) if isinstance(a, np.ndarray)
            else a
            for a in args
        )
        return _KERNELS[name](*args)

    call.__name__ = name
    call.__doc__ = _NUMPY_KERNELS[name].__doc__
    return call


bump_window = _dispatch("bump_window")
bump2d_Phi = _dispatch("bump2d_Phi")
bump2d_phi = _dispatch("bump2d_phi")
bump1d_psi = _dispatch("bump1d_psi")
bump1d_dpsi = _dispatch("bump1d_dpsi")
frobenius6 = _dispatch("frobenius6")
