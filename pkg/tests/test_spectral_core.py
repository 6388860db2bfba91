"""Tests for the pseudo-spectral field algebra."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from torusjets import _kernels
from torusjets.spectral_core import (
    FourierField3,
    Grid3,
    SymTensorField3,
    TimeMollifier,
    curl,
    dealiased_product,
    divergence,
    fractional_laplacian,
    gradient,
    heat_semigroup,
    inverse_divergence,
    inverse_laplacian,
    leray_project,
    load_snapshot,
    lowpass,
    mollify,
    norm,
    project_nonzero,
    save_snapshot,
    spatial_mollifier_multiplier,
    tensor_divergence,
    to_coeffs,
    to_values,
)

N = 16
GRID = Grid3(N)


def random_field(grid, seed, band=None):
    rng = np.random.default_rng(seed)
    f = FourierField3.from_samples(
        grid, rng.standard_normal((3, grid.n, grid.n, grid.n)))
    if band is not None:
        coeffs = lowpass(f.coeffs, grid, band)
        f = FourierField3(grid, coeffs)
    return f


def sin_x3_field(grid):
    zero = np.zeros((grid.n,) * 3)
    return FourierField3.from_samples(
        grid, np.stack([np.sin(grid.x[2]), zero, zero]))


def rel_l2(a, b=None):
    num = np.linalg.norm(a)
    if b is None:
        return num
    return num / (np.linalg.norm(b) + 1e-300)


class TestGrid:
    def test_validation(self):
        with pytest.raises(ValueError):
            Grid3(7)
        with pytest.raises(ValueError):
            Grid3(6)
        with pytest.raises(ValueError):
            Grid3(16, dealias_factor=0.5)

    def test_wavenumber_range(self):
        g = Grid3(8)
        assert g.k1d.min() == -4 and g.k1d.max() == 3

    def test_coordinates(self):
        assert GRID.x1d[0] == -np.pi
        assert np.isclose(GRID.x1d[1] - GRID.x1d[0], 2 * np.pi / N)


class TestFractionalLaplacian:
    def test_eigenfunction_any_m(self):
        # [TRIVIAL] |k|=1 eigenfunction: (-Delta)^m (sin x3,0,0) is itself.
        f = sin_x3_field(GRID)
        for m in (0.7, 1.0, 1.25):
            out = fractional_laplacian(f, m)
            assert rel_l2(out.coeffs - f.coeffs, f.coeffs) < 1e-13

    def test_constant_annihilated(self):
        # [TRIVIAL] zero mode annihilated.
        c = np.zeros((3, N, N, N), dtype=complex)
        c[0, 0, 0, 0] = 2.5
        out = fractional_laplacian(FourierField3(GRID, c), 1.0)
        assert np.max(np.abs(out.coeffs)) == 0.0

    def test_mode2_symbol(self):
        # [DERIVED] symbolic oracle: Laplacian of sin 2x1 is -4 sin 2x1,
        # so the m=1 multiplier is 4; the m=5/4 multiplier is 4**(5/4).
        zero = np.zeros((N,) * 3)
        f = FourierField3.from_samples(
            GRID, np.stack([np.sin(2 * GRID.x[0]), zero, zero]))
        out1 = fractional_laplacian(f, 1.0)
        assert rel_l2(out1.coeffs - 4.0 * f.coeffs, f.coeffs) < 1e-12
        out54 = fractional_laplacian(f, 1.25)
        assert rel_l2(out54.coeffs - 4.0 ** 1.25 * f.coeffs, f.coeffs) < 1e-12

    def test_rejects_bad_m(self):
        f = sin_x3_field(GRID)
        for bad in (np.nan, np.inf, -1.0, 0.0):
            with pytest.raises(ValueError):
                fractional_laplacian(f, bad)

    def test_m1_equals_minus_spectral_laplacian(self):
        f = random_field(GRID, 1)
        out = fractional_laplacian(f, 1.0)
        expect = GRID.k_sq * f.coeffs
        assert np.array_equal(out.coeffs, expect)


class TestLeray:
    def test_annihilates_gradient(self):
        # [TRIVIAL] gradients are annihilated (mean kept).
        x1, x2, _ = GRID.x
        phi = to_coeffs(np.sin(x1) * np.sin(x2))
        f = FourierField3(GRID, gradient(phi, GRID))
        out = leray_project(f)
        assert np.max(np.abs(out.coeffs)) < 1e-14

    def test_idempotent_and_divfree(self):
        f = random_field(GRID, 2)
        p = leray_project(f)
        assert rel_l2(divergence(p), f.coeffs) < 1e-12
        again = leray_project(p)
        assert rel_l2(again.coeffs - p.coeffs, p.coeffs) < 1e-13

    def test_mean_preserved(self):
        f = random_field(GRID, 3)
        assert np.allclose(leray_project(f).mean(), f.mean(), atol=1e-15)

    def test_commutes_with_multipliers(self):
        # Fourier multipliers commute; tested on random fields to 1e-12.
        f = random_field(GRID, 4)
        a = fractional_laplacian(leray_project(f), 1.1)
        b = leray_project(fractional_laplacian(f, 1.1))
        assert rel_l2(a.coeffs - b.coeffs, a.coeffs) < 1e-12
        a = heat_semigroup(leray_project(f), 0.3, 0.8)
        b = leray_project(heat_semigroup(f, 0.3, 0.8))
        assert rel_l2(a.coeffs - b.coeffs, a.coeffs) < 1e-12


class TestInverseDivergence:
    def test_sine_oracle(self):
        # [DERIVED] symbolic oracle: v = (sin x3,0,0) maps to
        # -cos x3 (e1 x e3 + e3 x e1).
        f = sin_x3_field(GRID)
        R = inverse_divergence(f)
        vals = R.values()
        expect = -np.cos(GRID.x[2])
        assert np.max(np.abs(vals[2] - expect)) < 1e-13
        for idx in (0, 1, 3, 4, 5):
            assert np.max(np.abs(vals[idx])) < 1e-13

    def test_zero(self):
        z = FourierField3(GRID, np.zeros((3, N, N, N), dtype=complex))
        assert np.max(np.abs(inverse_divergence(z).coeffs)) == 0.0

    def test_round_trip_random(self):
        # [DERIVED] FFT round trip on mean-zero band-limited fields.
        for seed in range(5):
            v = random_field(GRID, 10 + seed, band=N // 3)
            v = FourierField3(GRID, project_nonzero(v.coeffs))
            R = inverse_divergence(v)
            back = tensor_divergence(R)
            assert rel_l2(back.coeffs - v.coeffs, v.coeffs) < 1e-12
            assert np.max(np.abs(R.trace_values())) < 1e-12 * \
                np.max(np.abs(R.values()))


class TestHeatSemigroup:
    def test_identity_at_zero(self):
        f = random_field(GRID, 20)
        out = heat_semigroup(f, 0.0, 1.0)
        assert np.array_equal(out.coeffs, f.coeffs)

    def test_mode_one_decay(self):
        f = sin_x3_field(GRID)
        for m in (0.7, 1.25):
            out = heat_semigroup(f, 0.4, m)
            assert rel_l2(out.coeffs - np.exp(-0.4) * f.coeffs,
                          f.coeffs) < 1e-14

    def test_semigroup_law(self):
        f = random_field(GRID, 21)
        a = heat_semigroup(heat_semigroup(f, 0.3, 0.9), 0.7, 0.9)
        b = heat_semigroup(f, 1.0, 0.9)
        assert rel_l2(a.coeffs - b.coeffs, b.coeffs) < 1e-12

    def test_rejects_negative_time(self):
        with pytest.raises(ValueError):
            heat_semigroup(sin_x3_field(GRID), -0.1, 1.0)


class TestNorm:
    def test_sine_l2_value(self):
        # [PAPER] closed-form L2 norm of the base profile shape.
        f = sin_x3_field(GRID)
        assert abs(norm(f, "Lp", 2) - (2 * np.pi) ** 1.5 / np.sqrt(2)) < 1e-10

    def test_zero_field(self):
        z = FourierField3(GRID, np.zeros((3, N, N, N), dtype=complex))
        for kind, order in (("Lp", 1), ("Lp", 2), ("Lp", np.inf),
                            ("Hs", 1.5), ("CN", 1)):
            assert norm(z, kind, order) == 0.0

    def test_parseval(self):
        # [DERIVED] grid quadrature L2 equals the Parseval value (H^0).
        f = random_field(GRID, 30, band=N // 3)
        l2 = norm(f, "Lp", 2)
        h0 = norm(f, "Hs", 0)
        assert abs(l2 - h0) < 1e-12 * l2

    def test_tensor_norms(self):
        samples = np.zeros((6, N, N, N))
        samples[2] = -np.cos(GRID.x[2])  # entry 13, counted twice
        T = SymTensorField3.from_samples(GRID, samples)
        expect = np.sqrt(2.0) * (2 * np.pi) ** 1.5 / np.sqrt(2)
        assert abs(norm(T, "Lp", 2) - expect) < 1e-10
        assert abs(norm(T, "Hs", 0) - expect) < 1e-10

    def test_cn_of_sine(self):
        f = sin_x3_field(GRID)
        assert abs(norm(f, "CN", 0) - 1.0) < 1e-12
        assert abs(norm(f, "CN", 2) - 1.0) < 1e-10

    def test_hs_insufficient_decay_warns(self):
        f = random_field(GRID, 31)  # white spectrum: heavy tail
        with pytest.warns(UserWarning):
            norm(f, "Hs", 3.0)

    def test_linf(self):
        f = sin_x3_field(GRID)
        assert abs(norm(f, "Lp", np.inf) - 1.0) < 1e-12


class TestMollify:
    def make_series(self, func, t0, t1, nt):
        times = np.linspace(t0, t1, nt)
        fields = [FourierField3.from_samples(
            GRID, func(t), time_tag=float(t)) for t in times]
        return times, fields

    def test_constant_unchanged(self):
        # [TRIVIAL] unit mass: constant field untouched.
        const = np.full((3, N, N, N), 1.25)
        times, fields = self.make_series(lambda t: const, 0.0, 1.0, 21)
        _, out = mollify(times, fields, 0.2)
        for f in out:
            assert abs(f.coeffs[0, 0, 0, 0].real - 1.25) < 1e-14
            assert np.max(np.abs(project_nonzero(f.coeffs))) < 1e-14

    def test_pure_mode_multiplier(self):
        # [TRIVIAL] spatial mollification scales a pure mode by the
        # tabulated kernel transform.
        zero = np.zeros((N,) * 3)
        samples = np.stack([np.cos(3 * GRID.x[0]), zero, zero])
        times, fields = self.make_series(lambda t: samples, 0.0, 1.0, 21)
        l = 0.2
        _, out = mollify(times, fields, l, time=False)
        mult = spatial_mollifier_multiplier(GRID, l)
        k3 = np.where(GRID.k1d == 3)[0][0]
        expect = mult[k3, 0, 0]
        got = 2.0 * out[0].coeffs[0, k3, 0, 0].real
        assert abs(got - expect) < 1e-12

    def test_linear_in_time_shift(self):
        # [DERIVED] quadrature oracle: a + b t shifts by the kernel's
        # first moment.
        tm = TimeMollifier(0.3)

        def kernel(s):
            u = (s - 0.225) / 0.075
            return np.exp(-1.0 / (1.0 - u * u)) if abs(u) < 1 else 0.0

        mass, _ = quad(kernel, 0.15, 0.3)
        moment, _ = quad(lambda s: s * kernel(s), 0.15, 0.3)
        assert abs(tm.first_moment() - moment / mass) < 1e-10
        out = tm(lambda t: 2.0 + 5.0 * t, 1.0)
        assert abs(out - (2.0 + 5.0 * (1.0 - moment / mass))) < 1e-9

    def test_causality(self):
        # Kernel support in [l/2, l]: the mollified value at t uses
        # only samples from [t - l, t - l/2].
        tm = TimeMollifier(0.4)
        seen = []
        tm(lambda t: seen.append(t) or 0.0, 0.0)
        assert max(seen) <= -0.2 + 1e-12 and min(seen) >= -0.4 - 1e-12

    def test_short_stencil_rejected(self):
        times, fields = self.make_series(
            lambda t: np.zeros((3, N, N, N)), 0.0, 0.1, 3)
        with pytest.raises(ValueError, match="need at least"):
            mollify(times, fields, 1.0)

    def test_lp_nonexpansive(self):
        rng = np.random.default_rng(5)
        samples = rng.standard_normal((3, N, N, N))
        times, fields = self.make_series(lambda t: samples, 0.0, 1.0, 21)
        _, out = mollify(times, fields, 0.2)
        assert norm(out[0], "Lp", 2) <= norm(fields[-1], "Lp", 2) * (1 + 1e-9)


class TestDealiasedProduct:
    def test_resolved_product_exact(self):
        x1 = GRID.x[0]
        a = to_coeffs(np.sin(x1))
        p = dealiased_product(a, a, GRID)
        assert np.max(np.abs(to_values(p) - np.sin(x1) ** 2)) < 1e-13

    def test_alias_removed(self):
        # sin(7x)^2 = 1/2 - cos(14x)/2; at n=16 mode 14 aliases to -2
        # under a plain pointwise product but is dropped when dealiased.
        x1 = GRID.x[0]
        a = to_coeffs(np.sin(7 * x1))
        p = dealiased_product(a, a, GRID)
        k2 = np.where(GRID.k1d == -2)[0][0]
        assert abs(p[k2, 0, 0]) < 1e-14
        assert abs(p[0, 0, 0] - 0.5) < 1e-14
        aliased = to_coeffs(np.sin(7 * x1) ** 2)
        assert abs(aliased[k2, 0, 0]) > 0.2

    def test_bilinear(self):
        rng = np.random.default_rng(6)
        a = to_coeffs(rng.standard_normal((N, N, N)))
        b = to_coeffs(rng.standard_normal((N, N, N)))
        c = to_coeffs(rng.standard_normal((N, N, N)))
        lhs = dealiased_product(a + 2.0 * b, c, GRID)
        rhs = dealiased_product(a, c, GRID) + 2.0 * dealiased_product(b, c, GRID)
        assert rel_l2(lhs - rhs, lhs) < 1e-12


class TestSpectralCalculus:
    def test_curl_of_gradient_vanishes(self):
        phi = to_coeffs(np.sin(GRID.x[0]) * np.cos(2 * GRID.x[1]))
        g = FourierField3(GRID, gradient(phi, GRID))
        assert np.max(np.abs(curl(g).coeffs)) < 1e-13

    def test_inverse_laplacian(self):
        phi = project_nonzero(to_coeffs(np.sin(GRID.x[0]) * np.sin(GRID.x[2])))
        u = inverse_laplacian(phi, GRID)
        lap = -GRID.k_sq * u
        assert rel_l2(lap - phi, phi) < 1e-13

    def test_lowpass(self):
        f = random_field(GRID, 40)
        lo = lowpass(f.coeffs, GRID, 3.0)
        mask = GRID.k_sq >= 9.0
        assert np.max(np.abs(lo[:, mask])) == 0.0


class TestSnapshotIO:
    def test_round_trip_vector(self, tmp_path):
        f = random_field(GRID, 50)
        f = FourierField3(GRID, f.coeffs, time_tag=0.75)
        path = tmp_path / "field.wnf"
        save_snapshot(f, path)
        g = load_snapshot(path)
        assert isinstance(g, FourierField3)
        assert g.time_tag == 0.75
        assert np.array_equal(g.coeffs, f.coeffs)

    def test_round_trip_tensor(self, tmp_path):
        v = random_field(GRID, 51, band=4)
        T = inverse_divergence(v)
        path = tmp_path / "tensor.wnf"
        save_snapshot(T, path)
        back = load_snapshot(path)
        assert isinstance(back, SymTensorField3)
        assert np.array_equal(back.coeffs, T.coeffs)
        assert back.time_tag is None

    def test_bit_exact_bytes(self, tmp_path):
        f = random_field(GRID, 52)
        p1, p2 = tmp_path / "a.wnf", tmp_path / "b.wnf"
        save_snapshot(f, p1)
        save_snapshot(load_snapshot(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.wnf"
        path.write_bytes(b"XXXX" + b"\0" * 64)
        with pytest.raises(ValueError, match="magic"):
            load_snapshot(path)

    def test_truncated(self, tmp_path):
        f = random_field(GRID, 53)
        path = tmp_path / "t.wnf"
        save_snapshot(f, path)
        path.write_bytes(path.read_bytes()[:100])
        with pytest.raises(ValueError, match="truncated"):
            load_snapshot(path)


class TestKernelBackends:
    def test_backends_agree(self):
        from torusjets._kernels import get_kernels
        rng = np.random.default_rng(7)
        u = rng.uniform(-1.5, 1.5, 1000)
        v = rng.uniform(-1.5, 1.5, 1000)
        ks_np = get_kernels("numpy")
        ks_active = get_kernels()
        for name in ("bump_window", "bump1d_psi", "bump1d_dpsi"):
            a = ks_np[name](u, 1.0)
            b = ks_active[name](np.ascontiguousarray(u), 1.0)
            assert np.allclose(a, b, rtol=1e-14, atol=1e-300)
        a = ks_np["bump2d_phi"](u, v, 1.0)
        b = ks_active["bump2d_phi"](np.ascontiguousarray(u),
                                    np.ascontiguousarray(v), 1.0)
        assert np.allclose(a, b, rtol=1e-13, atol=1e-300)

    def test_dpsi_matches_fd(self):
        # Analytic derivative against central differences away from the
        # support edge.
        u = np.linspace(-0.9, 0.9, 101)
        h = 1e-6
        fd = (_kernels.bump1d_psi(u + h, 1.0)
              - _kernels.bump1d_psi(u - h, 1.0)) / (2 * h)
        assert np.max(np.abs(fd - _kernels.bump1d_dpsi(u, 1.0))) < 1e-8

    def test_phi_is_minus_laplacian_of_Phi(self):
        # 5-point FD Laplacian of the 2D bump against the analytic form.
        u, v = np.meshgrid(np.linspace(-0.7, 0.7, 41),
                           np.linspace(-0.7, 0.7, 41), indexing="ij")
        h = 1e-4
        lap = (_kernels.bump2d_Phi(u + h, v, 1.0)
               + _kernels.bump2d_Phi(u - h, v, 1.0)
               + _kernels.bump2d_Phi(u, v + h, 1.0)
               + _kernels.bump2d_Phi(u, v - h, 1.0)
               - 4.0 * _kernels.bump2d_Phi(u, v, 1.0)) / h ** 2
    # phi = -Laplacian(Phi)
        assert np.max(np.abs(lap + _kernels.bump2d_phi(u, v, 1.0))) < 1e-5


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1),
       c=st.floats(-10, 10, allow_nan=False))
def test_norm_homogeneity(seed, c):
    f = random_field(GRID, seed, band=4)
    scaled = FourierField3(GRID, c * f.coeffs)
    assert np.isclose(norm(scaled, "Lp", 2), abs(c) * norm(f, "Lp", 2),
                      rtol=1e-10, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_leray_projection_is_orthogonal(seed):
    f = random_field(GRID, seed, band=5)
    p = leray_project(f)
    q = FourierField3(GRID, f.coeffs - p.coeffs)
    inner = np.sum(p.coeffs * np.conj(q.coeffs)).real
    assert abs(inner) < 1e-10 * (norm(f, "Lp", 2) ** 2 + 1e-12)
