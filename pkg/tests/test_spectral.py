import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nslab.errors import NegativeTime, NonPositiveTime, NonZeroMean, NotDivergenceFree
from nslab.spectral import (
    SpectralField,
    Trajectory,
    curl,
    cross,
    dealias,
    divergence,
    dyadic_times,
    fractional_laplacian,
    gradient,
    heat_kernel_eval,
    heat_semigroup,
    inverse_curl,
    leray_project,
    product,
    random_field,
    rotation_form_identity,
    wavenumber_sq,
    wavenumbers,
    wavenumbers_1d,
)

seeds = st.integers(min_value=0, max_value=2**31 - 1)


def single_mode(N, n, comps=1, vec=None, real=False):
    c = np.zeros((comps, N, N, N), dtype=complex)
    idx = tuple(int(v) % N for v in n)
    c[(slice(None),) + idx] = 1.0 if vec is None else np.asarray(vec)
    return SpectralField(c, real=real)


def raw_random(N, seed, comps=3):
    rng = np.random.default_rng(seed)
    f = SpectralField.from_physical(rng.standard_normal((comps, N, N, N)))
    c = f.coeffs.copy()
    c[:, 0, 0, 0] = 0
    return f.with_coeffs(c)


def rel(a, b):
    return np.max(np.abs(a.coeffs - b.coeffs)) / max(np.max(np.abs(b.coeffs)), 1e-300)


class TestGrid:
    def test_wavenumber_order(self):
        k = wavenumbers_1d(8)
        assert list(k) == [0, 1, 2, 3, 4, -3, -2, -1]

    def test_wavenumber_sq_is_integer_norm(self):
        K = wavenumbers(6)
        assert np.array_equal(wavenumber_sq(6), np.sum(K * K, axis=0))

    @given(seeds)
    def test_transform_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        vals = rng.standard_normal((3, 8, 8, 8))
        back = SpectralField.from_physical(vals).to_physical()
        assert np.max(np.abs(back - vals)) <= 1e-13 * np.max(np.abs(vals))

    def test_coefficient_count(self):
        f = SpectralField.zeros(8, components=3)
        assert f.coeffs.size == 3 * 8**3

    def test_real_fields_are_hermitian(self):
        f = raw_random(8, 3)
        assert f.hermitian_residual() <= 1e-13


class TestLeray:
    def test_annihilates_gradients(self):
        phi = raw_random(8, 1, comps=1)
        g = gradient(phi)
        assert leray_project(g).l2_coeff() <= 1e-14 * g.l2_coeff()

    @given(seeds)
    def test_idempotent_and_divergence_free(self, seed):
        f = raw_random(8, seed)
        p = leray_project(f)
        assert rel(leray_project(p), p) <= 1e-13
        assert p.div_residual() <= 1e-13

    def test_matches_per_mode_matrix(self):
        f = raw_random(6, 11)
        p = leray_project(f)
        K = wavenumbers(6)
        for idx in [(1, 2, 3), (0, 5, 1), (3, 3, 3), (2, 0, 0)]:
            n = K[(slice(None),) + idx]
            P = np.eye(3) - np.outer(n, n) / (n @ n)
            want = P @ f.coeffs[(slice(None),) + idx]
            assert np.allclose(p.coeffs[(slice(None),) + idx], want, atol=1e-15)

    @given(seeds, seeds)
    def test_self_adjoint(self, s1, s2):
        f, g = raw_random(6, s1), raw_random(6, s2)
        a = np.vdot(leray_project(f).coeffs, g.coeffs)
        b = np.vdot(f.coeffs, leray_project(g).coeffs)
        assert abs(a - b) <= 1e-12 * max(abs(a), 1)

    def test_mean_mode_passes_through(self):
        c = np.zeros((3, 4, 4, 4), complex)
        c[:, 0, 0, 0] = [1, 2, 3]
        f = SpectralField(c)
        assert np.array_equal(leray_project(f).coeffs, c)


class TestCurl:
    def test_curl_of_gradient_vanishes(self):
        g = gradient(raw_random(8, 2, comps=1))
        assert curl(g).l2_coeff() <= 1e-13 * g.l2_coeff()

    @given(seeds)
    def test_double_curl_is_minus_laplacian(self, seed):
        f = leray_project(raw_random(8, seed))
        cc = curl(curl(f))
        lap = f.with_coeffs(wavenumber_sq(8) * f.coeffs)
        assert rel(cc, lap) <= 1e-12

    @given(seeds)
    def test_parseval_curl_vs_gradient(self, seed):
        f = leray_project(raw_random(8, seed))
        a = curl(f).l2()
        b = gradient(f).l2()
        assert abs(a - b) <= 1e-12 * b

    def test_output_divergence_free(self):
        assert curl(raw_random(8, 5)).div_residual() <= 1e-13


class TestInverseCurl:
    @given(seeds)
    def test_round_trip(self, seed):
        f = leray_project(raw_random(8, seed))
        g = inverse_curl(f)
        assert rel(curl(g), f) <= 1e-12
        assert g.div_residual() <= 1e-13
        assert g.is_mean_zero()

    def test_helical_mode_scales(self):
        from nslab.beltrami import helical_basis

        n = (1, 2, 0)
        hp, _ = helical_basis(n)
        f = single_mode(8, n, 3, hp)
        assert rel(inverse_curl(f), f * (1 / math.sqrt(5))) <= 1e-14

    def test_rejects_mean(self):
        c = np.zeros((3, 4, 4, 4), complex)
        c[0, 0, 0, 0] = 1
        with pytest.raises(NonZeroMean):
            inverse_curl(SpectralField(c))

    def test_rejects_divergence(self):
        with pytest.raises(NotDivergenceFree):
            inverse_curl(raw_random(8, 1))


class TestHeat:
    def test_identity_at_zero(self):
        f = raw_random(8, 1)
        assert heat_semigroup(f, 0.0) is f

    def test_single_mode_factor(self):
        f = single_mode(8, (2, 0, 0))
        assert heat_semigroup(f, 0.25).coeffs[0, 2, 0, 0] == pytest.approx(math.exp(-1.0), rel=1e-15)
        assert math.exp(-1.0) == pytest.approx(0.367879, abs=1e-6)

    @given(seeds)
    def test_semigroup_law(self, seed):
        f = raw_random(8, seed)
        a = heat_semigroup(heat_semigroup(f, 0.1), 0.2)
        assert rel(a, heat_semigroup(f, 0.3)) <= 1e-13

    @given(seeds, st.floats(min_value=1e-3, max_value=2.0))
    def test_never_increases_amplitudes(self, seed, t):
        f = raw_random(6, seed)
        g = heat_semigroup(f, t)
        a, b = np.abs(g.coeffs), np.abs(f.coeffs)
        assert np.all(a <= b)
        nz = (wavenumber_sq(6) > 0)[None] & (b > 0)
        assert np.all(a[nz] < b[nz])

    def test_negative_time(self):
        with pytest.raises(NegativeTime):
            heat_semigroup(raw_random(4, 0), -1e-3)


class TestFractionalLaplacian:
    def test_zero_exponent(self):
        f = raw_random(8, 0)
        assert rel(fractional_laplacian(f, 0), f) == 0

    def test_composition(self):
        f = raw_random(8, 4)
        twice = fractional_laplacian(fractional_laplacian(f, 1.0), 1.0)
        assert rel(twice, fractional_laplacian(f, 2.0)) <= 1e-13

    def test_negative_power_factor(self):
        f = single_mode(8, (1, 1, 0))
        g = fractional_laplacian(f, -1.0)
        assert abs(g.coeffs[0, 1, 1, 0]) == pytest.approx(2**-0.5, abs=1e-15)
        assert 2**-0.5 == pytest.approx(0.70711, abs=1e-5)

    @given(st.floats(-2, 2), st.floats(-2, 2))
    def test_exponents_add(self, s, r):
        f = raw_random(6, 9)
        a = fractional_laplacian(fractional_laplacian(f, s), r)
        assert rel(a, fractional_laplacian(f, s + r)) <= 1e-12

    def test_negative_power_rejects_mean(self):
        c = np.zeros((1, 4, 4, 4), complex)
        c[0, 0, 0, 0] = 1
        with pytest.raises(NonZeroMean):
            fractional_laplacian(SpectralField(c), -0.5)


class TestDealias:
    def test_band_limited_unchanged(self):
        f = random_field(12, 0, kmax=4)
        assert rel(dealias(f), f) == 0

    def test_nyquist_only_is_zeroed(self):
        f = single_mode(12, (6, 0, 0))
        assert dealias(f).l2_coeff() == 0

    def test_product_matches_exact_convolution(self):
        # product of two mode-(N/3) fields vs the exact product evaluated on a 2N grid
        N = 12
        a = single_mode(N, (4, 0, 0), real=False) + single_mode(N, (0, 3, 1), real=False)
        b = single_mode(N, (-4, 4, 0), real=False) + single_mode(N, (1, 1, 1), real=False)
        got = product(a, b)
        big = 2 * N
        x = np.arange(big) * 2 * np.pi / big
        X = np.meshgrid(x, x, x, indexing="ij")
        ph = lambda n: np.exp(1j * (n[0] * X[0] + n[1] * X[1] + n[2] * X[2]))  # noqa: E731
        exact = (ph((4, 0, 0)) + ph((0, 3, 1))) * (ph((-4, 4, 0)) + ph((1, 1, 1)))
        E = SpectralField.from_physical(exact[None].astype(complex))
        k = wavenumbers_1d(big)
        keep = (np.abs(k) <= N // 3)
        for i in range(big):
            for j in range(big):
                for l in range(big):
                    if not (keep[i] and keep[j] and keep[l]):
                        continue
                    n = (int(k[i]), int(k[j]), int(k[l]))
                    assert abs(got.coeffs[(0,) + tuple(v % N for v in n)] - E.coeffs[0, i, j, l]) <= 1e-13


class TestProducts:
    def test_rotation_identity_zero_field(self):
        b = SpectralField.zeros(8)
        h = random_field(8, 0, kmax=2)
        assert rotation_form_identity(b, h) == 0.0

    @given(seeds, seeds)
    def test_rotation_identity_random(self, s1, s2):
        b, h = random_field(16, s1, kmax=5), random_field(16, s2, kmax=5)
        r = rotation_form_identity(b, h)
        assert r <= 1e-11 * b.sup_norm() * h.sup_norm()

    def test_rotation_identity_requires_div_free(self):
        with pytest.raises(NotDivergenceFree):
            rotation_form_identity(raw_random(8, 0), random_field(8, 1, kmax=2))

    def test_cross_antisymmetric(self):
        a, b = random_field(8, 1, kmax=2), random_field(8, 2, kmax=2)
        assert rel(cross(a, b), -cross(b, a)) <= 1e-14

    def test_divergence_of_gradient_is_laplacian(self):
        phi = raw_random(8, 3, comps=1)
        d = divergence(gradient(phi))
        assert rel(d, phi.with_coeffs(-wavenumber_sq(8) * phi.coeffs)) <= 1e-13


class TestHeatKernel:
    def test_kernel_itself(self):
        x, t = (0.3, -0.2, 0.5), 0.7
        v = heat_kernel_eval(x, t, 0, 0)
        want = t**-1.5 * math.exp(-(0.09 + 0.04 + 0.25) / (4 * t))
        assert v.values[(0, 0, 0)] == pytest.approx(want, rel=1e-15)
        assert v.discrepancy == 0

    @pytest.mark.parametrize("t", [0.1, 0.5, 2.0])
    def test_time_derivative_at_origin(self, t):
        v = heat_kernel_eval((0, 0, 0), t, 1, 0)
        assert v.values[(0, 0, 0)] == pytest.approx(-1.5 * t**-2.5, rel=1e-13)

    def test_second_derivatives_vs_finite_differences(self, rng):
        for _ in range(3):
            x = rng.uniform(-1, 1, 3)
            t = rng.uniform(0.3, 1.5)
            v = heat_kernel_eval(x, t, 0, 2)
            K = lambda p: t**-1.5 * math.exp(-float(np.dot(p, p)) / (4 * t))  # noqa: E731
            h = 1e-3
            for alpha, val in v.values.items():
                i, j = [d for d in range(3) for _ in range(alpha[d])]
                ei, ej = np.eye(3)[i] * h, np.eye(3)[j] * h
                fd = (K(x + ei + ej) - K(x + ei - ej) - K(x - ei + ej) + K(x - ei - ej)) / (4 * h * h)
                assert val == pytest.approx(fd, rel=1e-6, abs=1e-9)

    @pytest.mark.parametrize("m,k", [(0, 1), (1, 1), (2, 0), (1, 2), (0, 4), (2, 2)])
    def test_two_paths_agree(self, m, k):
        v = heat_kernel_eval((0.4, 0.1, -0.7), 0.35, m, k)
        assert v.discrepancy <= 1e-12

    def test_rejects_nonpositive_time(self):
        with pytest.raises(NonPositiveTime):
            heat_kernel_eval((0, 0, 0), 0.0, 0, 0)

    def test_rejects_large_orders(self):
        with pytest.raises(ValueError):
            heat_kernel_eval((0, 0, 0), 1.0, 3, 2)


class TestTrajectory:
    def test_times_must_increase(self):
        f = SpectralField.zeros(4)
        with pytest.raises(ValueError):
            Trajectory([0.0, 0.0], [f, f])

    def test_dyadic_times_are_increasing(self):
        ts = dyadic_times(1.0, 1e-3, per_level=4)
        assert ts[0] == 0 and ts[-1] == 1.0
        assert np.all(np.diff(ts) > 0)

    def test_random_field_is_grid_independent(self):
        a, b = random_field(12, 7, kmax=3), random_field(24, 7, kmax=3)
        assert np.max(np.abs(a.to_physical() - b.to_physical()[:, ::2, ::2, ::2])) <= 1e-13
        assert a.div_residual() <= 1e-14 and a.is_mean_zero()
