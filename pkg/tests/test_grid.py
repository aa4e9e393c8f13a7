import math

import numpy as np
import pytest

from kse2d.grid import Grid, NonFiniteFieldError, pointwise_magnitude

TWO_PI = 2 * math.pi


def brute_dft(f):
    """O(n^4) normalised DFT in the half layout."""
    n = f.shape[0]
    j = np.arange(n)
    out = np.zeros((n, n // 2 + 1), dtype=complex)
    for a in range(n):
        for b in range(n // 2 + 1):
            phase = np.exp(-2j * np.pi * (a * j[:, None] + b * j[None, :]) / n)
            out[a, b] = np.sum(f * phase) / n**2
    return out


def band_limited(grid, kmax, rng):
    """Random real field whose modes satisfy max(|k1|, |k2|) <= kmax."""
    F = rng.standard_normal(grid.spectral_shape) + 1j * rng.standard_normal(grid.spectral_shape)
    keep = (np.abs(grid.freq1) <= kmax) & (grid.freq2 <= kmax)
    F[~keep] = 0.0
    return grid.inverse(F)


class TestConstruction:
    @pytest.mark.parametrize("n", [0, 4, 7, 12, 100])
    def test_rejects_bad_size(self, n):
        with pytest.raises(ValueError, match="power of two"):
            Grid(n)

    @pytest.mark.parametrize("L", [0.0, -1.0, math.inf, math.nan])
    def test_rejects_bad_period(self, L):
        with pytest.raises(ValueError, match="period"):
            Grid(16, L)

    def test_layout(self):
        g = Grid(16, 3.0)
        assert g.shape == (16, 16)
        assert g.spectral_shape == (16, 9)
        assert g.dx == pytest.approx(3.0 / 16)
        assert g.area == pytest.approx(9.0)
        assert g.weights.sum() == 16 * 16


class TestTransforms:
    def test_single_cosine(self):
        g = Grid(32)
        x1, _ = g.mesh
        F = g.forward(np.cos(x1))
        nz = np.argwhere(np.abs(F) > 1e-14)
        assert sorted(map(tuple, nz)) == [(1, 0), (31, 0)]
        assert F[1, 0] == pytest.approx(0.5, abs=1e-15)
        assert F[31, 0] == pytest.approx(0.5, abs=1e-15)

    def test_round_trip(self):
        g = Grid(64)
        f = np.random.default_rng(1).standard_normal(g.shape)
        assert np.max(np.abs(g.inverse(g.forward(f)) - f)) < 1e-12

    def test_brute_force_dft(self):
        g = Grid(8)
        f = np.random.default_rng(2).standard_normal(g.shape)
        assert np.max(np.abs(g.forward(f) - brute_dft(f))) < 1e-12

    def test_non_finite_rejected(self):
        g = Grid(8)
        f = np.zeros(g.shape)
        f[3, 4] = np.nan
        with pytest.raises(NonFiniteFieldError):
            g.forward(f)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            Grid(8).forward(np.zeros((8, 16)))

    @pytest.mark.parametrize("seed", range(5))
    def test_parseval(self, seed):
        g = Grid(32, 1.7)
        f = np.random.default_rng(seed).standard_normal(g.shape)
        quad = g.lq_norm(f, 2)
        spectral = math.sqrt(g.spectral_l2_sq(g.forward(f)))
        assert abs(quad - spectral) / spectral < 1e-12


class TestDerivatives:
    def test_cosine(self):
        L = 3.0
        g = Grid(64, L)
        x1, _ = g.mesh
        d = g.inverse(g.derivative(g.forward(np.cos(TWO_PI * x1 / L)), axis=0))
        assert np.max(np.abs(d + TWO_PI / L * np.sin(TWO_PI * x1 / L))) < 1e-12

    @pytest.mark.parametrize("axis", [0, 1])
    def test_constant(self, axis):
        g = Grid(16)
        assert np.all(g.derivative(g.forward(np.full(g.shape, 3.0)), axis) == 0)

    def test_second_order(self):
        g = Grid(32)
        _, x2 = g.mesh
        d = g.inverse(g.derivative(g.forward(np.sin(3 * x2)), axis=1, order=2))
        assert np.max(np.abs(d + 9 * np.sin(3 * x2))) < 1e-11

    def test_bad_arguments(self):
        g = Grid(8)
        F = np.zeros(g.spectral_shape, dtype=complex)
        with pytest.raises(ValueError):
            g.derivative(F, axis=2)
        with pytest.raises(ValueError):
            g.derivative(F, axis=0, order=3)

    @pytest.mark.parametrize("axis", [0, 1])
    def test_finite_difference_oracle(self, axis):
        # Evaluate the band-limited field exactly on a grid refined 16x along
        # the derivative axis and difference it with the 4th-order stencil.
        n, r, kmax = 128, 16, 6
        g = Grid(n)
        rng = np.random.default_rng(7)
        F = np.zeros(g.spectral_shape, dtype=complex)
        keep = (np.abs(g.freq1) <= kmax) & (g.freq2 <= kmax)
        F[keep] = rng.standard_normal(keep.sum()) + 1j * rng.standard_normal(keep.sum())
        F[0, 0] = F[0, 0].real
        spectral = g.inverse(g.derivative(F, axis))

        modes = np.argwhere(keep)
        m = n * r
        xf = np.arange(m) * g.L / m
        xc = g.x
        k1 = g.freq1[modes[:, 0], 0] * TWO_PI / g.L
        k2 = g.freq2[0, modes[:, 1]] * TWO_PI / g.L
        # half-layout columns with k2 > 0 stand for conjugate pairs, hence the doubling
        c = F[keep] * np.where(modes[:, 1] == 0, 1.0, 2.0)
        if axis == 0:
            e1 = np.exp(1j * np.outer(xf, k1))
            e2 = np.exp(1j * np.outer(xc, k2))
        else:
            e1 = np.exp(1j * np.outer(xc, k1))
            e2 = np.exp(1j * np.outer(xf, k2))
        fine = np.einsum("im,jm,m->ij", e1, e2, c).real
        h = g.L / m
        fd = (
            -np.roll(fine, -2, axis) + 8 * np.roll(fine, -1, axis) - 8 * np.roll(fine, 1, axis) + np.roll(fine, 2, axis)
        ) / (12 * h)
        fd = fd[::r] if axis == 0 else fd[:, ::r]
        err = np.sqrt(np.sum((fd - spectral) ** 2) / np.sum(spectral**2))
        assert err < 1e-8


class TestBiotSavart:
    def test_cosine_vorticity(self):
        g = Grid(32)
        x1, _ = g.mesh
        u1h, u2h = g.biot_savart(g.forward(np.cos(x1)))
        assert np.max(np.abs(g.inverse(u1h))) < 1e-14
        assert np.max(np.abs(g.inverse(u2h) - np.sin(x1))) < 1e-14

    def test_zero(self):
        g = Grid(16)
        u1h, u2h = g.biot_savart(np.zeros(g.spectral_shape, dtype=complex))
        assert not np.any(u1h) and not np.any(u2h)

    def test_reconstruction(self):
        g = Grid(128)
        w = np.random.default_rng(3).standard_normal(g.shape)
        W = g.forward(w)
        W[0, 0] = 0.0
        W[g.nyquist] = 0.0
        w = g.inverse(W)
        u1h, u2h = g.biot_savart(W)
        curl = g.inverse(g.ik1 * u2h - g.ik2 * u1h)
        assert np.sqrt(np.sum((curl - w) ** 2) / np.sum(w**2)) < 1e-11

    def test_divergence_free_in_coefficients(self):
        g = Grid(32)
        W = g.forward(np.random.default_rng(4).standard_normal(g.shape))
        u1h, u2h = g.biot_savart(W)
        kdotu = np.abs(g.k1 * u1h + g.k2 * u2h)
        scale = np.sqrt(g.ksq) * np.sqrt(np.abs(u1h) ** 2 + np.abs(u2h) ** 2)
        assert np.all(kdotu <= 4 * np.finfo(float).eps * scale)


class TestDealias:
    def test_band_limited_unchanged(self):
        g = Grid(32)
        rng = np.random.default_rng(0)
        F = rng.standard_normal(g.spectral_shape) + 1j * rng.standard_normal(g.spectral_shape)
        F[(np.abs(g.freq1) > 8) | (g.freq2 > 8)] = 0.0
        assert np.array_equal(g.dealias(F), F)

    def test_nyquist_mode_removed(self):
        g = Grid(16)
        x1, _ = g.mesh
        assert np.max(np.abs(g.inverse(g.dealias(g.forward(np.cos(8 * x1)))))) == 0.0

    def test_idempotent(self):
        g = Grid(32)
        F = g.forward(np.random.default_rng(5).standard_normal(g.shape))
        once = g.dealias(F)
        assert np.array_equal(g.dealias(once), once)

    def test_product_matches_convolution(self):
        # Exact Fourier convolution of two fields with frequencies <= n/3,
        # restricted to the retained band.
        n = 32
        g = Grid(n)
        kmax = n // 3
        rng = np.random.default_rng(6)
        a, b = band_limited(g, kmax, rng), band_limited(g, kmax, rng)
        A = np.fft.fft2(a) / n**2
        B = np.fft.fft2(b) / n**2
        freqs = np.fft.fftfreq(n, 1.0 / n).astype(int)
        exact = {}
        nz_a = [(p, q) for p in range(n) for q in range(n) if abs(A[p, q]) > 1e-14]
        nz_b = [(p, q) for p in range(n) for q in range(n) if abs(B[p, q]) > 1e-14]
        for p, q in nz_a:
            for r, s in nz_b:
                key = (freqs[p] + freqs[r], freqs[q] + freqs[s])
                exact[key] = exact.get(key, 0.0) + A[p, q] * B[r, s]
        got = g.dealias(g.forward(a * b))
        for i in range(n):
            for j in range(n // 2 + 1):
                k = (int(g.freq1[i, 0]), int(g.freq2[0, j]))
                if g.dealias_mask[i, j]:
                    assert abs(got[i, j] - exact.get(k, 0.0)) < 1e-12
                else:
                    assert got[i, j] == 0.0


class TestHeat:
    def test_eigenmode(self):
        g = Grid(32)
        x1, _ = g.mesh
        out = g.inverse(g.heat_propagate(g.forward(np.cos(x1)), 1.0, 0.5))
        assert np.max(np.abs(out - math.exp(-0.5) * np.cos(x1))) < 1e-14

    def test_identity_at_zero(self):
        g = Grid(16)
        F = g.forward(np.random.default_rng(8).standard_normal(g.shape))
        assert np.array_equal(g.heat_propagate(F, 1.0, 0.0), F)

    def test_semigroup(self):
        g = Grid(32)
        F = g.forward(np.random.default_rng(9).standard_normal(g.shape))
        two = g.heat_propagate(g.heat_propagate(F, 0.7, 0.1), 0.7, 0.2)
        one = g.heat_propagate(F, 0.7, 0.3)
        assert np.max(np.abs(two - one)) < 1e-15

    def test_rejects_negative(self):
        g = Grid(8)
        F = np.zeros(g.spectral_shape, dtype=complex)
        with pytest.raises(ValueError):
            g.heat_propagate(F, -1.0, 1.0)
        with pytest.raises(ValueError):
            g.heat_propagate(F, 1.0, -1.0)


class TestNorms:
    def test_constant_l2(self):
        g = Grid(16)
        assert g.lq_norm(np.ones(g.shape), 2) == pytest.approx(TWO_PI, rel=1e-14)

    def test_sine_l2(self):
        g = Grid(32)
        x1, _ = g.mesh
        assert g.lq_norm(np.sin(x1), 2) ** 2 == pytest.approx(2 * math.pi**2, rel=1e-13)

    def test_sobolev_one(self):
        g = Grid(32)
        x1, _ = g.mesh
        F = g.forward(np.sin(x1))
        assert abs(g.sobolev_norm(F, 1) ** 2 - 4 * math.pi**2) < 1e-10

    def test_sobolev_zero_is_l2(self):
        g = Grid(32, 2.5)
        f = np.random.default_rng(10).standard_normal(g.shape)
        assert g.sobolev_norm(g.forward(f), 0) == pytest.approx(g.lq_norm(f, 2), rel=1e-12)

    def test_lq_monotone_in_q_on_unit_area(self):
        g = Grid(32, 1.0)
        f = np.random.default_rng(11).standard_normal(g.shape)
        norms = [g.lq_norm(f, q) for q in (1, 2, 3, 4, 8, math.inf)]
        assert all(a <= b * (1 + 1e-14) for a, b in zip(norms, norms[1:]))

    def test_vector_norm_pointwise(self):
        g = Grid(16)
        a = np.full(g.shape, 3.0)
        b = np.full(g.shape, 4.0)
        assert np.allclose(pointwise_magnitude([a, b]), 5.0)
        assert g.lq_norm([a, b], math.inf) == 5.0

    def test_large_q_does_not_overflow(self):
        g = Grid(16)
        f = np.full(g.shape, 1e200)
        assert math.isfinite(g.lq_norm(f, 8))

    def test_rejects_q_below_one(self):
        with pytest.raises(ValueError):
            Grid(8).lq_norm(np.ones((8, 8)), 0.5)
