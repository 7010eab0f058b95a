"""Spectral calculus on the torus: exactness, Parseval, dealiasing, and the
snapshot container."""

import numpy as np
import pytest

from polyflow.errors import ParameterError
from polyflow.xgrid import TorusGrid, read_snapshot, write_snapshot


class TestDerivatives:
    def test_constant_annihilated(self, grid64):
        f = np.full(grid64.dims, 3.7)
        for order in (1, 2, 3, 4):
            out = grid64.deriv(f, (order,))
            assert np.max(np.abs(out)) < 1e-12

    def test_single_mode_exact(self, grid64):
        x = grid64.coords()[0]
        for k in (1, 3, 7):
            f = np.sin(k * x)
            df = grid64.deriv(f, (1,))
            assert np.max(np.abs(df - k * np.cos(k * x))) < 1e-11 * k**2

    def test_nondefault_length(self):
        grid = TorusGrid((64,), (4.0,))
        x = grid.coords()[0]
        f = np.sin(2 * np.pi * x / 4.0)
        df = grid.deriv(f, (1,))
        expect = (2 * np.pi / 4.0) * np.cos(2 * np.pi * x / 4.0)
        assert np.max(np.abs(df - expect)) < 1e-12

    def test_product_derivative_with_dealiasing(self, grid64):
        x = grid64.coords()[0]
        f, g = np.sin(2 * x), np.sin(3 * x)
        prod = grid64.product(f, g)
        dprod = grid64.deriv(prod, (1,))
        exact = 2 * np.cos(2 * x) * np.sin(3 * x) + 3 * np.sin(2 * x) * np.cos(3 * x)
        assert np.max(np.abs(dprod - exact)) < 1e-10

    def test_derivative_composition(self, grid64, rng):
        fh = np.zeros(64, dtype=complex)
        for k in range(1, 6):
            amp = rng.standard_normal() + 1j * rng.standard_normal()
            fh[k], fh[-k] = amp, np.conj(amp)
        f = np.fft.ifft(fh).real
        lhs = grid64.deriv(grid64.deriv(f, (1,)), (2,))
        rhs = grid64.deriv(f, (3,))
        assert np.max(np.abs(lhs - rhs)) < 1e-10 * max(1.0, np.max(np.abs(rhs)))

    def test_order_cap_and_validation(self, grid64):
        f = np.zeros(grid64.dims)
        with pytest.raises(ParameterError):
            grid64.deriv(f, (5,))
        with pytest.raises(ParameterError):
            grid64.deriv(f, (1, 1))

    def test_2d_mixed_derivative(self, grid2d):
        xx, yy = grid2d.coords()
        f = np.sin(xx) * np.cos(2 * yy)
        out = grid2d.deriv(f, (1, 1))
        exact = np.cos(xx) * (-2 * np.sin(2 * yy))
        assert np.max(np.abs(out - exact)) < 1e-11


class TestNorms:
    def test_parseval(self, grid64, rng):
        f = rng.standard_normal(grid64.dims)
        by_grid = grid64.integral(f * f)
        fh = grid64.fft(f)
        by_modes = float(np.sum(np.abs(fh) ** 2)) * grid64.volume / 64**2
        assert by_grid == pytest.approx(by_modes, rel=1e-12)

    def test_single_mode_sobolev_ratio(self, grid64):
        x = grid64.coords()[0]
        f = np.sin(x)  # k = 1 on length 2*pi
        h0 = grid64.sobolev_norm(f, 0)
        assert h0**2 == pytest.approx(np.pi, rel=1e-12)
        h1 = grid64.sobolev_norm(f, 1)
        assert h1**2 / h0**2 == pytest.approx(2.0, rel=1e-12)  # 1 + k^2

    def test_zero_field(self, grid64):
        assert grid64.sobolev_norm(np.zeros(grid64.dims), 3) == 0.0

    def test_order_zero_is_l2(self, grid64, rng):
        f = rng.standard_normal(grid64.dims)
        assert grid64.sobolev_norm(f, 0) ** 2 == pytest.approx(
            grid64.integral(f * f), rel=1e-12
        )

    def test_invalid_order(self, grid64):
        with pytest.raises(ParameterError):
            grid64.sobolev_norm(np.zeros(grid64.dims), 4)


class TestDealiasing:
    def test_masked_modes_have_no_energy(self, grid64, rng):
        f = grid64.dealias(rng.standard_normal(grid64.dims))
        g = grid64.dealias(rng.standard_normal(grid64.dims))
        prod = grid64.product(f, g)
        assert grid64.spectral_energy_outside_mask(prod) < 1e-26

    def test_mask_covers_top_third(self, grid64):
        freq = np.abs(np.fft.fftfreq(64, d=1.0 / 64))
        expected = freq <= 64 // 3
        assert np.array_equal(grid64.dealias_mask, expected)


class TestConstruction:
    def test_odd_points_rejected(self):
        with pytest.raises(ParameterError):
            TorusGrid((63,))

    def test_dim_bounds(self):
        with pytest.raises(ParameterError):
            TorusGrid((8, 8, 8, 8))

    def test_length_mismatch(self):
        with pytest.raises(ParameterError):
            TorusGrid((8, 8), (1.0,))


class TestSnapshot:
    def test_round_trip(self, tmp_path, rng):
        path = tmp_path / "state.pfs"
        arrays = {
            "rho": rng.standard_normal((8,)),
            "u": rng.standard_normal((8, 1)),
            "g": rng.standard_normal((8, 5)),
        }
        meta = {"t": 0.25, "grid": {"dims": [8], "lengths": [6.28]}}
        write_snapshot(path, arrays, meta)
        back, meta2 = read_snapshot(path)
        assert meta2 == meta
        for key, val in arrays.items():
            assert np.array_equal(back[key], val)

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"not a snapshot")
        with pytest.raises(ParameterError):
            read_snapshot(path)
