import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hwci.errors import FormatError, InvalidParameterError
from hwci.grid import (ArrayGeometry, ImagingGrid, MediumMap, TransmitEvent, plane_wave_delays,
                       read_medium, resample_medium, write_medium)


def ramp_medium(nx=11, nz=6, dx=1e-3, dz=1e-3):
    g = ImagingGrid(nx, nz, dx, dz, x0=-5e-3)
    c = 1500.0 + 1e4 * g.x[None, :] + np.zeros((nz, 1))
    return MediumMap(g, c)


class TestImagingGrid:
    def test_coordinates(self):
        g = ImagingGrid(4, 3, 0.5e-3, 0.25e-3, x0=-1e-3, z0=2e-3)
        np.testing.assert_allclose(g.x, [-1e-3, -0.5e-3, 0.0, 0.5e-3])
        np.testing.assert_allclose(g.z, [2e-3, 2.25e-3, 2.5e-3])
        assert g.shape == (3, 4)

    @pytest.mark.parametrize("kw", [dict(dx=0.0), dict(dz=-1.0), dict(nx=1), dict(nz=1),
                                    dict(x0=np.nan)])
    def test_invalid(self, kw):
        base = dict(nx=4, nz=4, dx=1e-3, dz=1e-3)
        base.update(kw)
        with pytest.raises(InvalidParameterError):
            ImagingGrid(**base)

    def test_from_extent_includes_end_points(self):
        g = ImagingGrid.from_extent(-1e-3, 1e-3, 0.0, 5e-3, 0.1e-3)
        assert g.nx == 21 and g.nz == 51
        assert g.x_extent[1] == pytest.approx(1e-3)


class TestMediumMap:
    def test_shape_mismatch(self):
        g = ImagingGrid(4, 3, 1e-3, 1e-3)
        with pytest.raises(InvalidParameterError):
            MediumMap(g, np.full((4, 3), 1540.0))

    @pytest.mark.parametrize("bad", [0.0, -1.0, np.inf, np.nan])
    def test_speed_must_be_positive_finite(self, bad):
        g = ImagingGrid(4, 3, 1e-3, 1e-3)
        c = np.full(g.shape, 1540.0)
        c[1, 2] = bad
        with pytest.raises(InvalidParameterError):
            MediumMap(g, c)

    def test_read_only(self):
        m = MediumMap.homogeneous(ImagingGrid(4, 3, 1e-3, 1e-3))
        with pytest.raises(ValueError):
            m.c[0, 0] = 1.0
        assert m.is_homogeneous


class TestArray:
    def test_l11_5v_positions(self):
        a = ArrayGeometry.l11_5v()
        x = a.element_positions
        assert x.size == 128
        np.testing.assert_allclose(np.diff(x), 0.3e-3)
        np.testing.assert_allclose(x, -x[::-1], atol=1e-18)
        assert a.aperture == pytest.approx(38.4e-3)


class TestPlaneWaveDelays:
    def test_broadside_all_zero(self):
        d = plane_wave_delays(ArrayGeometry.l11_5v(), 0.0, 1540.0)
        assert np.all(d == 0)

    def test_mirror_symmetry(self):
        a = ArrayGeometry.l11_5v()
        np.testing.assert_allclose(plane_wave_delays(a, 0.1, 1540.0),
                                   plane_wave_delays(a, -0.1, 1540.0)[::-1], atol=1e-20)

    def test_max_delay_regression(self):
        # (127 * 0.3 mm * sin 12 deg) / 1540 m/s evaluated independently
        d = plane_wave_delays(ArrayGeometry.l11_5v(), np.deg2rad(12.0), 1540.0)
        assert d.min() == 0.0
        assert d.max() == pytest.approx(5.143789233867941e-06, rel=1e-12)

    @pytest.mark.parametrize("angle,c0", [(np.nan, 1540.0), (0.1, np.inf), (np.pi / 2, 1540.0),
                                          (0.1, 0.0)])
    def test_invalid(self, angle, c0):
        with pytest.raises(InvalidParameterError):
            plane_wave_delays(ArrayGeometry.l11_5v(), angle, c0)

    @given(st.floats(-1.5, 1.5).filter(lambda a: abs(a) > 1e-6))
    def test_monotonic(self, angle):
        d = plane_wave_delays(ArrayGeometry(16, 0.3e-3, 5e6), angle, 1540.0)
        diff = np.diff(d)
        assert np.all(diff > 0) if angle > 0 else np.all(diff < 0)

    def test_event_rejects_negative_delays(self):
        with pytest.raises(InvalidParameterError):
            TransmitEvent(0.0, np.array([0.0, -1e-9]), 5e6)


class TestResample:
    def test_identity(self):
        m = ramp_medium()
        out = resample_medium(m, m.grid)
        np.testing.assert_array_equal(out.c, m.c)

    def test_constant_field(self):
        g = ImagingGrid(5, 5, 1e-3, 1e-3)
        m = MediumMap(g, np.full(g.shape, 1600.0))
        t = ImagingGrid(17, 9, 0.3e-3, 0.45e-3, x0=-1e-3, z0=0.5e-3)
        np.testing.assert_allclose(resample_medium(m, t).c, 1600.0, rtol=0, atol=1e-9)

    def test_linear_ramp_midpoints_exact(self):
        m = ramp_medium()
        g = m.grid
        fine = ImagingGrid(2 * g.nx - 1, 2 * g.nz - 1, g.dx / 2, g.dz / 2, g.x0, g.z0)
        out = resample_medium(m, fine)
        expected = 1500.0 + 1e4 * fine.x
        np.testing.assert_allclose(out.c, np.broadcast_to(expected, fine.shape), rtol=1e-13)

    def test_out_of_bounds_takes_edge(self):
        m = ramp_medium()
        t = ImagingGrid(3, 2, 1e-3, 1e-3, x0=4e-3)
        out = resample_medium(m, t)
        assert np.all(out.c[:, 1:] == m.c[0, -1])

    def test_no_overlap(self):
        with pytest.raises(InvalidParameterError):
            resample_medium(ramp_medium(), ImagingGrid(3, 3, 1e-3, 1e-3, x0=1.0))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.2e-3, 2e-3), st.floats(-4e-3, 2e-3))
    def test_convex_bounds(self, seed, d, x0):
        rng = np.random.default_rng(seed)
        g = ImagingGrid(8, 6, 1e-3, 1e-3, x0=-4e-3)
        m = MediumMap(g, rng.uniform(1400, 1650, g.shape))
        out = resample_medium(m, ImagingGrid(7, 9, d, d, x0=x0))
        assert out.c.min() >= m.c.min() - 1e-9
        assert out.c.max() <= m.c.max() + 1e-9


class TestMediumFile:
    def test_round_trip(self, tmp_path):
        m = ramp_medium()
        write_medium(tmp_path / "MEDIUM.bin", m)
        back = read_medium(tmp_path / "MEDIUM.bin")
        assert back.grid == m.grid and back.c0 == m.c0
        np.testing.assert_array_equal(back.c, m.c.astype(np.float32))

    def test_layout(self, tmp_path):
        m = ramp_medium(nx=3, nz=2)
        write_medium(tmp_path / "m.bin", m)
        raw = (tmp_path / "m.bin").read_bytes()
        assert raw[:8] == b"HWCIMED\x00"
        assert len(raw) == 16 + 2 * 8 + 5 * 8 + 4 * 6
        assert np.frombuffer(raw[16:32], "<u8").tolist() == [3, 2]
        payload = np.frombuffer(raw[72:], "<f4")
        np.testing.assert_array_equal(payload, m.c.ravel().astype(np.float32))

    @pytest.mark.parametrize("mutate", ["magic", "version", "truncate"])
    def test_corrupt(self, tmp_path, mutate):
        p = tmp_path / "m.bin"
        write_medium(p, ramp_medium())
        raw = bytearray(p.read_bytes())
        if mutate == "magic":
            raw[0:1] = b"X"
        elif mutate == "version":
            raw[8] = 7
        else:
            raw = raw[:-3]
        p.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            read_medium(p)
