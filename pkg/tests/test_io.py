import struct

import numpy as np
import pytest

from hwci.beamformer import ChannelData, ImagePlane
from hwci.errors import FormatError, InvalidParameterError
from hwci.grid import ArrayGeometry, ImagingGrid
from hwci.io import (grey_levels, read_channels, read_image, read_meta, read_pgm,
                     read_scatterers, write_channels, write_image, write_pgm, write_scatterers)
from hwci.synth import ScattererSet, plane_wave_events

ARRAY = ArrayGeometry(4, 0.3e-3, 7.1e6)


def channels(seed=0):
    rng = np.random.default_rng(seed)
    ev = plane_wave_events(ARRAY, (0.0, 12.0))
    s = rng.normal(size=(2, 4, 50)).astype(np.float32).astype(float)
    return ChannelData(s, 40e6, 1e-6, ARRAY, ev)


def image():
    g = ImagingGrid(6, 5, 0.15e-3, 0.1e-3, x0=-0.4e-3, z0=1e-3)
    i = np.linspace(1e-4, 1.0, 30).reshape(g.shape)
    return ImagePlane(g, i, None, {"mode": "wci", "kernel": "asm"})


class TestChannels:
    def test_round_trip(self, tmp_path):
        raw = channels()
        write_channels(tmp_path / "c.bin", raw)
        back = read_channels(tmp_path / "c.bin")
        np.testing.assert_array_equal(back.samples, raw.samples)
        assert (back.fs, back.t0) == (raw.fs, raw.t0)
        assert back.array == ARRAY
        for a, b in zip(back.events, raw.events):
            assert a.steering_angle == b.steering_angle
            np.testing.assert_array_equal(a.per_element_delay, b.per_element_delay)

    def test_header_layout(self, tmp_path):
        write_channels(tmp_path / "c.bin", channels())
        raw = (tmp_path / "c.bin").read_bytes()
        magic, ver, n_tx, n_el, n_t, fs, t0, pitch, fc = struct.unpack_from("<8sQQQQdddd", raw)
        assert magic == b"HWCICHN\x00" and ver == 1
        assert (n_tx, n_el, n_t) == (2, 4, 50)
        assert (fs, t0, pitch, fc) == (40e6, 1e-6, 0.3e-3, 7.1e6)
        assert len(raw) == 72 + 2 * (24 + 4 * 8) + 4 * 2 * 4 * 50

    @pytest.mark.parametrize("mutate", ["magic", "version", "truncate"])
    def test_corrupt(self, tmp_path, mutate):
        p = tmp_path / "c.bin"
        write_channels(p, channels())
        b = bytearray(p.read_bytes())
        if mutate == "magic":
            b[0] = ord("X")
        elif mutate == "version":
            b[8] = 9
        else:
            b = b[:-1]
        p.write_bytes(bytes(b))
        with pytest.raises(FormatError):
            read_channels(p)


class TestImages:
    def test_grey_levels(self):
        im = image()
        g8 = grey_levels(im, 40.0, 8)
        assert g8.dtype == np.uint8 and g8.max() == 255
        db = im.db
        np.testing.assert_array_equal(g8[db <= -40], 0)
        g16 = grey_levels(im, 40.0, 16)
        assert g16.max() == 65535
        with pytest.raises(InvalidParameterError):
            grey_levels(im, 0.0)

    @pytest.mark.parametrize("bits", [8, 16])
    def test_pgm_round_trip(self, tmp_path, bits):
        im = image()
        write_pgm(tmp_path / "a.pgm", im, 40.0, bits)
        data = (tmp_path / "a.pgm").read_bytes()
        assert data.startswith(b"P5\n6 5\n")
        np.testing.assert_array_equal(read_pgm(tmp_path / "a.pgm"), grey_levels(im, 40.0, bits))

    def test_image_round_trip(self, tmp_path):
        im = image()
        paths = write_image(tmp_path / "wci", im)
        assert sorted(p.suffix for p in paths.values()) == [".f64", ".pgm", ".txt"]
        back = read_image(tmp_path / "wci")
        np.testing.assert_array_equal(back.intensity, im.intensity)
        assert back.grid == im.grid
        meta = read_meta(tmp_path / "wci.txt")
        assert meta["mode"] == "wci" and meta["dynamic_range_db"] == "40.0"
        assert (tmp_path / "wci.f64").read_bytes() == im.intensity.astype("<f8").tobytes()

    def test_bad_raw_size(self, tmp_path):
        write_image(tmp_path / "x", image())
        (tmp_path / "x.f64").write_bytes(b"\0" * 16)
        with pytest.raises(FormatError):
            read_image(tmp_path / "x")


def test_scatterer_table_round_trip(tmp_path):
    sc = ScattererSet(np.array([[1e-3, 2e-3], [-0.1, 0.3]]), np.array([0.5, -1e-7]))
    write_scatterers(tmp_path / "s.csv", sc)
    back = read_scatterers(tmp_path / "s.csv")
    np.testing.assert_array_equal(back.positions, sc.positions)
    np.testing.assert_array_equal(back.reflectivities, sc.reflectivities)
    (tmp_path / "e.csv").write_text("x_m,z_m,reflectivity\n")
    assert len(read_scatterers(tmp_path / "e.csv")) == 0
