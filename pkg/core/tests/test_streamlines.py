import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from scipy.interpolate import splev

from core.errors import MissingInputError, TckDatatypeError, TckHeaderError, TckTruncatedError
from core.geometry import GridGeometry, nearest_voxel
from core.streamlines import (
    Tractogram,
    arc_length,
    densify,
    fit_bspline,
    read_tck,
    smooth_bspline,
    voxelize,
    write_tck,
)


class ArcLengthTests(SimpleTestCase):
    def test_triangle(self):
        self.assertAlmostEqual(arc_length([(0, 0, 0), (3, 4, 0)]), 5.0)

    def test_collinear(self):
        self.assertAlmostEqual(arc_length([(0, 0, 0), (1, 0, 0), (2, 0, 0)]), 2.0)

    def test_scaling_doubles_length(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            s = rng.normal(size=(rng.integers(2, 30), 3))
            self.assertAlmostEqual(arc_length(2 * s), 2 * arc_length(s), places=9)

    def test_single_point(self):
        self.assertEqual(arc_length([(1, 2, 3)]), 0.0)

    def test_densify_respects_step(self):
        samples, seg_index = densify(np.array([(0, 0, 0), (3, 0, 0), (3, 1, 0)], dtype=float), 0.5)
        steps = np.linalg.norm(np.diff(samples, axis=0), axis=1)
        self.assertLessEqual(steps.max(), 0.5 + 1e-12)
        np.testing.assert_array_equal(samples[-1], (3, 1, 0))
        self.assertEqual(len(samples), len(seg_index))


class BSplineTests(SimpleTestCase):
    def test_straight_line_stays_collinear(self):
        s = np.column_stack([np.linspace(0, 30, 12), np.zeros(12), np.zeros(12)])
        out = smooth_bspline(s, smoothing=12.0, out_spacing=1.0)
        self.assertLess(np.abs(out[:, 1:]).max(), 1e-6)

    def test_zero_smoothing_interpolates(self):
        t = np.linspace(0, np.pi, 10)
        s = np.column_stack([10 * np.cos(t), 10 * np.sin(t), t])
        spline, u = fit_bspline(s, 0.0)
        fitted = np.column_stack(splev(u, spline))
        np.testing.assert_allclose(fitted, s, atol=1e-6)

    def test_zigzag_is_flattened(self):
        n = 40
        s = np.column_stack([np.arange(n, dtype=float), 0.5 * (-1.0) ** np.arange(n), np.zeros(n)])
        out = smooth_bspline(s, smoothing=n * 0.25, out_spacing=0.5)
        self.assertLess(np.abs(out[:, 1]).max(), 0.5)

    def test_short_streamline_unchanged(self):
        s = np.array([(0, 0, 0), (1, 0, 0), (2, 1, 0)], dtype=float)
        np.testing.assert_array_equal(smooth_bspline(s, 3.0, 0.5), s)

    def test_output_spacing(self):
        s = np.column_stack([np.linspace(0, 50, 30), np.zeros(30), np.zeros(30)])
        out = smooth_bspline(s, 30.0, 1.75)
        self.assertEqual(len(out), int(np.ceil(50 / 1.75)) + 1)
        np.testing.assert_allclose(out[[0, -1], 0], (0, 50), atol=1e-6)


class VoxelizeTests(SimpleTestCase):
    def setUp(self):
        self.geom = GridGeometry.isotropic((8, 8, 8), 1.0)

    def test_axis_aligned_streamline(self):
        s = np.array([(x, 0, 0) for x in range(5)], dtype=float)
        mask = voxelize(Tractogram([s], self.geom))
        self.assertEqual(mask.count, 5)
        self.assertTrue(mask.data[:5, 0, 0].all())

    def test_empty_tractogram(self):
        self.assertEqual(voxelize(Tractogram([], self.geom)).count, 0)

    def test_diagonal_matches_dense_sampling(self):
        start, end = np.array([0.0, 0.0, 0.0]), np.array([4.0, 4.0, 0.0])
        mask = voxelize(Tractogram([np.vstack([start, end])], self.geom))
        t = np.arange(0.0, 1.0 + 1e-12, 0.01 / np.linalg.norm(end - start))
        dense = nearest_voxel(start + t[:, None] * (end - start))
        expected = np.zeros(self.geom.dims, dtype=bool)
        expected[dense[:, 0], dense[:, 1], dense[:, 2]] = True
        np.testing.assert_array_equal(mask.data, expected)

    def test_monotone_in_streamlines(self):
        rng = np.random.default_rng(4)
        a = [rng.uniform(0, 7, (5, 3)) for _ in range(3)]
        b = [rng.uniform(0, 7, (5, 3)) for _ in range(3)]
        small = voxelize(Tractogram(a, self.geom))
        large = voxelize(Tractogram(a + b, self.geom))
        self.assertTrue(np.all(large.data[small.data]))

    def test_points_outside_grid_are_ignored(self):
        s = np.array([(-5, 0, 0), (2, 0, 0)], dtype=float)
        mask = voxelize(Tractogram([s], self.geom))
        self.assertEqual(mask.count, 3)


class TckTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_empty_round_trip(self):
        path = self.dir / "empty.tck"
        write_tck(Tractogram([]), path)
        self.assertIn(b"count: 0000000000\n", path.read_bytes())
        self.assertEqual(len(read_tck(path)), 0)

    def test_single_streamline_round_trip(self):
        path = self.dir / "one.tck"
        s = np.array([(0, 0, 0), (1, 1, 1)], dtype=float)
        write_tck(Tractogram([s]), path)
        loaded = read_tck(path)
        self.assertEqual(len(loaded), 1)
        np.testing.assert_array_equal(loaded.streamlines[0], s)

    def test_random_tractograms_are_bit_exact(self):
        rng = np.random.default_rng(5)
        for i in range(100):
            streamlines = [rng.normal(0, 50, (rng.integers(2, 40), 3)) for _ in range(rng.integers(0, 6))]
            first, second = self.dir / f"a{i}.tck", self.dir / f"b{i}.tck"
            write_tck(Tractogram(streamlines), first)
            loaded = read_tck(first)
            for original, back in zip(streamlines, loaded.streamlines):
                np.testing.assert_array_equal(back, original.astype(np.float32))
            write_tck(loaded, second)
            self.assertEqual(first.read_bytes(), second.read_bytes())

    def test_header_offset_points_to_payload(self):
        path = self.dir / "one.tck"
        write_tck(Tractogram([np.zeros((2, 3))]), path)
        raw = path.read_bytes()
        offset = int(raw.split(b"file: . ")[1].split(b"\n")[0])
        self.assertEqual(raw[offset - 4:offset], b"END\n")

    def test_grid_is_stored_in_header(self):
        geom = GridGeometry.isotropic((50, 50, 50), 2.5, origin=(-10.0, 3.0, 7.5))
        path = self.dir / "grid.tck"
        write_tck(Tractogram([np.ones((3, 3))], geom), path)
        self.assertTrue(read_tck(path).geometry.same_as(geom))
        other = GridGeometry.isotropic((10, 10, 10), 1.0)
        self.assertIs(read_tck(path, other).geometry, other)

    def test_missing_file(self):
        with self.assertRaises(MissingInputError):
            read_tck(self.dir / "nada.tck")

    def test_bad_magic(self):
        path = self.dir / "bad.tck"
        path.write_bytes(b"not a track file\nEND\n")
        with self.assertRaises(TckHeaderError):
            read_tck(path)

    def test_wrong_datatype(self):
        path = self.dir / "f64.tck"
        write_tck(Tractogram([np.zeros((2, 3))]), path)
        path.write_bytes(path.read_bytes().replace(b"Float32LE", b"Float64LE"))
        with self.assertRaises(TckDatatypeError):
            read_tck(path)

    def test_big_endian_rejected(self):
        path = self.dir / "be.tck"
        write_tck(Tractogram([np.zeros((2, 3))]), path)
        path.write_bytes(path.read_bytes().replace(b"Float32LE", b"Float32BE"))
        with self.assertRaises(TckDatatypeError):
            read_tck(path)

    def test_missing_datatype(self):
        path = self.dir / "nodtype.tck"
        write_tck(Tractogram([np.zeros((2, 3))]), path)
        path.write_bytes(path.read_bytes().replace(b"datatype: Float32LE\n", b"", 1))
        with self.assertRaises(TckHeaderError):
            read_tck(path)

    def test_header_keys(self):
        path = self.dir / "keys.tck"
        write_tck(Tractogram([np.zeros((2, 3))] * 2, GridGeometry.isotropic((4, 4, 4), 1.0)), path)
        header = path.read_bytes().split(b"END\n")[0].decode("latin-1")
        self.assertTrue(header.startswith("mrtrix tracks\n"))
        for line in ("count: 0000000002", "datatype: Float32LE", "total_count: 2", "grid_dims: 4 4 4"):
            self.assertIn(line + "\n", header)

    def test_missing_terminator(self):
        path = self.dir / "cut.tck"
        write_tck(Tractogram([np.zeros((2, 3))]), path)
        path.write_bytes(path.read_bytes()[:-12])
        with self.assertRaises(TckTruncatedError):
            read_tck(path)

    def test_partial_triplet(self):
        path = self.dir / "cut.tck"
        write_tck(Tractogram([np.zeros((2, 3))]), path)
        path.write_bytes(path.read_bytes()[:-4])
        with self.assertRaises(TckTruncatedError):
            read_tck(path)

    def test_fewer_streamlines_than_declared(self):
        path = self.dir / "short.tck"
        write_tck(Tractogram([np.zeros((2, 3))]), path)
        path.write_bytes(path.read_bytes().replace(b"count: 0000000001\n", b"count: 0000000003\n", 1))
        with self.assertRaises(TckTruncatedError):
            read_tck(path)
