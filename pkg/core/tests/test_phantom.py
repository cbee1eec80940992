import math

import numpy as np
from django.test import SimpleTestCase
from scipy import ndimage

from core.errors import BundleExceedsGridError, ConfigError
from core.geometry import FACE_STRUCTURE, GridGeometry, OrientationMap, voxel_to_world, world_to_voxel
from core.metrics import angular_error_map
from core.phantom import BundleSpec, default_geometry, generate_phantom, perturb_peaks, synthesize_peaks


class GeneratePhantomTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.geom = default_geometry()
        cls.straight = generate_phantom(BundleSpec(kind="straight"), cls.geom, seed=0)
        cls.arc = generate_phantom(BundleSpec(kind="arc"), cls.geom, seed=0)

    def test_straight_tom_is_x(self):
        tom = self.straight.tom_gt
        covered = tom.norms() > 0
        np.testing.assert_array_equal(covered, self.straight.tract_mask_gt.data)
        np.testing.assert_allclose(tom.data[covered], np.tile([1.0, 0.0, 0.0], (covered.sum(), 1)))

    def test_arc_centerline_tangent(self):
        centerline = self.arc.centerline
        theta = np.linspace(0.0, math.pi / 2, 7)
        _, tangents = centerline.evaluate(60.0 * theta)
        expected = np.column_stack([-np.sin(theta), np.cos(theta), np.zeros_like(theta)])
        np.testing.assert_allclose(tangents, expected, atol=1e-6)

    def test_arc_tom_follows_circle(self):
        voxels = self.arc.tract_mask_gt.voxels()
        relative = voxel_to_world(self.geom, voxels) - self.arc.centerline.offset
        theta = np.arctan2(relative[:, 1], relative[:, 0])
        inner = (theta > 0.05) & (theta < math.pi / 2 - 0.05)
        expected = np.column_stack([-np.sin(theta), np.cos(theta), np.zeros_like(theta)])[inner]
        got = self.arc.tom_gt.data[tuple(voxels[inner].T)]
        np.testing.assert_allclose(got, expected, atol=1e-3)

    def test_tom_support_is_tract_mask(self):
        for phantom in (self.straight, self.arc):
            np.testing.assert_array_equal(phantom.tom_gt.norms() > 0, phantom.tract_mask_gt.data)

    def test_tract_mask_is_connected(self):
        for phantom in (self.straight, self.arc):
            _, components = ndimage.label(phantom.tract_mask_gt.data, structure=FACE_STRUCTURE)
            self.assertEqual(components, 1)

    def test_endpoint_regions(self):
        for phantom in (self.straight, self.arc):
            start, end = phantom.endpoints_gt.start, phantom.endpoints_gt.end
            self.assertGreater(start.count, 0)
            self.assertGreater(end.count, 0)
            self.assertFalse(np.any(start.data & end.data))
            for s in phantom.tractogram.streamlines:
                first, last = world_to_voxel(self.geom, s[[0, -1]])
                in_start = start.contains_points([first, last])
                in_end = end.contains_points([first, last])
                self.assertTrue((in_start[0] and in_end[1]) or (in_end[0] and in_start[1]))

    def test_streamlines_stay_in_tube(self):
        centerline = self.straight.centerline
        for s in self.straight.tractogram.streamlines[:50]:
            radial = np.linalg.norm(s[:, 1:] - centerline.offset[1:], axis=1)
            self.assertLess(radial.max(), 5.0 + 0.6)

    def test_deterministic(self):
        again = generate_phantom(BundleSpec(kind="arc"), self.geom, seed=0)
        for a, b in zip(self.arc.tractogram.streamlines, again.tractogram.streamlines):
            np.testing.assert_array_equal(a, b)
        other = generate_phantom(BundleSpec(kind="arc"), self.geom, seed=1)
        self.assertFalse(np.array_equal(self.arc.tractogram.streamlines[0], other.tractogram.streamlines[0]))

    def test_u_shape_fits(self):
        spec = BundleSpec(kind="u_shape", arc_radius_mm=20.0, sweep_deg=180.0, length_mm=40.0)
        phantom = generate_phantom(spec, self.geom, seed=0)
        self.assertAlmostEqual(phantom.centerline.length, 80.0 + 20.0 * math.pi)

    def test_bundle_exceeds_grid(self):
        with self.assertRaises(BundleExceedsGridError):
            generate_phantom(BundleSpec(kind="straight", length_mm=200.0), self.geom, seed=0)


class BundleSpecTests(SimpleTestCase):
    def test_invalid(self):
        for kwargs in ({"kind": "espiral"}, {"tube_radius_mm": 0.0}, {"kind": "arc", "sweep_deg": 300.0},
                       {"dropout": 1.0}, {"n_streamlines": 0}, {"jitter_mm": -1.0}):
            with self.assertRaises(ConfigError, msg=str(kwargs)):
                BundleSpec(**kwargs)

    def test_full_sweep_allowed(self):
        self.assertEqual(BundleSpec(kind="arc", sweep_deg=270.0).sweep_deg, 270.0)


class PerturbPeaksTests(SimpleTestCase):
    def setUp(self):
        self.geom = GridGeometry.isotropic((10, 10, 10), 1.0)
        rng = np.random.default_rng(0)
        data = rng.normal(size=self.geom.dims + (3,))
        self.tom = OrientationMap(self.geom, data * rng.uniform(0.5, 2.0, self.geom.dims)[..., None])

    def test_identity(self):
        out = perturb_peaks(self.tom, 0.0, 0.0, np.random.default_rng(1))
        np.testing.assert_array_equal(out.data, self.tom.data)

    def test_dropout_fraction(self):
        out = perturb_peaks(self.tom, 0.0, 0.5, np.random.default_rng(2))
        zeroed = int((out.norms() == 0).sum())
        self.assertGreaterEqual(zeroed, 450)
        self.assertLessEqual(zeroed, 550)

    def test_noise_angle(self):
        out = perturb_peaks(self.tom, 10.0, 0.0, np.random.default_rng(3))
        errors, comparable = angular_error_map(self.tom, out)
        self.assertTrue(6.0 <= errors[comparable].mean() <= 10.0)

    def test_norms_preserved(self):
        out = perturb_peaks(self.tom, 25.0, 0.0, np.random.default_rng(4))
        np.testing.assert_allclose(out.norms(), self.tom.norms(), atol=1e-9)

    def test_deterministic(self):
        a = perturb_peaks(self.tom, 5.0, 0.1, np.random.default_rng(5))
        b = perturb_peaks(self.tom, 5.0, 0.1, np.random.default_rng(5))
        np.testing.assert_array_equal(a.data, b.data)

    def test_negative_noise(self):
        with self.assertRaises(ConfigError):
            perturb_peaks(self.tom, -1.0, 0.0, np.random.default_rng(0))


class SynthesizePeaksTests(SimpleTestCase):
    def test_first_peak_is_tom(self):
        geom = GridGeometry.isotropic((4, 4, 4), 1.0)
        data = np.zeros(geom.dims + (3,))
        data[1:3, 1:3, 1:3] = (0.0, 0.0, 1.0)
        tom = OrientationMap(geom, data)
        peaks = synthesize_peaks(tom, np.random.default_rng(0))
        np.testing.assert_array_equal(peaks.data[..., 0, :], data)
        distractor_norms = np.linalg.norm(peaks.data[..., 1:, :], axis=-1)
        support = tom.norms() > 0
        self.assertTrue(np.all((distractor_norms[support] >= 0.3) & (distractor_norms[support] <= 0.6)))
        self.assertTrue(np.all(distractor_norms[~support] == 0))
