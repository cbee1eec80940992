import numpy as np
from django.test import SimpleTestCase

from core.errors import ConfigError, InseparableRegionsError
from core.geometry import GridGeometry, voxel_to_world
from core.metrics import angular_error_map, dice
from core.phantom import BundleSpec, default_geometry, generate_phantom
from core.reference_prep import (
    ClusterParams,
    _subsample,
    dbscan,
    endpoint_union_mask,
    extract_endpoint_regions,
    extract_tom,
    mean_shift,
    starts_before,
    voxel_orientation,
)
from core.streamlines import Tractogram


class DbscanTests(SimpleTestCase):
    def setUp(self):
        rng = np.random.default_rng(0)
        self.blob_a = rng.normal(0, 1, (50, 3))
        self.blob_b = rng.normal(0, 1, (50, 3)) + (100, 0, 0)

    def test_two_blobs(self):
        labels = dbscan(np.vstack([self.blob_a, self.blob_b]), eps=5, min_pts=5)
        self.assertEqual(len(set(labels[labels >= 0])), 2)
        self.assertEqual(len(set(labels[:50])), 1)

    def test_isolated_point_is_noise(self):
        labels = dbscan(np.vstack([self.blob_a, [(100, 0, 0)]]), eps=5, min_pts=5)
        self.assertEqual(labels[-1], -1)

    def test_large_eps_single_cluster(self):
        labels = dbscan(np.vstack([self.blob_a, self.blob_b]), eps=500, min_pts=5)
        self.assertEqual(set(labels), {0})

    def test_partition_invariant_under_shuffle(self):
        points = np.vstack([self.blob_a, self.blob_b, [(50, 50, 50)]])
        order = np.random.default_rng(1).permutation(len(points))

        def partition(labels, index):
            return {frozenset(index[labels == k]) for k in set(labels)}

        original = partition(dbscan(points, eps=5, min_pts=5), np.arange(len(points)))
        shuffled = partition(dbscan(points[order], eps=5, min_pts=5), order)
        self.assertEqual(original, shuffled)
        self.assertEqual(len(original), 3)

    def test_subsample_identity(self):
        points = np.arange(30, dtype=float).reshape(10, 3)
        self.assertIs(_subsample(points, 10), points)
        self.assertEqual(len(_subsample(points, 4)), 4)


class MeanShiftTests(SimpleTestCase):
    def test_identical_points(self):
        modes = mean_shift(np.tile([1.0, 2.0, 3.0], (20, 1)), bandwidth=0.3)
        self.assertEqual(len(modes), 1)
        np.testing.assert_allclose(modes[0].center, (1, 2, 3))
        self.assertEqual(modes[0].member_count, 20)

    def test_two_separated_groups(self):
        rng = np.random.default_rng(1)
        a = rng.normal(0, 0.01, (30, 3))
        b = rng.normal(0, 0.01, (20, 3)) + (5, 0, 0)
        modes = mean_shift(np.vstack([a, b]), bandwidth=0.3, tol=1e-4)
        self.assertEqual([m.member_count for m in modes], [30, 20])
        np.testing.assert_allclose(modes[0].center, a.mean(axis=0), atol=1e-4)
        np.testing.assert_allclose(modes[1].center, b.mean(axis=0), atol=1e-4)

    def test_single_point(self):
        modes = mean_shift(np.array([[0.5, 0.5, 0.5]]), bandwidth=0.3)
        self.assertEqual(len(modes), 1)
        self.assertEqual(modes[0].member_count, 1)

    def test_params_must_be_positive(self):
        with self.assertRaises(ConfigError):
            ClusterParams(dbscan_eps=1.0, meanshift_bandwidth=0.0)


class VoxelOrientationTests(SimpleTestCase):
    def setUp(self):
        self.params = ClusterParams(dbscan_eps=1.0)

    def test_majority_direction_wins(self):
        rng = np.random.default_rng(2)
        x = np.tile([1.0, 0.0, 0.0], (70, 1)) + rng.normal(0, 0.01, (70, 3))
        tilted = np.tile([np.cos(np.pi / 3), np.sin(np.pi / 3), 0.0], (30, 1)) + rng.normal(0, 0.01, (30, 3))
        directions = np.vstack([x, tilted])
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        out = voxel_orientation(directions, self.params)
        self.assertLess(np.degrees(np.arccos(min(1.0, abs(out[0])))), 5.0)

    def test_antipodal_directions_are_merged(self):
        v = np.array([0.0, 0.6, 0.8])
        out = voxel_orientation(np.vstack([np.tile(v, (10, 1)), np.tile(-v, (10, 1))]), self.params)
        self.assertGreaterEqual(abs(out @ v), 1 - 1e-6)


class ExtractTomTests(SimpleTestCase):
    def setUp(self):
        self.geom = GridGeometry.isotropic((12, 12, 12), 1.0)
        self.params = ClusterParams.for_geometry(self.geom)

    def test_constant_field(self):
        xs = np.linspace(1, 10, 19)
        streamlines = [np.column_stack([xs, np.full(19, y), np.full(19, 5.0)]) for y in (4.0, 5.0, 6.2)]
        tom = extract_tom(Tractogram(streamlines, self.geom), self.params)
        covered = tom.norms() > 0
        self.assertGreater(covered.sum(), 0)
        np.testing.assert_allclose(tom.data[covered], np.tile([1.0, 0.0, 0.0], (covered.sum(), 1)), atol=1e-6)

    def test_half_reversed_streamlines(self):
        v = np.array([1.0, 1.0, 0.0]) / np.sqrt(2)
        t = np.linspace(0, 8, 17)
        base = [np.array([2.0, 2.0, 5.0]) + t[:, None] * v, np.array([2.0, 3.0, 5.0]) + t[:, None] * v]
        streamlines = [base[0], base[1][::-1]]
        tom = extract_tom(Tractogram(streamlines, self.geom), self.params)
        covered = tom.norms() > 0
        self.assertTrue(np.all(np.abs(tom.data[covered] @ v) >= 1 - 1e-6))

    def test_invariant_under_reversal(self):
        rng = np.random.default_rng(3)
        streamlines = [np.cumsum(rng.normal(0.3, 0.4, (15, 3)), axis=0) + 2 for _ in range(8)]
        forward = extract_tom(Tractogram(streamlines, self.geom), self.params)
        backward = extract_tom(Tractogram([s[::-1] for s in streamlines], self.geom), self.params)
        np.testing.assert_array_equal(forward.norms() > 0, backward.norms() > 0)
        covered = forward.norms() > 0
        dots = np.abs(np.einsum("ic,ic->i", forward.data[covered], backward.data[covered]))
        self.assertTrue(np.all(dots >= 1 - 1e-6))

    def test_arc_phantom_fidelity(self):
        phantom = generate_phantom(BundleSpec(kind="arc"), default_geometry(), seed=0)
        params = ClusterParams.for_geometry(phantom.tractogram.geometry)
        tom = extract_tom(phantom.tractogram, params)
        errors, comparable = angular_error_map(tom, phantom.tom_gt)
        self.assertLessEqual(errors[comparable].mean(), 5.0)


class StartsBeforeTests(SimpleTestCase):
    def test_z_first(self):
        self.assertTrue(starts_before((9, 9, 0), (0, 0, 5), 1.0))
        self.assertFalse(starts_before((0, 0, 5), (9, 9, 0), 1.0))

    def test_small_difference_is_a_tie(self):
        self.assertTrue(starts_before((0, 0, 0.4), (0, 3, 0), 1.0))
        self.assertFalse(starts_before((0, 3, 0), (0, 0, 0.4), 1.0))

    def test_identical(self):
        self.assertTrue(starts_before((1, 2, 3), (1, 2, 3), 0.5))


class EndpointRegionTests(SimpleTestCase):
    def regions_for(self, kind, **shape):
        phantom = generate_phantom(BundleSpec(kind=kind, **shape), default_geometry(), seed=0)
        params = ClusterParams.for_geometry(phantom.tractogram.geometry)
        return phantom, extract_endpoint_regions(phantom.tractogram, params)

    def assert_disjoint_and_nonempty(self, regions):
        self.assertGreater(regions.start.count, 0)
        self.assertGreater(regions.end.count, 0)
        self.assertFalse(np.any(regions.start.data & regions.end.data))

    def test_straight_phantom(self):
        phantom, regions = self.regions_for("straight")
        self.assert_disjoint_and_nonempty(regions)
        self.assertGreaterEqual(dice(regions.start, phantom.endpoints_gt.start), 0.6)
        self.assertGreaterEqual(dice(regions.end, phantom.endpoints_gt.end), 0.6)

    def test_arc_phantom(self):
        phantom, regions = self.regions_for("arc")
        self.assert_disjoint_and_nonempty(regions)
        self.assertGreaterEqual(dice(regions.start, phantom.endpoints_gt.start), 0.6)
        self.assertGreaterEqual(dice(regions.end, phantom.endpoints_gt.end), 0.6)

    def centroid(self, mask):
        return voxel_to_world(mask.geometry, mask.voxels()).mean(axis=0)

    def test_arc_start_is_lower_y(self):
        # arco no plano z constante: o desempate vai para y
        phantom, regions = self.regions_for("arc")
        self.assertLess(self.centroid(regions.start)[1], self.centroid(regions.end)[1] - 10.0)
        gt = phantom.endpoints_gt
        self.assertLess(self.centroid(gt.start)[1], self.centroid(gt.end)[1] - 10.0)

    def test_start_is_lower_z(self):
        geom = GridGeometry.isotropic((30, 30, 30), 1.0)
        rng = np.random.default_rng(8)
        streamlines = []
        for i in range(60):
            x, y = rng.normal(15, 1.5, 2)
            s = np.column_stack([np.full(21, x), np.full(21, y), np.linspace(4, 24, 21)])
            # metade gravada de cima para baixo
            streamlines.append(s if i % 2 else s[::-1])
        regions = extract_endpoint_regions(Tractogram(streamlines, geom), ClusterParams.for_geometry(geom))
        self.assertLess(self.centroid(regions.start)[2], 8.0)
        self.assertGreater(self.centroid(regions.end)[2], 20.0)

    def test_u_shape_still_separates(self):
        _, regions = self.regions_for("u_shape", arc_radius_mm=20.0, sweep_deg=180.0, length_mm=40.0)
        self.assert_disjoint_and_nonempty(regions)

    def test_single_ball_is_inseparable(self):
        geom = GridGeometry.isotropic((20, 20, 20), 1.0)
        rng = np.random.default_rng(4)
        streamlines = []
        for _ in range(40):
            a, b = rng.normal(10, 0.3, 3), rng.normal(10, 0.3, 3)
            streamlines.append(np.vstack([a, (15.0, 15.0, 15.0), b]))
        with self.assertRaises(InseparableRegionsError):
            extract_endpoint_regions(Tractogram(streamlines, geom), ClusterParams.for_geometry(geom))

    def test_union_mask_covers_both_regions(self):
        phantom, regions = self.regions_for("straight")
        union = endpoint_union_mask(phantom.tractogram)
        self.assertGreater(union.count, 0)
        self.assertTrue(np.all((regions.start.data | regions.end.data)[union.data]))
