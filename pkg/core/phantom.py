"""
Phantoms analíticos: bundles sintéticos com ground truth exata
(streamlines, TOM, máscara do trato e regiões de início/fim).

🔹 straight: tubo reto ao longo de +x.
🔹 arc: arco circular no plano xy (ângulo inicial 0, sentido anti-horário).
🔹 u_shape: perna reta + arco + perna reta (pontas próximas uma da outra).
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import BundleExceedsGridError, ConfigError
from .geometry import GridGeometry, OrientationMap, PeakImage, morphology, voxel_to_world, world_to_voxel
from .reference_prep import EndpointRegions, starts_before
from .streamlines import Tractogram, voxelize, voxelize_points

logger = logging.getLogger(__name__)

KINDS = ("straight", "arc", "u_shape")
GRID_MARGIN_VOX = 2
FOOT_POINT_STEP_MM = 0.05


@dataclass(frozen=True)
class BundleSpec:
    kind: str = "straight"
    length_mm: float = 100.0
    arc_radius_mm: float = 60.0
    sweep_deg: float = 90.0
    tube_radius_mm: float = 5.0
    n_streamlines: int = 500
    jitter_mm: float = 0.1
    noise_angle_deg: float = 0.0
    dropout: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind inválido: {self.kind} (use {', '.join(KINDS)})")
        if self.tube_radius_mm <= 0:
            raise ConfigError("tube_radius_mm deve ser > 0")
        if self.kind != "straight":
            if not 0 < self.sweep_deg <= 270:
                raise ConfigError("sweep_deg deve estar em (0, 270]")
            if self.arc_radius_mm <= self.tube_radius_mm:
                raise ConfigError("arc_radius_mm deve ser maior que tube_radius_mm")
        if self.kind != "arc" and self.length_mm <= 0:
            raise ConfigError("length_mm deve ser > 0")
        if self.n_streamlines < 1:
            raise ConfigError("n_streamlines deve ser >= 1")
        if self.jitter_mm < 0 or self.noise_angle_deg < 0:
            raise ConfigError("jitter_mm e noise_angle_deg devem ser >= 0")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout deve estar em [0, 1)")


@dataclass
class Phantom:
    tractogram: Tractogram
    tom_gt: OrientationMap
    tract_mask_gt: object
    endpoints_gt: EndpointRegions
    centerline: object


def default_geometry(dims=50, spacing=2.5) -> GridGeometry:
    return GridGeometry.isotropic((dims,) * 3, spacing)


# ============================================================
#  LINHA CENTRAL
# ============================================================
@dataclass(frozen=True)
class StraightPiece:
    start: tuple
    direction: tuple
    length: float

    def evaluate(self, t):
        start, direction = np.asarray(self.start), np.asarray(self.direction)
        points = start + t[:, None] * direction
        return points, np.broadcast_to(direction, points.shape).copy()


@dataclass(frozen=True)
class ArcPiece:
    """Arco no plano xy: ponto = centro + R(cos θ, sin θ, 0), θ = ângulo inicial + t/R."""
    center: tuple
    radius: float
    start_angle: float
    sweep: float

    @property
    def length(self):
        return self.radius * self.sweep

    def evaluate(self, t):
        theta = self.start_angle + t / self.radius
        cos, sin = np.cos(theta), np.sin(theta)
        zeros = np.zeros_like(theta)
        points = np.asarray(self.center) + self.radius * np.column_stack([cos, sin, zeros])
        tangents = np.column_stack([-sin, cos, zeros])
        return points, tangents


class Centerline:
    """Curva parametrizada por comprimento de arco (mm), sempre no plano xy."""

    def __init__(self, pieces, offset=(0.0, 0.0, 0.0)):
        self.pieces = list(pieces)
        self.offset = np.asarray(offset, dtype=np.float64)
        self.bounds = np.cumsum([0.0] + [p.length for p in self.pieces])

    @property
    def length(self) -> float:
        return float(self.bounds[-1])

    def shifted(self, offset):
        return Centerline(self.pieces, self.offset + np.asarray(offset))

    def evaluate(self, s):
        s = np.clip(np.atleast_1d(np.asarray(s, dtype=np.float64)), 0.0, self.length)
        which = np.clip(np.searchsorted(self.bounds, s, side="right") - 1, 0, len(self.pieces) - 1)
        points = np.empty((len(s), 3))
        tangents = np.empty((len(s), 3))
        for k, piece in enumerate(self.pieces):
            sel = which == k
            if sel.any():
                points[sel], tangents[sel] = piece.evaluate(s[sel] - self.bounds[k])
        return points + self.offset, tangents

    def frame(self, s):
        """(pontos, tangentes, normais no plano, binormais)."""
        points, tangents = self.evaluate(s)
        normals = np.column_stack([-tangents[:, 1], tangents[:, 0], np.zeros(len(tangents))])
        binormals = np.broadcast_to([0.0, 0.0, 1.0], points.shape)
        return points, tangents, normals, binormals


def build_centerline(spec: BundleSpec, geom: GridGeometry) -> Centerline:
    """Monta a curva e centraliza sua caixa envolvente no centro do grid."""
    if spec.kind == "straight":
        pieces = [StraightPiece((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), spec.length_mm)]
    else:
        sweep = math.radians(spec.sweep_deg)
        radius = spec.arc_radius_mm
        arc = ArcPiece((0.0, 0.0, 0.0), radius, 0.0, sweep)
        if spec.kind == "arc":
            pieces = [arc]
        else:
            leg_in = StraightPiece((radius, -spec.length_mm, 0.0), (0.0, 1.0, 0.0), spec.length_mm)
            end = (radius * math.cos(sweep), radius * math.sin(sweep), 0.0)
            leg_out = StraightPiece(end, (-math.sin(sweep), math.cos(sweep), 0.0), spec.length_mm)
            pieces = [leg_in, arc, leg_out]

    centerline = Centerline(pieces)
    samples, _ = centerline.evaluate(np.linspace(0.0, centerline.length, 2000))
    middle = (samples.min(axis=0) + samples.max(axis=0)) / 2.0
    grid_center = voxel_to_world(geom, (np.asarray(geom.dims) - 1) / 2.0)
    return centerline.shifted(grid_center - middle)


# ============================================================
#  GERAÇÃO
# ============================================================
def _streamline(centerline, spec, step, rng):
    n = max(2, math.ceil(centerline.length / step) + 1)
    s = np.linspace(0.0, centerline.length, n)
    points, _, normals, binormals = centerline.frame(s)
    radius = spec.tube_radius_mm * math.sqrt(rng.random())
    phi = 2.0 * math.pi * rng.random()
    a = np.full(n, radius * math.cos(phi))
    b = np.full(n, radius * math.sin(phi))
    if spec.jitter_mm:
        a += rng.normal(0.0, spec.jitter_mm, n)
        b += rng.normal(0.0, spec.jitter_mm, n)
    return points + a[:, None] * normals + b[:, None] * binormals


def _end_cap(centerline, spec, s, geom):
    points, _, normals, binormals = centerline.frame([s])
    radii = np.linspace(0.0, spec.tube_radius_mm, 12)
    angles = np.linspace(0.0, 2.0 * math.pi, 48, endpoint=False)
    r, phi = np.meshgrid(radii, angles)
    r, phi = r.ravel(), phi.ravel()
    disk = points[0] + np.outer(r * np.cos(phi), normals[0]) + np.outer(r * np.sin(phi), binormals[0])
    mask = voxelize_points(geom, disk)
    return morphology(morphology(mask, "closing", 1), "dilation", 1), points[0]


def _tangent_field(centerline, mask, geom):
    n = max(2, math.ceil(centerline.length / FOOT_POINT_STEP_MM) + 1)
    samples, tangents = centerline.evaluate(np.linspace(0.0, centerline.length, n))
    voxels = mask.voxels()
    _, nearest = cKDTree(samples).query(voxel_to_world(geom, voxels))
    data = np.zeros(geom.dims + (3,))
    data[voxels[:, 0], voxels[:, 1], voxels[:, 2]] = tangents[nearest]
    return OrientationMap(geom, data)


def generate_phantom(spec: BundleSpec, geom: GridGeometry, seed: int = 0) -> Phantom:
    """
    Gera o phantom de forma determinística a partir da semente
    (uma subsequência de RNG por streamline).
    """
    centerline = build_centerline(spec, geom)
    step = geom.mean_spacing / 2.0
    children = np.random.SeedSequence(seed).spawn(spec.n_streamlines)
    streamlines = [_streamline(centerline, spec, step, np.random.default_rng(child)) for child in children]

    dims = np.asarray(geom.dims)
    all_vox = world_to_voxel(geom, np.concatenate(streamlines))
    if np.any(all_vox < GRID_MARGIN_VOX) or np.any(all_vox > dims - 1 - GRID_MARGIN_VOX):
        raise BundleExceedsGridError(
            f"bundle {spec.kind} não cabe no grid {geom.dims} com margem de {GRID_MARGIN_VOX} voxels"
        )

    tractogram = Tractogram(streamlines, geom)
    tract_mask = voxelize(tractogram)
    tom_gt = _tangent_field(centerline, tract_mask, geom)

    first, first_center = _end_cap(centerline, spec, 0.0, geom)
    last, last_center = _end_cap(centerline, spec, centerline.length, geom)
    # mesma regra de rótulo de reference_prep: menor (z, y, x) é "start"
    if starts_before(first_center, last_center, geom.mean_spacing):
        endpoints = EndpointRegions(start=first, end=last)
    else:
        endpoints = EndpointRegions(start=last, end=first)

    logger.info(
        "phantom %s: %d streamlines, %d voxels, comprimento %.1f mm",
        spec.kind, len(streamlines), tract_mask.count, centerline.length,
    )
    return Phantom(tractogram, tom_gt, tract_mask, endpoints, centerline)


# ============================================================
#  PERTURBAÇÕES
# ============================================================
def perturb_peaks(tom: OrientationMap, noise_angle_deg: float, dropout: float, rng) -> OrientationMap:
    """
    Gira cada peak não nulo em torno de um eixo aleatório perpendicular a ele,
    por um ângulo |N(0, noise²)|, e zera uma fração `dropout` dos voxels.
    """
    if noise_angle_deg < 0:
        raise ConfigError("noise_angle_deg deve ser >= 0")
    data = np.array(tom.data)
    voxels = np.argwhere(tom.norms() > 0)
    peaks = data[voxels[:, 0], voxels[:, 1], voxels[:, 2]]

    if noise_angle_deg > 0 and len(peaks):
        unit = peaks / np.linalg.norm(peaks, axis=1, keepdims=True)
        axis = rng.normal(size=peaks.shape)
        axis -= np.einsum("ic,ic->i", axis, unit)[:, None] * unit
        axis /= np.linalg.norm(axis, axis=1, keepdims=True)
        angle = np.abs(rng.normal(0.0, math.radians(noise_angle_deg), len(peaks)))
        # Rodrigues com eixo perpendicular: v' = v cos θ + (k × v) sin θ
        peaks = peaks * np.cos(angle)[:, None] + np.cross(axis, peaks) * np.sin(angle)[:, None]

    if dropout > 0 and len(peaks):
        peaks[rng.random(len(peaks)) < dropout] = 0.0

    data[voxels[:, 0], voxels[:, 1], voxels[:, 2]] = peaks
    return OrientationMap(tom.geometry, data)


def synthesize_peaks(tom: OrientationMap, rng, distractors: int = 2) -> PeakImage:
    """Peak image "original": peak 1 = orientação do trato, demais = distratores aleatórios."""
    data = np.zeros(tom.geometry.dims + (3, 3))
    data[..., 0, :] = tom.data
    support = np.argwhere(tom.norms() > 0)
    for k in range(1, 1 + min(distractors, 2)):
        vectors = rng.normal(size=(len(support), 3))
        vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
        vectors *= rng.uniform(0.3, 0.6, len(support))[:, None]
        data[support[:, 0], support[:, 1], support[:, 2], k] = vectors
    return PeakImage(tom.geometry, data)
