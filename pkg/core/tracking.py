"""
Tracking em mapas de orientação (TOM).

🔹 Propagação bidirecional a partir da semente, passo fixo em voxels.
🔹 Probabilístico: direção sorteada de uma gaussiana (por componente) em
   torno do peak interpolado; determinístico: o próprio peak.
🔹 Streamlines têm de ficar na máscara do trato e terminar nas regiões
   de início/fim; o resto é descartado.
🔹 Sementes e sorteios de cada tentativa vêm de um RNG derivado de
   (master_seed, índice da tentativa): saída independe do número de threads.
"""
import itertools
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np
from joblib import Parallel, delayed
from tqdm import tqdm

from .errors import ConfigError, EmptyMaskError, ZeroPeakError
from .geometry import (
    BinaryMask,
    OrientationMap,
    PeakImage,
    require_same_geometry,
    voxel_to_world,
    world_to_voxel,
)
from .streamlines import Tractogram, arc_length, smooth_bspline

logger = logging.getLogger(__name__)

CORNERS = np.array(list(itertools.product((0, 1), repeat=3)), dtype=np.int64)
MIN_BATCH = 64


class TrackingMode(str, Enum):
    PROBABILISTIC = "probabilistic"
    DETERMINISTIC = "deterministic"


class Flavor(str, Enum):
    DIRECT = "direct"
    BEST_ORIG = "best_orig"
    FUSED_PRIOR = "fused_prior"
    ORIGINAL = "original"


class RejectReason(str, Enum):
    TOO_SHORT = "too-short"
    ENDPOINT_NOT_IN_REGIONS = "endpoint-not-in-regions"
    LEFT_MASK_DEGENERATE = "left-mask-degenerate"


@dataclass(frozen=True)
class TrackerConfig:
    step_size_vox: float = 0.7
    gaussian_std: float = 0.15
    min_length_mm: float = 50.0
    target_count: int = 2000
    max_steps: int = 1000
    max_attempt_factor: int = 100
    peak_eps: float = 1e-6
    master_seed: int = 0
    mode: TrackingMode = TrackingMode.PROBABILISTIC
    smooth: bool = True
    # orçamento de resíduo da B-spline (mm²); None = número de pontos
    smoothing: Optional[float] = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "mode", TrackingMode(self.mode))
        except ValueError as exc:
            raise ConfigError(f"modo de tracking inválido: {self.mode}") from exc
        if self.step_size_vox <= 0:
            raise ConfigError("step_size_vox deve ser > 0")
        if self.gaussian_std < 0:
            raise ConfigError("gaussian_std deve ser >= 0")
        if self.target_count < 1:
            raise ConfigError("target_count deve ser >= 1")
        if self.max_steps < 1 or self.max_attempt_factor < 1:
            raise ConfigError("max_steps e max_attempt_factor devem ser >= 1")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ConfigError("master_seed deve ser um inteiro de 64 bits sem sinal")


@dataclass(frozen=True, eq=False)
class TrackingContext:
    tom: OrientationMap
    tract_mask: BinaryMask
    start_mask: BinaryMask
    end_mask: BinaryMask
    # matriz mundo -> voxel para direções (preenchida no __post_init__)
    direction_to_voxel: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        require_same_geometry(self.tom, self.tract_mask, self.start_mask, self.end_mask)
        linear = np.linalg.inv(self.geometry.affine[:3, :3])
        object.__setattr__(self, "direction_to_voxel", linear)

    @property
    def geometry(self):
        return self.tom.geometry

    def with_field(self, tom: OrientationMap):
        return TrackingContext(tom, self.tract_mask, self.start_mask, self.end_mask)


class TrackOutcome(NamedTuple):
    streamline: Optional[np.ndarray]
    reason: Optional[RejectReason]

    @property
    def accepted(self):
        return self.streamline is not None


@dataclass
class TrackingReport:
    tractogram: Tractogram
    attempts: int
    accepted: int
    budget_exhausted: bool
    rejections: dict = field(default_factory=dict)


# ============================================================
#  AMOSTRAGEM
# ============================================================
def sample_direction(peak, std: float, rng) -> np.ndarray:
    """Normaliza o peak, soma ruído gaussiano por componente e renormaliza."""
    peak = np.asarray(peak, dtype=np.float64)
    norm = np.linalg.norm(peak)
    if not norm > 0:
        raise ZeroPeakError("não é possível amostrar em torno de um peak nulo")
    u = peak / norm
    if std == 0:
        return u
    while True:
        v = u + rng.normal(0.0, std, 3)
        n = np.linalg.norm(v)
        if n > 0:
            return v / n


def sample_angles(std: float, n: int, rng) -> np.ndarray:
    """Ângulos (graus) entre direções sorteadas e a média, mesmo modelo de ruído."""
    u = np.array([0.0, 0.0, 1.0])
    v = u + rng.normal(0.0, std, (n, 3))
    cos = v[:, 2] / np.linalg.norm(v, axis=1)
    return np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))


class DispersionSummary(NamedTuple):
    counts: np.ndarray
    edges: np.ndarray
    mean_deg: float
    p99_deg: float


def dispersion_histogram(std: float, n: int = 100_000, bins: int = 90, rng=None) -> DispersionSummary:
    """Histograma dos ângulos sorteados (0-90°), para comparar dispersões."""
    rng = rng if rng is not None else np.random.default_rng(0)
    angles = sample_angles(std, n, rng)
    counts, edges = np.histogram(angles, bins=bins, range=(0.0, 90.0))
    return DispersionSummary(counts, edges, float(angles.mean()), float(np.percentile(angles, 99)))


# ============================================================
#  INTERPOLAÇÃO
# ============================================================
def _interpolate(data, dims, pos, prev_dir):
    base = np.floor(pos).astype(np.int64)
    frac = pos - base
    idx = base + CORNERS
    weights = np.prod(np.where(CORNERS == 1, frac, 1.0 - frac), axis=1)
    inside = np.all((idx >= 0) & (idx < dims), axis=1)
    if not inside.any():
        return np.zeros(3)
    idx, weights = idx[inside], weights[inside]
    peaks = data[idx[:, 0], idx[:, 1], idx[:, 2]]

    reference = prev_dir
    if reference is None:
        nearest = np.floor(pos + 0.5).astype(np.int64)
        if np.all((nearest >= 0) & (nearest < dims)):
            reference = data[tuple(nearest)]
        if reference is None or not reference.any():
            nonzero = peaks[np.any(peaks != 0, axis=1)]
            reference = nonzero[0] if len(nonzero) else None
    if reference is not None:
        weights = weights * np.where(peaks @ reference < 0, -1.0, 1.0)
    return weights @ peaks


def interpolate_peak(tom: OrientationMap, pos_vox, prev_dir=None) -> np.ndarray:
    """
    Interpolação trilinear nos 8 vizinhos, com o sinal de cada canto alinhado
    a prev_dir (ou ao peak do voxel mais próximo). Cantos fora do grid valem zero.
    """
    prev = None if prev_dir is None else np.asarray(prev_dir, dtype=np.float64)
    return _interpolate(tom.data, np.asarray(tom.geometry.dims), np.asarray(pos_vox, dtype=np.float64), prev)


# ============================================================
#  FILTRO
# ============================================================
def _point_in(mask_data, dims, pos):
    idx = np.floor(pos + 0.5).astype(np.int64)
    return bool(np.all((idx >= 0) & (idx < dims)) and mask_data[tuple(idx)])


def check_streamline(points_world, ctx: TrackingContext, min_length_mm: float) -> Optional[RejectReason]:
    """None se a streamline passa nas três condições; senão o motivo."""
    if arc_length(points_world) < min_length_mm:
        return RejectReason.TOO_SHORT
    vox = world_to_voxel(ctx.geometry, points_world)
    first = ctx.start_mask.contains_points(vox[[0, -1]])
    last = ctx.end_mask.contains_points(vox[[0, -1]])
    if not ((first[0] and last[1]) or (last[0] and first[1])):
        return RejectReason.ENDPOINT_NOT_IN_REGIONS
    if not ctx.tract_mask.contains_points(vox).all():
        return RejectReason.LEFT_MASK_DEGENERATE
    return None


def filter_streamlines(t: Tractogram, ctx: TrackingContext, min_length_mm: float) -> Tractogram:
    kept = [s for s in t.streamlines if len(s) >= 2 and check_streamline(s, ctx, min_length_mm) is None]
    logger.info("filtro: %d de %d streamlines mantidas", len(kept), len(t))
    return Tractogram(kept, t.geometry if t.geometry is not None else ctx.geometry)


# ============================================================
#  PROPAGAÇÃO
# ============================================================
def _march(ctx, data, dims, start, first_dir, cfg, std, rng):
    pos, prev = start, first_dir
    mask = ctx.tract_mask.data
    points = []
    for _ in range(cfg.max_steps):
        peak = _interpolate(data, dims, pos, prev)
        if np.linalg.norm(peak) < cfg.peak_eps:
            break
        direction = sample_direction(peak, std, rng)
        if direction @ prev < 0:
            direction = -direction
        step = ctx.direction_to_voxel @ direction
        candidate = pos + step * (cfg.step_size_vox / np.linalg.norm(step))
        if not _point_in(mask, dims, candidate):
            break
        points.append(candidate)
        pos, prev = candidate, direction
    return points


def _as_float32(points):
    return np.asarray(points, dtype=np.float64).astype(np.float32).astype(np.float64)


def track_streamline(ctx: TrackingContext, seed_vox, cfg: TrackerConfig, rng) -> TrackOutcome:
    data = ctx.tom.data
    dims = np.asarray(ctx.geometry.dims)
    seed = np.asarray(seed_vox, dtype=np.float64)

    if not _point_in(ctx.tract_mask.data, dims, seed):
        return TrackOutcome(None, RejectReason.LEFT_MASK_DEGENERATE)
    seed_peak = data[tuple(np.floor(seed + 0.5).astype(np.int64))]
    norm = np.linalg.norm(seed_peak)
    if norm < cfg.peak_eps:
        return TrackOutcome(None, RejectReason.LEFT_MASK_DEGENERATE)
    first_dir = seed_peak / norm

    std = cfg.gaussian_std if cfg.mode == TrackingMode.PROBABILISTIC else 0.0
    forward = _march(ctx, data, dims, seed, first_dir, cfg, std, rng)
    backward = _march(ctx, data, dims, seed, -first_dir, cfg, std, rng)
    points_vox = backward[::-1] + [seed] + forward
    if len(points_vox) < 2:
        return TrackOutcome(None, RejectReason.LEFT_MASK_DEGENERATE)

    # o que é validado é exatamente o que vai para o TCK (float32)
    streamline = _as_float32(voxel_to_world(ctx.geometry, np.array(points_vox)))
    reason = check_streamline(streamline, ctx, cfg.min_length_mm)
    if reason is not None:
        return TrackOutcome(None, reason)

    if cfg.smooth:
        smoothing = cfg.smoothing if cfg.smoothing is not None else float(len(streamline))
        out_spacing = cfg.step_size_vox * ctx.geometry.mean_spacing
        smoothed = _as_float32(smooth_bspline(streamline, smoothing, out_spacing))
        if check_streamline(smoothed, ctx, cfg.min_length_mm) is None:
            streamline = smoothed
    return TrackOutcome(streamline, None)


def track_bundle(ctx: TrackingContext, cfg: TrackerConfig, threads: int = 1,
                 progress: bool = False) -> TrackingReport:
    """
    Sementes uniformes nos voxels da máscara (uniforme dentro do cubo do voxel)
    até target_count aceitas ou max_attempt_factor × target_count tentativas.
    """
    seed_voxels = ctx.tract_mask.voxels()
    if not len(seed_voxels):
        raise EmptyMaskError("máscara do trato vazia")
    budget = cfg.max_attempt_factor * cfg.target_count

    def attempt(index):
        rng = np.random.default_rng([cfg.master_seed, index])
        voxel = seed_voxels[rng.integers(len(seed_voxels))]
        seed = voxel + rng.uniform(-0.5, 0.5, 3)
        return track_streamline(ctx, seed, cfg, rng)

    accepted, rejections = [], Counter()
    attempts = 0
    with Parallel(n_jobs=max(1, int(threads)), prefer="threads") as parallel, \
            tqdm(total=cfg.target_count, disable=not progress, desc="tracking") as bar:
        while len(accepted) < cfg.target_count and attempts < budget:
            batch = min(budget - attempts, max(MIN_BATCH, cfg.target_count - len(accepted)))
            outcomes = parallel(delayed(attempt)(i) for i in range(attempts, attempts + batch))
            for outcome in outcomes:
                attempts += 1
                if outcome.accepted:
                    accepted.append(outcome.streamline)
                    bar.update(1)
                    if len(accepted) == cfg.target_count:
                        break
                else:
                    rejections[outcome.reason.value] += 1

    exhausted = len(accepted) < cfg.target_count
    logger.info("tracking: %d aceitas em %d tentativas", len(accepted), attempts)
    if exhausted:
        logger.warning(
            "orçamento de tentativas esgotado (%d): só %d de %d streamlines",
            budget, len(accepted), cfg.target_count,
        )
    return TrackingReport(
        tractogram=Tractogram(accepted, ctx.geometry),
        attempts=attempts,
        accepted=len(accepted),
        budget_exhausted=exhausted,
        rejections=dict(sorted(rejections.items())),
    )


# ============================================================
#  SABORES DE TOM
# ============================================================
def _unit(vectors):
    norms = np.linalg.norm(vectors, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(norms > 0, vectors / norms, 0.0)


def select_best_original_peak(peaks: PeakImage, tom: OrientationMap) -> OrientationMap:
    """Por voxel, o peak original de menor ângulo axial ao peak da TOM, com sinal alinhado."""
    require_same_geometry(peaks, tom)
    originals = peaks.data
    target = tom.data
    peak_norms = np.linalg.norm(originals, axis=-1)
    tom_norms = tom.norms()

    dots = np.einsum("...pc,...c->...p", originals, target)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.abs(dots) / (peak_norms * tom_norms[..., None])
    cos = np.where((peak_norms > 0) & (tom_norms[..., None] > 0), cos, -1.0)
    best = np.argmax(cos, axis=-1)

    chosen = np.take_along_axis(originals, best[..., None, None], axis=-2)[..., 0, :].copy()
    signs = np.where(np.einsum("...c,...c->...", chosen, target) < 0, -1.0, 1.0)
    chosen *= signs[..., None]
    valid = (tom_norms > 0) & (peak_norms.max(axis=-1) > 0)
    chosen[~valid] = 0.0
    return OrientationMap(tom.geometry, chosen)


def fuse_prior(tom: OrientationMap, peaks: PeakImage, weight: float) -> OrientationMap:
    """normalize(weight·u + (1 − weight)·b), b = melhor peak original, u = TOM alinhada a b."""
    if not 0.0 <= weight <= 1.0:
        raise ConfigError("prior_weight deve estar em [0, 1]")
    best = _unit(select_best_original_peak(peaks, tom).data)
    u = _unit(tom.data)
    signs = np.where(np.einsum("...c,...c->...", u, best) < 0, -1.0, 1.0)
    fused = _unit(weight * u * signs[..., None] + (1.0 - weight) * best)
    fused[tom.norms() == 0] = 0.0
    return OrientationMap(tom.geometry, fused)


def largest_original_peak(peaks: PeakImage) -> OrientationMap:
    """Tracking no sinal original: o peak mais longo de cada voxel."""
    norms = np.linalg.norm(peaks.data, axis=-1)
    best = np.argmax(norms, axis=-1)
    chosen = np.take_along_axis(peaks.data, best[..., None, None], axis=-2)[..., 0, :]
    return OrientationMap(peaks.geometry, chosen)


def orientation_field(flavor, tom: OrientationMap = None, peaks: PeakImage = None,
                      weight: float = 0.5) -> OrientationMap:
    flavor = Flavor(flavor)
    if flavor != Flavor.DIRECT and peaks is None:
        raise ConfigError(f"o sabor '{flavor.value}' precisa da peak image original")
    if flavor == Flavor.DIRECT:
        return tom
    if flavor == Flavor.BEST_ORIG:
        return select_best_original_peak(peaks, tom)
    if flavor == Flavor.FUSED_PRIOR:
        return fuse_prior(tom, peaks, weight)
    return largest_original_peak(peaks)
