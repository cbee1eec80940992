"""
Preparação das referências: converte um bundle de streamlines nos alvos
usados pelas redes (máscara do trato, regiões de início/fim e TOM).

🔹 Nada aqui usa RNG: o resultado só depende da entrada.
🔹 Regiões de início/fim: DBSCAN num subconjunto + 1-NN para todos os pontos.
🔹 TOM: mean shift das orientações dos segmentos em cada voxel.
"""
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree
from sklearn.cluster import DBSCAN
from sklearn.neighbors import KNeighborsClassifier
from tqdm import tqdm

from .errors import ConfigError, EmptyTractogramError, InseparableRegionsError
from .geometry import BinaryMask, GridGeometry, OrientationMap, morphology, nearest_voxel, voxel_to_world, world_to_voxel
from .streamlines import VOXELIZE_STEP_VOX, Tractogram, densify, voxelize_points

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClusterParams:
    dbscan_eps: float
    dbscan_min_pts: int = 5
    subset_size: int = 1000
    meanshift_bandwidth: float = 0.3
    meanshift_tol: float = 1e-4
    meanshift_merge_radius: float = 0.1

    def __post_init__(self):
        for name in ("dbscan_eps", "dbscan_min_pts", "subset_size",
                     "meanshift_bandwidth", "meanshift_tol", "meanshift_merge_radius"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} deve ser > 0")

    @classmethod
    def for_geometry(cls, geometry: GridGeometry, eps_factor=3.0, **overrides):
        """eps padrão = eps_factor × espaçamento médio (mm)."""
        return cls(dbscan_eps=eps_factor * geometry.mean_spacing, **overrides)


@dataclass(frozen=True)
class EndpointRegions:
    start: BinaryMask
    end: BinaryMask


class ShiftMode(NamedTuple):
    center: np.ndarray
    member_count: int


# ============================================================
#  DBSCAN
# ============================================================
def dbscan(points, eps: float, min_pts: int) -> np.ndarray:
    """Rótulo por ponto; -1 = ruído. Expansão em ordem de índice (determinístico)."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if not len(points):
        return np.zeros(0, dtype=np.int64)
    return DBSCAN(eps=eps, min_samples=min_pts).fit(points).labels_.astype(np.int64)


def _subsample(points, subset_size):
    if subset_size >= len(points):
        return points
    idx = np.unique(np.round(np.linspace(0, len(points) - 1, subset_size)).astype(np.int64))
    return points[idx]


def starts_before(a, b, tolerance) -> bool:
    """
    Ordem (z, y, x) entre dois centróides em mm.
    Diferenças <= tolerance num eixo contam como empate e passam ao próximo eixo.
    """
    for axis in (2, 1, 0):
        delta = float(a[axis] - b[axis])
        if abs(delta) > tolerance:
            return delta < 0
    return True


def endpoint_union_mask(t: Tractogram) -> BinaryMask:
    """União das regiões de início e fim (antes da separação)."""
    points = [s[[0, -1]] for s in t.streamlines]
    return voxelize_points(t.geometry, np.concatenate(points) if points else np.zeros((0, 3)))


def extract_endpoint_regions(t: Tractogram, params: ClusterParams,
                             close_iters: int = 1, dilate_iters: int = 1) -> EndpointRegions:
    """
    Separa a região combinada de pontas em duas máscaras:
    🔹 DBSCAN num subconjunto uniforme das pontas;
    🔹 ficam os dois maiores clusters;
    🔹 1-NN treinado nesse subconjunto rotula TODAS as pontas;
    🔹 voxeliza, fecha, dilata; voxels disputados vão para a classe do 1-NN;
    🔹 "start" = centróide lexicograficamente menor em (z, y, x), ver `starts_before`.
    """
    if not len(t):
        raise EmptyTractogramError("tractograma sem streamlines")
    geometry = t.geometry
    endpoints = np.concatenate([s[[0, -1]] for s in t.streamlines])
    subset = _subsample(endpoints, params.subset_size)

    labels = dbscan(subset, params.dbscan_eps, params.dbscan_min_pts)
    clusters, sizes = np.unique(labels[labels >= 0], return_counts=True)
    if len(clusters) < 2:
        raise InseparableRegionsError(
            f"regiões de início/fim inseparáveis: DBSCAN encontrou {len(clusters)} cluster(s)"
        )
    if len(clusters) > 2:
        logger.info("DBSCAN encontrou %d clusters; mantendo os dois maiores", len(clusters))
    # estável: empate favorece o rótulo menor
    order = np.argsort(-sizes, kind="stable")
    keep = clusters[order[:2]]

    in_keep = np.isin(labels, keep)
    classifier = KNeighborsClassifier(n_neighbors=1).fit(subset[in_keep], labels[in_keep])
    assigned = classifier.predict(endpoints)

    centroids = {label: endpoints[assigned == label].mean(axis=0) for label in keep}
    a, b = keep
    if starts_before(centroids[a], centroids[b], geometry.mean_spacing):
        start_label, end_label = a, b
    else:
        start_label, end_label = b, a

    masks = {}
    for label in (start_label, end_label):
        mask = voxelize_points(geometry, endpoints[assigned == label])
        if close_iters > 0:
            mask = morphology(mask, "closing", close_iters)
        if dilate_iters > 0:
            mask = morphology(mask, "dilation", dilate_iters)
        masks[label] = mask.data.copy()

    overlap = masks[start_label] & masks[end_label]
    if overlap.any():
        voxels = np.argwhere(overlap)
        winner = classifier.predict(voxel_to_world(geometry, voxels))
        for voxel, label in zip(voxels, winner):
            loser = end_label if label == start_label else start_label
            masks[loser][tuple(voxel)] = False

    start = BinaryMask(geometry, masks[start_label])
    end = BinaryMask(geometry, masks[end_label])
    if not start.count or not end.count:
        raise InseparableRegionsError("uma das regiões de início/fim ficou vazia")
    logger.info("regiões de pontas: start=%d voxels, end=%d voxels", start.count, end.count)
    return EndpointRegions(start=start, end=end)


# ============================================================
#  MEAN SHIFT
# ============================================================
def mean_shift_labels(points, bandwidth: float, tol: float = 1e-4,
                      merge_radius: float = 0.1, max_iter: int = 300):
    """
    Mean shift com kernel plano. Retorna (modos, contagens, rótulo de cada ponto).
    Modos ordenados por contagem decrescente; empates pelas coordenadas do modo,
    então o resultado não depende da ordem dos pontos.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    tree = cKDTree(points)
    shifted = points.copy()
    for _ in range(max_iter):
        neighbors = tree.query_ball_point(shifted, r=bandwidth)
        updated = np.array([points[nb].mean(axis=0) if nb else shifted[i]
                            for i, nb in enumerate(neighbors)])
        displacement = np.linalg.norm(updated - shifted, axis=1).max()
        shifted = updated
        if displacement < tol:
            break

    # fusão gulosa em ordem de índice
    representatives, sums, counts = [], [], []
    labels = np.empty(len(points), dtype=np.int64)
    for i, p in enumerate(shifted):
        for k, rep in enumerate(representatives):
            if np.linalg.norm(p - rep) <= merge_radius:
                sums[k] += p
                counts[k] += 1
                labels[i] = k
                break
        else:
            representatives.append(p)
            sums.append(p.copy())
            counts.append(1)
            labels[i] = len(representatives) - 1

    counts = np.array(counts)
    modes = np.array(sums) / counts[:, None]
    order = np.lexsort(tuple(modes[:, d] for d in reversed(range(modes.shape[1]))) + (-counts,))
    relabel = np.empty_like(order)
    relabel[order] = np.arange(len(order))
    return modes[order], counts[order], relabel[labels]


def mean_shift(points, bandwidth: float, tol: float = 1e-4, merge_radius: float = 0.1):
    modes, counts, _ = mean_shift_labels(points, bandwidth, tol, merge_radius)
    return [ShiftMode(center=m, member_count=int(c)) for m, c in zip(modes, counts)]


# ============================================================
#  TOM
# ============================================================
def voxel_orientation(directions, params: ClusterParams) -> np.ndarray:
    """
    Orientação principal de um voxel:
    🔹 alinha o sinal de cada direção ao autovetor principal da matriz de espalhamento;
    🔹 mean shift;
    🔹 média normalizada das direções do maior cluster.
    """
    directions = np.asarray(directions, dtype=np.float64)
    scatter = directions.T @ directions
    principal = np.linalg.eigh(scatter)[1][:, -1]
    # sinal canônico: maior componente em módulo positiva
    principal *= np.sign(principal[np.argmax(np.abs(principal))])
    signs = np.where(directions @ principal < 0, -1.0, 1.0)
    canonical = directions * signs[:, None]

    _, _, labels = mean_shift_labels(
        canonical, params.meanshift_bandwidth, params.meanshift_tol, params.meanshift_merge_radius
    )
    mean = canonical[labels == 0].mean(axis=0)
    return mean / np.linalg.norm(mean)


def segment_directions_by_voxel(t: Tractogram):
    """Agrupa as tangentes unitárias (mm) de cada segmento pelos voxels que ele cruza."""
    geometry = t.geometry
    n_x, n_y, n_z = geometry.dims
    keys, vectors = [], []
    for s in t.streamlines:
        if len(s) < 2:
            continue
        deltas = np.diff(s, axis=0)
        lengths = np.linalg.norm(deltas, axis=1)
        valid = lengths > 0
        tangents = np.zeros_like(deltas)
        tangents[valid] = deltas[valid] / lengths[valid, None]

        samples, seg_index = densify(world_to_voxel(geometry, s), VOXELIZE_STEP_VOX)
        idx = nearest_voxel(samples)
        inside = geometry.contains(idx) & valid[seg_index]
        linear = np.ravel_multi_index(idx[inside].T, (n_x, n_y, n_z))
        pairs = np.unique(np.column_stack([seg_index[inside], linear]), axis=0)
        keys.append(pairs[:, 1])
        vectors.append(tangents[pairs[:, 0]])

    if not keys:
        return {}
    keys = np.concatenate(keys)
    vectors = np.concatenate(vectors)
    order = np.argsort(keys, kind="stable")
    keys, vectors = keys[order], vectors[order]
    boundaries = np.flatnonzero(np.diff(keys)) + 1
    groups = np.split(vectors, boundaries)
    starts = np.concatenate([[0], boundaries])
    return {int(keys[i]): group for i, group in zip(starts, groups)}


def extract_tom(t: Tractogram, params: ClusterParams, progress: bool = False) -> OrientationMap:
    geometry = t.geometry
    data = np.zeros(geometry.dims + (3,))
    flat = data.reshape(-1, 3)
    grouped = segment_directions_by_voxel(t)
    for key, directions in tqdm(grouped.items(), total=len(grouped), disable=not progress, desc="TOM"):
        flat[key] = voxel_orientation(directions, params)
    logger.info("TOM extraída em %d voxels", len(grouped))
    return OrientationMap(geometry, data)
