"""
Streamlines e tractogramas: modelo de dados, I/O TCK, comprimento,
suavização por B-spline e voxelização.

🔹 Streamline = array (N, 3) em mm (mundo RAS).
🔹 Coordenadas de voxel são sempre derivadas sob demanda pela geometria.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import nibabel as nib
import numpy as np
from nibabel.streamlines.header import Field
from nibabel.streamlines.tck import TckFile
from nibabel.streamlines.tractogram_file import DataError, HeaderError, HeaderWarning
from scipy.interpolate import splev, splprep

from .errors import (
    InvalidGeometryError,
    MissingInputError,
    TckDatatypeError,
    TckHeaderError,
    TckTruncatedError,
)
from .geometry import BinaryMask, GridGeometry, nearest_voxel, world_to_voxel

logger = logging.getLogger(__name__)

TCK_MAGIC = "mrtrix tracks"
TCK_DATATYPE = "Float32LE"
VOXELIZE_STEP_VOX = 0.5


@dataclass
class Tractogram:
    streamlines: list = field(default_factory=list)
    geometry: GridGeometry = None

    def __post_init__(self):
        self.streamlines = [np.asarray(s, dtype=np.float64).reshape(-1, 3) for s in self.streamlines]

    def __len__(self):
        return len(self.streamlines)

    def __iter__(self):
        return iter(self.streamlines)


# ============================================================
#  MEDIDAS
# ============================================================
def arc_length(s) -> float:
    """Soma dos comprimentos euclidianos dos segmentos (mm)."""
    s = np.asarray(s, dtype=np.float64)
    if len(s) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(s, axis=0), axis=1).sum())


def densify(points, max_step):
    """
    Amostra cada segmento em passos <= max_step.
    Retorna (amostras, índice do segmento de cada amostra).
    """
    points = np.asarray(points, dtype=np.float64)
    if len(points) < 2:
        return points.copy(), np.zeros(len(points), dtype=np.int64)
    deltas = np.diff(points, axis=0)
    counts = np.maximum(1, np.ceil(np.linalg.norm(deltas, axis=1) / max_step).astype(np.int64))
    seg_index = np.repeat(np.arange(len(deltas)), counts)
    offsets = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    frac = offsets / counts[seg_index]
    samples = points[seg_index] + frac[:, None] * deltas[seg_index]
    samples = np.vstack([samples, points[-1:]])
    seg_index = np.append(seg_index, len(deltas) - 1)
    return samples, seg_index


# ============================================================
#  B-SPLINE
# ============================================================
def _drop_repeated(points):
    keep = np.ones(len(points), dtype=bool)
    keep[1:] = np.any(np.diff(points, axis=0) != 0, axis=1)
    return points[keep]


def fit_bspline(s, smoothing):
    """
    Ajuste cúbico por mínimos quadrados (FITPACK) com orçamento de resíduo
    quadrático `smoothing` (mm²). Parametrização por comprimento de corda em [0, 1].
    """
    points = _drop_repeated(np.asarray(s, dtype=np.float64))
    chord = np.linalg.norm(np.diff(points, axis=0), axis=1)
    u = np.concatenate([[0.0], np.cumsum(chord)])
    u /= u[-1]
    spline, u = splprep(points.T, u=u, k=3, s=smoothing)
    return spline, u


def smooth_bspline(s, smoothing, out_spacing):
    """
    Suaviza a streamline e reamostra em passos uniformes do parâmetro,
    com espaçamento ~out_spacing mm. Menos de 4 pontos: devolve sem mudanças.
    """
    points = np.asarray(s, dtype=np.float64)
    if len(_drop_repeated(points)) < 4:
        return points.copy()
    spline, _ = fit_bspline(points, smoothing)
    n_out = max(2, math.ceil(arc_length(points) / out_spacing) + 1)
    samples = splev(np.linspace(0.0, 1.0, n_out), spline)
    return np.column_stack(samples)


# ============================================================
#  VOXELIZAÇÃO
# ============================================================
def voxelize_points(geometry: GridGeometry, points_world) -> BinaryMask:
    """Marca o voxel mais próximo de cada ponto; pontos fora do grid são ignorados."""
    data = np.zeros(geometry.dims, dtype=bool)
    points_world = np.asarray(points_world, dtype=np.float64).reshape(-1, 3)
    if len(points_world):
        idx = nearest_voxel(world_to_voxel(geometry, points_world))
        idx = idx[geometry.contains(idx)]
        data[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    return BinaryMask(geometry, data)


def voxelize(t: Tractogram) -> BinaryMask:
    """Voxel = True onde pelo menos uma streamline passa (amostragem a cada 0.5 voxel)."""
    geometry = t.geometry
    data = np.zeros(geometry.dims, dtype=bool)
    for s in t.streamlines:
        samples, _ = densify(world_to_voxel(geometry, s), VOXELIZE_STEP_VOX)
        idx = nearest_voxel(samples)
        idx = idx[geometry.contains(idx)]
        data[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    return BinaryMask(geometry, data)


# ============================================================
#  TCK
# ============================================================
def write_tck(t: Tractogram, path):
    """
    Grava via nibabel (Float32LE, count com 10 dígitos).
    🔹 O grid vai como chaves extras do header (grid_dims / grid_affine).
    """
    header = {
        Field.NB_STREAMLINES: len(t.streamlines),
        "total_count": str(len(t.streamlines)),
    }
    if t.geometry is not None:
        header["grid_dims"] = " ".join(str(d) for d in t.geometry.dims)
        header["grid_affine"] = " ".join(repr(float(v)) for v in t.geometry.affine.ravel())

    streamlines = [np.asarray(s, dtype=np.float32).reshape(-1, 3) for s in t.streamlines]
    tractogram = nib.streamlines.Tractogram(streamlines, affine_to_rasmm=np.eye(4))
    TckFile(tractogram, header=header).save(str(path))


def _check_preamble(path):
    # o nibabel reporta magic e datatype como o mesmo HeaderError
    with open(path, "rb") as f:
        if f.readline().rstrip(b"\n").decode("latin-1") != TCK_MAGIC:
            raise TckHeaderError("header TCK não começa com 'mrtrix tracks'", path=path)
        for line in f:
            if line == b"END\n":
                return
            key, _, value = line.decode("latin-1").partition(":")
            if key.strip() == "datatype" and value.strip() != TCK_DATATYPE:
                raise TckDatatypeError(f"datatype não suportado: {value.strip()}", path=path)


def _parse_geometry(header, path):
    if "grid_dims" not in header or "grid_affine" not in header:
        return None
    try:
        dims = tuple(int(v) for v in header["grid_dims"].split())
        affine = np.array([float(v) for v in header["grid_affine"].split()]).reshape(4, 4)
        return GridGeometry.from_affine(dims, affine)
    except (ValueError, InvalidGeometryError) as exc:
        raise TckHeaderError(f"grid inválido no header: {exc}", path=path) from exc


def read_tck(path, geometry: GridGeometry = None) -> Tractogram:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"arquivo não encontrado: {path}", path=path)
    _check_preamble(path)

    # ---- 1. header e payload pelo nibabel; avisos de header viram erro
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", HeaderWarning)
            tck = TckFile.load(str(path), lazy_load=False)
    except (HeaderError, HeaderWarning) as exc:
        raise TckHeaderError(f"header TCK inválido: {exc}", path=path) from exc
    except (DataError, ValueError) as exc:
        raise TckTruncatedError(f"seção binária incompleta: {exc}", path=path) from exc

    # ---- 2. delimitadores seguidos geram streamlines vazias no nibabel
    streamlines = [np.asarray(s, dtype=np.float64) for s in tck.streamlines if len(s)]

    header = tck.header
    if "count" in header:
        try:
            count = int(header["count"])
        except ValueError as exc:
            raise TckHeaderError(f"count inválido: {header['count']!r}", path=path) from exc
        if len(streamlines) < count:
            raise TckTruncatedError(
                f"header declara {count} streamlines, arquivo tem {len(streamlines)}", path=path
            )

    if geometry is None:
        geometry = _parse_geometry(header, path)
    logger.debug("lidas %d streamlines de %s", len(streamlines), path)
    return Tractogram(streamlines, geometry)
