"""
Geometria do grid de voxels, volumes (máscaras, peaks, TOMs),
transformações afins, morfologia binária 3D e I/O NIfTI.

🔹 Convenção de mundo: milímetros RAS (a mesma de NIfTI/TCK).
🔹 Centro do voxel (i, j, k) fica nas coordenadas inteiras (i, j, k).
🔹 Todos os tipos são imutáveis depois de construídos.
"""
import logging
from dataclasses import dataclass
from pathlib import Path

import nibabel as nib
import numpy as np
from nibabel.affines import apply_affine
from nibabel.filebasedimages import ImageFileError
from nibabel.spatialimages import HeaderDataError
from scipy import ndimage

from .errors import (
    ConfigError,
    GeometryMismatchError,
    InvalidGeometryError,
    MissingInputError,
    NiftiFormatError,
    ShapeMismatchError,
)

logger = logging.getLogger(__name__)

SPACING_TOLERANCE = 1e-6
AFFINE_TOLERANCE = 1e-6
N_PEAKS = 3

# elemento estruturante 6-conectado (vizinhança por faces)
FACE_STRUCTURE = ndimage.generate_binary_structure(3, 1)


def _frozen(array, dtype):
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


# ============================================================
#  GRID
# ============================================================
@dataclass(frozen=True, eq=False)
class GridGeometry:
    dims: tuple
    spacing: tuple
    affine: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or min(dims) <= 0:
            raise InvalidGeometryError(f"dims inválidas: {self.dims}")

        affine = np.asarray(self.affine, dtype=np.float64)
        if affine.shape != (4, 4):
            raise InvalidGeometryError(f"affine deve ser 4x4, recebido {affine.shape}")
        linear = affine[:3, :3]
        if abs(np.linalg.det(linear)) < 1e-12:
            raise InvalidGeometryError("bloco 3x3 da affine não é inversível")

        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or min(spacing) <= 0:
            raise InvalidGeometryError(f"spacing inválido: {self.spacing}")
        norms = np.linalg.norm(linear, axis=0)
        if not np.allclose(norms, spacing, rtol=0, atol=SPACING_TOLERANCE):
            raise InvalidGeometryError(
                f"normas das colunas da affine {norms.tolist()} não batem com spacing {spacing}"
            )

        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "affine", _frozen(affine, np.float64))

    @classmethod
    def from_affine(cls, dims, affine):
        """Spacing derivado das normas das colunas da affine."""
        affine = np.asarray(affine, dtype=np.float64)
        spacing = np.linalg.norm(affine[:3, :3], axis=0)
        return cls(dims=dims, spacing=tuple(spacing), affine=affine)

    @classmethod
    def isotropic(cls, dims, spacing, origin=(0.0, 0.0, 0.0)):
        affine = np.diag([spacing, spacing, spacing, 1.0])
        affine[:3, 3] = origin
        return cls(dims=tuple(dims), spacing=(spacing,) * 3, affine=affine)

    @property
    def mean_spacing(self) -> float:
        return float(np.mean(self.spacing))

    @property
    def inverse_affine(self) -> np.ndarray:
        return np.linalg.inv(self.affine)

    def same_as(self, other) -> bool:
        return (
            self.dims == other.dims
            and np.allclose(self.affine, other.affine, rtol=0, atol=AFFINE_TOLERANCE)
        )

    def contains(self, idx) -> np.ndarray:
        """Máscara booleana: índices inteiros (N,3) dentro do grid."""
        idx = np.atleast_2d(idx)
        return np.all((idx >= 0) & (idx < np.asarray(self.dims)), axis=1)


def require_same_geometry(*volumes, path=None):
    first = volumes[0].geometry
    for other in volumes[1:]:
        if not first.same_as(other.geometry):
            raise GeometryMismatchError(
                f"geometrias diferentes: dims {first.dims} vs {other.geometry.dims}", path=path
            )


# ============================================================
#  COORDENADAS
# ============================================================
def voxel_to_world(geom: GridGeometry, p_vox):
    return apply_affine(geom.affine, np.asarray(p_vox, dtype=np.float64))


def world_to_voxel(geom: GridGeometry, p_world):
    return apply_affine(geom.inverse_affine, np.asarray(p_world, dtype=np.float64))


def nearest_voxel(points_vox):
    """Voxel mais próximo: floor(p + 0.5). Regra única de pertinência."""
    return np.floor(np.asarray(points_vox, dtype=np.float64) + 0.5).astype(np.int64)


# ============================================================
#  VOLUMES
# ============================================================
@dataclass(frozen=True, eq=False)
class BinaryMask:
    geometry: GridGeometry
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.shape != self.geometry.dims:
            raise ShapeMismatchError(f"máscara com shape {data.shape}, grid {self.geometry.dims}")
        object.__setattr__(self, "data", _frozen(data, bool))

    @classmethod
    def empty(cls, geometry):
        return cls(geometry, np.zeros(geometry.dims, dtype=bool))

    @property
    def count(self) -> int:
        return int(self.data.sum())

    def voxels(self) -> np.ndarray:
        """Índices (N,3) dos voxels marcados, em ordem C."""
        return np.argwhere(self.data)

    def contains_points(self, points_vox) -> np.ndarray:
        idx = nearest_voxel(np.atleast_2d(points_vox))
        inside = self.geometry.contains(idx)
        result = np.zeros(len(idx), dtype=bool)
        ok = idx[inside]
        result[inside] = self.data[ok[:, 0], ok[:, 1], ok[:, 2]]
        return result


@dataclass(frozen=True, eq=False)
class PeakImage:
    """Até 3 peaks por voxel: data com shape dims×3×3 (peak, componente)."""
    geometry: GridGeometry
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.shape != self.geometry.dims + (N_PEAKS, 3):
            raise ShapeMismatchError(f"peak image com shape {data.shape}")
        object.__setattr__(self, "data", _frozen(data, np.float64))


@dataclass(frozen=True, eq=False)
class OrientationMap:
    """TOM: um peak por voxel; vetor zero = trato ausente."""
    geometry: GridGeometry
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.shape != self.geometry.dims + (3,):
            raise ShapeMismatchError(f"TOM com shape {data.shape}")
        object.__setattr__(self, "data", _frozen(data, np.float64))

    @classmethod
    def zeros(cls, geometry):
        return cls(geometry, np.zeros(geometry.dims + (3,)))

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.data, axis=-1)

    def support(self) -> BinaryMask:
        return BinaryMask(self.geometry, self.norms() > 0)


def binarize(geom: GridGeometry, probabilities, threshold=0.5) -> BinaryMask:
    """Segmentação binária a partir de probabilidades (valor >= threshold)."""
    return BinaryMask(geom, np.asarray(probabilities) >= threshold)


# ============================================================
#  MORFOLOGIA / PODA
# ============================================================
def morphology(mask: BinaryMask, op: str, iterations: int = 1) -> BinaryMask:
    """
    Morfologia binária com cruz 6-conectada, repetida `iterations` vezes.
    🔹 dilation: cortada na borda do grid.
    🔹 closing: calculado com padding, então é extensivo mesmo encostado na borda.
    """
    if iterations < 1:
        raise ConfigError("iterations deve ser >= 1")

    if op == "dilation":
        data = ndimage.binary_dilation(mask.data, structure=FACE_STRUCTURE, iterations=iterations)
    elif op == "closing":
        pad = iterations
        padded = np.pad(mask.data, pad, mode="constant", constant_values=False)
        closed = ndimage.binary_closing(padded, structure=FACE_STRUCTURE, iterations=iterations)
        data = closed[pad:-pad, pad:-pad, pad:-pad]
    else:
        raise ValueError(f"operação morfológica desconhecida: {op}")
    return BinaryMask(mask.geometry, data)


def prune_peaks(tom: OrientationMap, threshold: float = 0.3) -> OrientationMap:
    """Zera peaks com norma < threshold (estrito: norma == threshold sobrevive)."""
    if threshold < 0:
        raise ConfigError("threshold deve ser >= 0")
    data = np.array(tom.data)
    data[tom.norms() < threshold] = 0.0
    return OrientationMap(tom.geometry, data)


# ============================================================
#  NIfTI
# ============================================================
def _load_image(path):
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"arquivo não encontrado: {path}", path=path)
    try:
        img = nib.load(str(path))
        # sform preferida, qform como fallback
        affine = img.header.get_best_affine()
        data = np.asanyarray(img.dataobj)
    except (ImageFileError, HeaderDataError, OSError, EOFError, ValueError) as exc:
        raise NiftiFormatError(f"NIfTI inválido: {exc}", path=path) from exc
    if data.ndim < 3:
        raise NiftiFormatError(f"volume com {data.ndim} dimensões", path=path)
    try:
        geometry = GridGeometry.from_affine(data.shape[:3], affine)
    except InvalidGeometryError as exc:
        raise NiftiFormatError(f"geometria inválida: {exc.message}", path=path) from exc
    return geometry, data


def _save_image(data, geometry, path, dtype):
    img = nib.Nifti1Image(np.asarray(data, dtype=dtype), geometry.affine)
    img.header.set_data_dtype(dtype)
    img.set_sform(geometry.affine, code=1)
    img.set_qform(geometry.affine, code=1)
    nib.save(img, str(path))


def load_geometry(path) -> GridGeometry:
    return _load_image(path)[0]


def load_mask(path, threshold=0.5) -> BinaryMask:
    geometry, data = _load_image(path)
    if data.ndim != 3:
        raise NiftiFormatError(f"máscara deve ser 3D, recebido {data.shape}", path=path)
    return binarize(geometry, data, threshold)


def save_mask(mask: BinaryMask, path):
    _save_image(mask.data, mask.geometry, path, np.uint8)


def load_peaks(path) -> PeakImage:
    geometry, data = _load_image(path)
    if data.ndim != 4 or data.shape[3] != 3 * N_PEAKS:
        raise NiftiFormatError(f"peak image deve ter 9 canais, recebido {data.shape}", path=path)
    # peak-major: p1x, p1y, p1z, p2x, ...
    return PeakImage(geometry, data.reshape(geometry.dims + (N_PEAKS, 3)))


def save_peaks(peaks: PeakImage, path):
    _save_image(peaks.data.reshape(peaks.geometry.dims + (3 * N_PEAKS,)), peaks.geometry, path, np.float32)


def load_tom(path) -> OrientationMap:
    geometry, data = _load_image(path)
    if data.ndim != 4 or data.shape[3] != 3:
        raise NiftiFormatError(f"TOM deve ter 3 canais, recebido {data.shape}", path=path)
    return OrientationMap(geometry, data)


def save_tom(tom: OrientationMap, path):
    _save_image(tom.data, tom.geometry, path, np.float32)
