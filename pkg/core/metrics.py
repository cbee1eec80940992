"""
Métricas de avaliação (Dice, erro angular por voxel) e as duas funções
de perda (entropia cruzada binária e similaridade de cosseno).
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BundleNameMismatchError,
    GeometryMismatchError,
    NoComparableVoxelsError,
    ShapeMismatchError,
    ZeroNormError,
)
from .geometry import BinaryMask, OrientationMap

logger = logging.getLogger(__name__)

BCE_EPS = 1e-7


@dataclass(frozen=True, eq=False)
class LossSample:
    y: np.ndarray
    y_hat: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        y_hat = np.asarray(self.y_hat, dtype=np.float64)
        if y.shape != y_hat.shape:
            raise ShapeMismatchError(f"y {y.shape} e y_hat {y_hat.shape} com shapes diferentes")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "y_hat", y_hat)

    @property
    def n_scalars(self) -> int:
        return int(self.y.size)

    @property
    def n_vectors(self) -> int:
        return int(self.y.size // 3)


@dataclass
class BundleScores:
    dice: float
    mean_angular_error_deg: float
    voxels_compared: int


def _angle_text(value):
    return "n/a" if np.isnan(value) else f"{value:.4f}"


def _angle_record(value):
    return "n/a" if np.isnan(value) else repr(value)


@dataclass
class EvalReport:
    per_bundle: dict = field(default_factory=dict)

    @property
    def mean_dice(self) -> float:
        return float(np.mean([s.dice for s in self.per_bundle.values()]))

    @property
    def mean_angular_error_deg(self) -> float:
        """Média só dos bundles com voxels comparáveis; nan se nenhum tiver."""
        errors = np.array([s.mean_angular_error_deg for s in self.per_bundle.values()], dtype=np.float64)
        if np.isnan(errors).all():
            return float("nan")
        return float(np.nanmean(errors))

    def to_text(self) -> str:
        lines = [f"{'bundle':<24} {'dice':>8} {'ang_err_deg':>12} {'voxels':>8}"]
        for name, s in self.per_bundle.items():
            lines.append(f"{name:<24} {s.dice:>8.4f} {_angle_text(s.mean_angular_error_deg):>12} {s.voxels_compared:>8d}")
        lines.append(f"{'MEAN':<24} {self.mean_dice:>8.4f} {_angle_text(self.mean_angular_error_deg):>12}")
        return "\n".join(lines) + "\n"

    def to_records(self) -> str:
        """Uma linha key=value por bundle, mais uma linha de médias."""
        lines = [
            f"bundle={name} dice={s.dice!r} mean_angular_error_deg={_angle_record(s.mean_angular_error_deg)} "
            f"voxels_compared={s.voxels_compared}"
            for name, s in self.per_bundle.items()
        ]
        lines.append(f"bundle=__mean__ dice={self.mean_dice!r} mean_angular_error_deg={_angle_record(self.mean_angular_error_deg)}")
        return "\n".join(lines) + "\n"


# ============================================================
#  SOBREPOSIÇÃO / ORIENTAÇÃO
# ============================================================
def dice(a: BinaryMask, b: BinaryMask) -> float:
    """2|A∩B| / (|A|+|B|); duas máscaras vazias valem 1.0."""
    if not a.geometry.same_as(b.geometry):
        raise GeometryMismatchError("dice entre máscaras de geometrias diferentes")
    total = a.count + b.count
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a.data, b.data).sum()) / total


def angular_error_map(a: OrientationMap, b: OrientationMap):
    """Erro angular axial por voxel (graus) e a máscara de voxels comparáveis."""
    if not a.geometry.same_as(b.geometry):
        raise GeometryMismatchError("erro angular entre TOMs de geometrias diferentes")
    na, nb = a.norms(), b.norms()
    comparable = (na > 0) & (nb > 0)
    cos = np.zeros(a.geometry.dims)
    dots = np.abs(np.einsum("...c,...c->...", a.data, b.data))
    cos[comparable] = dots[comparable] / (na[comparable] * nb[comparable])
    errors = np.degrees(np.arccos(np.clip(cos, 0.0, 1.0)))
    errors[~comparable] = 0.0
    return errors, comparable


def mean_angular_error(a: OrientationMap, b: OrientationMap):
    errors, comparable = angular_error_map(a, b)
    count = int(comparable.sum())
    if count == 0:
        raise NoComparableVoxelsError("nenhum voxel com peak não nulo nos dois mapas")
    return float(errors[comparable].mean()), count


# ============================================================
#  PERDAS
# ============================================================
def bce_loss(s: LossSample) -> float:
    y_hat = np.clip(s.y_hat, BCE_EPS, 1.0 - BCE_EPS)
    terms = s.y * np.log(y_hat) + (1.0 - s.y) * np.log(1.0 - y_hat)
    return float(-terms.sum() / s.n_scalars)


def cosine_loss(s: LossSample) -> float:
    """−(1/N) Σ |⟨ŷ_i, y_i⟩| / (‖ŷ_i‖‖y_i‖); vetores na última dimensão."""
    y = s.y.reshape(-1, 3)
    y_hat = s.y_hat.reshape(-1, 3)
    ny = np.linalg.norm(y, axis=1)
    nh = np.linalg.norm(y_hat, axis=1)
    if np.any(ny == 0) or np.any(nh == 0):
        raise ZeroNormError("cosine_loss exige vetores de norma não nula")
    cos = np.abs(np.einsum("ic,ic->i", y_hat, y)) / (ny * nh)
    return float(-cos.sum() / s.n_vectors)


# ============================================================
#  AVALIAÇÃO
# ============================================================
def evaluate(pred_masks: dict, ref_masks: dict, pred_toms: dict, ref_toms: dict) -> EvalReport:
    names = set(ref_masks)
    for label, group in (("pred_masks", pred_masks), ("pred_toms", pred_toms), ("ref_toms", ref_toms)):
        if set(group) != names:
            missing = sorted(names.symmetric_difference(group))
            raise BundleNameMismatchError(f"bundles diferentes em {label}: {', '.join(missing)}")

    report = EvalReport()
    for name in sorted(names):
        try:
            error, voxels = mean_angular_error(pred_toms[name], ref_toms[name])
        except NoComparableVoxelsError:
            # nenhum voxel com peak nos dois mapas (ex.: trato ausente e previsto ausente)
            error, voxels = float("nan"), 0
        report.per_bundle[name] = BundleScores(
            dice=dice(pred_masks[name], ref_masks[name]),
            mean_angular_error_deg=error,
            voxels_compared=voxels,
        )
        logger.debug("%s: dice=%.4f erro=%.2f° voxels=%d", name, report.per_bundle[name].dice, error, voxels)
    return report
