"""
Exceções do tractTOM.

🔹 Toda falha de dados herda de TractError.
🔹 `code` é estável (aparece na saída dos comandos e nos testes).
🔹 `exit_code` segue o contrato da CLI: 1 = uso, 2 = dados.
"""

EXIT_USAGE = 1
EXIT_DATA = 2


class TractError(Exception):
    code = "E_TRACT"
    exit_code = EXIT_DATA

    def __init__(self, message, path=None):
        super().__init__(message)
        self.message = message
        self.path = str(path) if path is not None else None

    def __str__(self):
        if self.path and self.path not in self.message:
            return f"{self.message} ({self.path})"
        return self.message


# ============================================================
#  USO / CONFIGURAÇÃO
# ============================================================
class ConfigError(TractError):
    code = "E_CONFIG"
    exit_code = EXIT_USAGE


class MissingInputError(TractError):
    code = "E_MISSING_FILE"


# ============================================================
#  GEOMETRIA E VOLUMES
# ============================================================
class InvalidGeometryError(TractError):
    code = "E_GEOMETRY_INVALID"


class GeometryMismatchError(TractError):
    code = "E_GEOMETRY_MISMATCH"


class NiftiFormatError(TractError):
    code = "E_NIFTI"


class ShapeMismatchError(TractError):
    code = "E_SHAPE"


class ZeroNormError(TractError):
    code = "E_ZERO_NORM"


# ============================================================
#  TCK
# ============================================================
class TckParseError(TractError):
    code = "E_TCK"


class TckHeaderError(TckParseError):
    code = "E_TCK_HEADER"


class TckDatatypeError(TckParseError):
    code = "E_TCK_DATATYPE"


class TckTruncatedError(TckParseError):
    code = "E_TCK_TRUNCATED"


# ============================================================
#  ALGORITMOS
# ============================================================
class ZeroPeakError(TractError):
    code = "E_ZERO_PEAK"


class EmptyMaskError(TractError):
    code = "E_EMPTY_MASK"


class InseparableRegionsError(TractError):
    code = "E_ENDPOINTS_INSEPARABLE"


class NoComparableVoxelsError(TractError):
    code = "E_NO_COMPARABLE_VOXELS"


class BundleNameMismatchError(TractError):
    code = "E_BUNDLE_NAMES"


class BundleExceedsGridError(TractError):
    code = "E_BUNDLE_EXCEEDS_GRID"


class EmptyTractogramError(TractError):
    code = "E_EMPTY_TRACTOGRAM"
