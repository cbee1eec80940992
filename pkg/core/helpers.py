import os
import uuid
from contextlib import contextmanager
from pathlib import Path

from django.conf import settings
from django.utils import timezone

MANIFEST_SUFFIX = ".manifest.txt"


# ============================================================
#  ESCRITA ATÔMICA
# ============================================================
@contextmanager
def atomic_output(path):
    """
    Entrega um caminho temporário no mesmo diretório do destino.
    🔹 Se o bloco terminar bem, o temporário substitui o destino (os.replace).
    🔹 Se falhar, o temporário é apagado e o destino fica intacto.
    🔹 O nome temporário mantém a extensão completa (.nii.gz continua .nii.gz).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".tmp-{uuid.uuid4().hex}-{path.name}")
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def manifest_path(output) -> Path:
    output = Path(output)
    return output.with_name(output.name + MANIFEST_SUFFIX)


# ============================================================
#  MANIFESTO DA EXECUÇÃO
# ============================================================
def _format_value(value):
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return " ".join(_format_value(v) for v in value)
    return str(value)


def manifest_lines(command, inputs=None, parameters=None, counts=None):
    """
    Linhas `key = value` ordenadas:
    🔹 input.<nome> → caminhos de entrada
    🔹 param.<nome> → parâmetros resolvidos
    🔹 count.<nome> → contagens da execução
    """
    items = {"command": command, "version": settings.APP_VERSION}
    for prefix, group in (("input", inputs), ("param", parameters), ("count", counts)):
        for key, value in (group or {}).items():
            if value is None:
                continue
            items[f"{prefix}.{key}"] = value
    return [f"{key} = {_format_value(items[key])}" for key in sorted(items)]


def write_manifest(output, command, inputs=None, parameters=None, counts=None):
    """Grava X.manifest.txt ao lado da saída X; só created_at muda entre execuções iguais."""
    lines = manifest_lines(command, inputs, parameters, counts)
    lines.append(f"created_at = {timezone.now().isoformat()}")
    target = manifest_path(output)
    with atomic_output(target) as tmp:
        tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return target

