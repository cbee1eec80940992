from functools import wraps

from django.core.management.base import CommandError

from .errors import TractError


def reports_tract_errors(handle):
    """
    🔹 Decorator para o handle() dos comandos.
    🔹 Converte TractError em CommandError com `[CODE] mensagem (caminho)`
       e o exit code do erro (1 = uso, 2 = dados).

    🔸 Uso:
        @reports_tract_errors
        def handle(self, *args, **options):
            ...
    """
    @wraps(handle)
    def wrapper(self, *args, **options):
        try:
            return handle(self, *args, **options)
        except TractError as exc:
            raise CommandError(f"[{exc.code}] {exc}", returncode=exc.exit_code) from exc

    return wrapper
