"""
Base dos comandos de gerenciamento do tractTOM.

🔹 Cada comando declara `parameters` (nomes de core.config.PARAMETERS).
🔹 Erros de uso do argparse saem com código 1 (e não 2, que é erro de dados).
🔹 Toda saída é escrita de forma atômica e ganha um manifesto ao lado.
"""
import logging
import sys
from functools import partial

from django.core.management.base import BaseCommand, CommandError

from core.config import RunConfig, add_parameter
from core.errors import EXIT_USAGE, ConfigError
from core.geometry import load_geometry
from core.helpers import atomic_output, write_manifest
from core.streamlines import read_tck

VERBOSITY_LEVELS = {0: logging.WARNING, 1: logging.INFO}


def _usage_error(parser, message):
    if parser.called_from_command_line:
        parser.print_usage(sys.stderr)
        parser.exit(EXIT_USAGE, f"{parser.prog}: error: {message}\n")
    raise CommandError(f"Error: {message}", returncode=EXIT_USAGE)


class TractCommand(BaseCommand):
    parameters = ()

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        parser.error = partial(_usage_error, parser)
        return parser

    def add_arguments(self, parser):
        parser.add_argument("--config", help="arquivo key = value com parâmetros (flags têm prioridade)")
        for name in self.parameters:
            add_parameter(parser, name)
        self.add_paths(parser)

    def add_paths(self, parser):
        """Argumentos de entrada/saída de cada comando."""

    # ============================================================
    #  CONFIGURAÇÃO
    # ============================================================
    def resolve_config(self, options) -> RunConfig:
        level = VERBOSITY_LEVELS.get(options.get("verbosity", 1), logging.DEBUG)
        logging.getLogger("core").setLevel(level)
        self.show_progress = options.get("verbosity", 1) >= 2
        return RunConfig.resolve(self.parameters, options, options.get("config"))

    # ============================================================
    #  I/O
    # ============================================================
    def read_tractogram(self, path, reference=None, geometry=None):
        """TCK no grid de `geometry`, do NIfTI `reference` ou das chaves grid_* do header."""
        if geometry is None and reference:
            geometry = load_geometry(reference)
        tractogram = read_tck(path, geometry)
        if tractogram.geometry is None:
            raise ConfigError("TCK sem grid no header: informe --reference", path=path)
        return tractogram

    def write_output(self, save, obj, path, inputs, config, counts=None):
        with atomic_output(path) as tmp:
            save(obj, tmp)
        write_manifest(path, self.command_name, inputs, config.manifest_items(), counts)
        self.stdout.write(f"✔ {path}")

    @property
    def command_name(self):
        return self.__module__.rsplit(".", 1)[-1]
