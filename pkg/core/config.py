"""
Configuração de execução dos comandos.

🔹 Precedência: flag da CLI > arquivo --config (key = value) > settings.
🔹 O número de threads também aceita TRACT_THREADS (via .env / ambiente).
🔹 Chave desconhecida ou valor inválido → ConfigError (exit 1).
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Optional

from django.conf import settings
from dotenv import dotenv_values

from .errors import ConfigError, MissingInputError
from .phantom import KINDS, BundleSpec
from .reference_prep import ClusterParams
from .tracking import Flavor, TrackerConfig, TrackingMode

TRUE_VALUES = {"1", "true", "yes", "on", "sim"}
FALSE_VALUES = {"0", "false", "no", "off", "nao", "não"}


def parse_bool(value):
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in TRUE_VALUES:
        return True
    if text in FALSE_VALUES:
        return False
    raise ValueError(f"booleano inválido: {value!r}")


def _seed(value):
    seed = int(value)
    if not 0 <= seed < 2 ** 64:
        raise ValueError("semente fora de [0, 2^64)")
    return seed


class Parameter(NamedTuple):
    section: str
    convert: Callable
    help: str
    flag: Optional[str] = None
    choices: Optional[tuple] = None


# ============================================================
#  TABELA DE PARÂMETROS
# ============================================================
PARAMETERS = {
    # ---- tracking
    "step_size_vox": Parameter("tracking", float, "passo em voxels"),
    "gaussian_std": Parameter("tracking", float, "desvio padrão do ruído gaussiano na direção"),
    "min_length_mm": Parameter("tracking", float, "comprimento mínimo aceito (mm)"),
    "target_count": Parameter("tracking", int, "número de streamlines desejado"),
    "max_steps": Parameter("tracking", int, "máximo de passos por sentido"),
    "max_attempt_factor": Parameter("tracking", int, "tentativas máximas = fator × target_count"),
    "peak_eps": Parameter("tracking", float, "norma mínima do peak para continuar"),
    "master_seed": Parameter("tracking", _seed, "semente mestre do tracking", flag="--seed"),
    "mode": Parameter("tracking", str, "modo de tracking",
                      choices=tuple(m.value for m in TrackingMode)),
    "flavor": Parameter("tracking", str, "campo de orientação usado no tracking",
                        choices=tuple(f.value for f in Flavor)),
    "prune_threshold": Parameter("tracking", float, "peaks da TOM com norma menor são zerados"),
    "prior_weight": Parameter("tracking", float, "peso da TOM no sabor fused_prior"),
    "smooth": Parameter("tracking", parse_bool, "suaviza as streamlines com B-spline"),
    "threads": Parameter("tracking", int, "máximo de threads (não altera o resultado)"),
    # ---- clustering
    "dbscan_eps_factor": Parameter("clustering", float, "eps do DBSCAN = fator × espaçamento médio"),
    "dbscan_min_pts": Parameter("clustering", int, "mínimo de pontos de um cluster DBSCAN"),
    "subset_size": Parameter("clustering", int, "pontas usadas no DBSCAN"),
    "meanshift_bandwidth": Parameter("clustering", float, "raio do kernel do mean shift"),
    "meanshift_tol": Parameter("clustering", float, "tolerância de convergência do mean shift"),
    "meanshift_merge_radius": Parameter("clustering", float, "raio de fusão dos modos"),
    "close_iters": Parameter("clustering", int, "iterações de fechamento das regiões de pontas"),
    "dilate_iters": Parameter("clustering", int, "iterações de dilatação das regiões de pontas"),
    # ---- phantom
    "kind": Parameter("phantom", str, "forma do bundle", choices=KINDS),
    "dims": Parameter("phantom", int, "voxels por eixo do grid"),
    "spacing": Parameter("phantom", float, "espaçamento isotrópico (mm)"),
    "length_mm": Parameter("phantom", float, "comprimento do trecho reto (mm)"),
    "arc_radius_mm": Parameter("phantom", float, "raio do arco (mm)"),
    "sweep_deg": Parameter("phantom", float, "abertura do arco (graus)"),
    "tube_radius_mm": Parameter("phantom", float, "raio do tubo (mm)"),
    "n_streamlines": Parameter("phantom", int, "streamlines do phantom"),
    "jitter_mm": Parameter("phantom", float, "ruído por ponto (mm)"),
    "noise_angle_deg": Parameter("phantom", float, "ruído angular da TOM perturbada (graus)"),
    "dropout": Parameter("phantom", float, "fração de voxels zerados na TOM perturbada"),
    "seed": Parameter("phantom", _seed, "semente do phantom"),
}

SECTION_DEFAULTS = {
    "tracking": "TRACKING_DEFAULTS",
    "clustering": "CLUSTERING_DEFAULTS",
    "phantom": "PHANTOM_DEFAULTS",
}


def _env_threads():
    raw = settings.TRACKING_THREADS
    try:
        threads = int(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"TRACT_THREADS deve ser um inteiro, recebido {raw!r}") from exc
    if threads < 1:
        raise ConfigError(f"TRACT_THREADS deve ser >= 1, recebido {threads}")
    return threads


def default_value(name):
    if name == "threads":
        return _env_threads()
    section = PARAMETERS[name].section
    return getattr(settings, SECTION_DEFAULTS[section])[name]


def default_text(name):
    # sem validar: o help não pode falhar por causa do .env
    if name == "threads":
        return settings.TRACKING_THREADS
    return default_value(name)


def flag_for(name):
    return PARAMETERS[name].flag or "--" + name.replace("_", "-")


def add_parameter(parser, name):
    """Registra a flag de um parâmetro; o default fica None para a precedência funcionar."""
    param = PARAMETERS[name]
    parser.add_argument(
        flag_for(name),
        dest=name,
        type=param.convert,
        default=None,
        choices=param.choices,
        help=f"{param.help} (padrão: {default_text(name)})",
    )


def load_config_file(path):
    """Lê um arquivo key = value (mesmo formato de um .env)."""
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"arquivo de configuração não encontrado: {path}", path=path)
    values = dotenv_values(path)
    unknown = sorted(set(values) - set(PARAMETERS))
    if unknown:
        raise ConfigError(f"chaves desconhecidas: {', '.join(unknown)}", path=path)
    return values


# ============================================================
#  RUN CONFIG
# ============================================================
@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    # origem de cada valor: "flag", "arquivo" ou "padrão"
    sources: dict = field(default_factory=dict)

    @classmethod
    def resolve(cls, names, options, config_path=None):
        file_values = load_config_file(config_path) if config_path else {}
        config = cls()
        for name in names:
            param = PARAMETERS[name]
            if options.get(name) is not None:
                value, source = options[name], "flag"
            elif name in file_values:
                raw = file_values[name]
                try:
                    value = param.convert(raw)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"valor inválido para {name}: {raw!r}", path=config_path) from exc
                if param.choices and value not in param.choices:
                    raise ConfigError(
                        f"{name} deve ser um de {', '.join(param.choices)}", path=config_path
                    )
                source = "arquivo"
            else:
                value, source = default_value(name), "padrão"
            config.values[name] = value
            config.sources[name] = source
        return config

    def __getitem__(self, name):
        return self.values[name]

    def explicit(self, name) -> bool:
        return self.sources.get(name) != "padrão"

    def tracker_config(self) -> TrackerConfig:
        fields = TrackerConfig.__dataclass_fields__
        return TrackerConfig(**{k: v for k, v in self.values.items() if k in fields})

    def cluster_params(self, geometry) -> ClusterParams:
        overrides = {
            k: self.values[k]
            for k in ("dbscan_min_pts", "subset_size", "meanshift_bandwidth",
                      "meanshift_tol", "meanshift_merge_radius")
            if k in self.values
        }
        return ClusterParams.for_geometry(
            geometry, eps_factor=self.values.get("dbscan_eps_factor", 3.0), **overrides
        )

    def bundle_spec(self) -> BundleSpec:
        values = {k: v for k, v in self.values.items() if k in BundleSpec.__dataclass_fields__}
        # u_shape tem geometria própria quando o usuário não informa
        if values.get("kind") == "u_shape":
            for key, value in settings.U_SHAPE_DEFAULTS.items():
                if not self.explicit(key):
                    values[key] = value
        return BundleSpec(**values)

    def manifest_items(self) -> dict:
        return dict(self.values)
