from pathlib import Path
import os

from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# .env opcional ao lado do manage.py (só TRACT_THREADS é lido daqui)
load_dotenv(BASE_DIR / ".env")


# Sem superfície web: a chave só existe porque o Django exige uma.
SECRET_KEY = os.getenv("TRACT_SECRET_KEY", "tracttom-cli-only")

DEBUG = False

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'core',
]

# Nenhum modelo: os testes usam SimpleTestCase.
DATABASES = {}

# Internationalization

LANGUAGE_CODE = 'pt-br'

TIME_ZONE = "America/Sao_Paulo"

USE_I18N = False

USE_TZ = True


# ======================================
# Logging
# ======================================

# Sem timestamps nas mensagens: duas execuções iguais geram o mesmo log.
LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "{levelname} {name}: {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
        },
    },
    "loggers": {
        "core": {
            "handlers": ["console"],
            "level": "INFO",
            "propagate": False,
        },
    },
}


# ======================================
# Parâmetros de tracking
# ======================================

# Passo 0.7 voxel, desvio 0.15, mínimo 50 mm, 2000 streamlines, poda 0.3.
TRACKING_DEFAULTS = {
    "step_size_vox": 0.7,
    "gaussian_std": 0.15,
    "min_length_mm": 50.0,
    "target_count": 2000,
    "max_steps": 1000,
    "max_attempt_factor": 100,
    "peak_eps": 1e-6,
    "master_seed": 0,
    "mode": "probabilistic",
    "flavor": "direct",
    "prune_threshold": 0.3,
    "prior_weight": 0.5,
    "smooth": True,
}

# ======================================
# Preparação das referências
# ======================================

CLUSTERING_DEFAULTS = {
    # eps do DBSCAN = fator × espaçamento médio do grid (mm)
    "dbscan_eps_factor": 3.0,
    "dbscan_min_pts": 5,
    "subset_size": 1000,
    "meanshift_bandwidth": 0.3,
    "meanshift_tol": 1e-4,
    "meanshift_merge_radius": 0.1,
    "close_iters": 1,
    "dilate_iters": 1,
}

# ======================================
# Phantom analítico
# ======================================

PHANTOM_DEFAULTS = {
    "kind": "straight",
    "dims": 50,
    "spacing": 2.5,
    "length_mm": 100.0,
    "arc_radius_mm": 60.0,
    "sweep_deg": 90.0,
    "tube_radius_mm": 5.0,
    "n_streamlines": 500,
    "jitter_mm": 0.1,
    "noise_angle_deg": 0.0,
    "dropout": 0.0,
    "seed": 0,
}

# u_shape usa raio e varredura próprios quando o usuário não informa
U_SHAPE_DEFAULTS = {
    "arc_radius_mm": 20.0,
    "sweep_deg": 180.0,
    "length_mm": 40.0,
}

# Único parâmetro que aceita override por variável de ambiente.
# Fica como texto: core.config valida e converte (E_CONFIG se inválido).
TRACKING_THREADS = os.getenv("TRACT_THREADS", "1")


with open(BASE_DIR / "VERSION") as f:
    APP_VERSION = f.read().strip()
