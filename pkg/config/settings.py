"""
Django settings for config project.
GPR layer stripping - forward synthesis, complex-frequency inversion and bound checks.
"""

import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from .env
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.getenv('SECRET_KEY', 'django-insecure-dev-key-change-in-production')

DEBUG = os.getenv('DEBUG', 'True').lower() in ('true', '1', 'yes')

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'medium.apps.MediumConfig',
    'forward.apps.ForwardConfig',
    'spectral.apps.SpectralConfig',
    'inversion.apps.InversionConfig',
    'verify.apps.VerifyConfig',
    'cli.apps.CliConfig',
]

# No app defines models; management commands and tests never touch a database.
DATABASES = {}

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Logging
GPR_LOG_LEVEL = os.getenv('GPR_LOG_LEVEL', 'INFO').upper()

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': GPR_LOG_LEVEL,
    },
}


# Forward solver
GPR_NZ_PER_LAYER = int(os.getenv('GPR_NZ_PER_LAYER', '64'))
# Relative source amplitude below which frequency bins are not solved
GPR_SPECTRUM_FLOOR = float(os.getenv('GPR_SPECTRUM_FLOOR', '1e-12'))
GPR_THREADS = int(os.getenv('GPR_THREADS', str(os.cpu_count() or 1)))

# Conditions A/B
GPR_CONDITION_GRID = int(os.getenv('GPR_CONDITION_GRID', '10000'))
GPR_DELTA = float(os.getenv('GPR_DELTA', '0.1'))

# Inversion
GPR_OMEGA2_RATIO = float(os.getenv('GPR_OMEGA2_RATIO', '-0.9'))
GPR_LOW_CUTOFF_FRACTION = float(os.getenv('GPR_LOW_CUTOFF_FRACTION', '0.05'))
GPR_THRESHOLD_RATIO = float(os.getenv('GPR_THRESHOLD_RATIO', '0.05'))

# Scenario defaults (scaled experiment grid)
GPR_SAMPLES = int(os.getenv('GPR_SAMPLES', str(2 ** 18)))
GPR_FULL_SCALE_SAMPLES = int(os.getenv('GPR_FULL_SCALE_SAMPLES', str(2 ** 24)))
GPR_DT = float(os.getenv('GPR_DT', '3e-10'))
GPR_CENTRAL_FREQUENCY = float(os.getenv('GPR_CENTRAL_FREQUENCY', '200e6'))
GPR_SOURCE_HEIGHT = float(os.getenv('GPR_SOURCE_HEIGHT', '-0.5'))
GPR_SEED = int(os.getenv('GPR_SEED', '20240607'))
