"""
Django settings for flexrl_backend project.

Experiments run through the ``flexrl`` management commands; the database only
stores finished result rows, and the API serves them read-only.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/4.2/ref/settings/
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get(
    'DJANGO_SECRET_KEY',
    'django-insecure-flexrl-local-results-store-only',
)

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = os.environ.get('DJANGO_DEBUG', '1') == '1'

ALLOWED_HOSTS = ['localhost', '127.0.0.1']


# Application definition

INSTALLED_APPS = [
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'rest_framework',
    'corsheaders',
    'flexrl',
]

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'corsheaders.middleware.CorsMiddleware',
    'django.middleware.common.CommonMiddleware',
]

ROOT_URLCONF = 'flexrl_backend.urls'

WSGI_APPLICATION = 'flexrl_backend.wsgi.application'


# Database
# https://docs.djangoproject.com/en/4.2/ref/settings/#databases

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}


# Internationalization
# https://docs.djangoproject.com/en/4.2/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

# Default primary key field type
# https://docs.djangoproject.com/en/4.2/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# REST Framework settings
REST_FRAMEWORK = {
    'DEFAULT_RENDERER_CLASSES': [
        'rest_framework.renderers.JSONRenderer',
    ],
    'DEFAULT_AUTHENTICATION_CLASSES': [],
    'DEFAULT_PERMISSION_CLASSES': [
        'rest_framework.permissions.AllowAny',
    ],
    'UNAUTHENTICATED_USER': None,
    'DEFAULT_PAGINATION_CLASS': 'rest_framework.pagination.PageNumberPagination',
    'PAGE_SIZE': 100,
}

# CORS settings
CORS_ALLOW_ALL_ORIGINS = DEBUG


# Logging
# https://docs.djangoproject.com/en/4.2/topics/logging/

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'flexrl': {
            'handlers': ['console'],
            'level': os.environ.get('FLEXRL_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}


# flexrl settings. Anything left out falls back to flexrl.conf.DEFAULTS.
FLEXRL = {
    'OUTPUT_ROOT': Path(os.environ.get('FLEXRL_OUT', BASE_DIR / 'runs')),
    'TRAIN_DEFAULTS': {
        'flex_f_q': {
            'lp_mode': 'neg_estimated_td',
            'alpha_g': 1.0,
        },
        'flex_f_dice': {
            'lp_mode': 'init_dist',
            'alpha_g': 0.1,
        },
    },
    'ADAPTIVE_DEFAULTS': {
        'iota_b': 0.3,
        'e_clip': (-0.2, 0.15),
        'ema_decay': 0.99,
    },
    'DATASET_DEFAULTS': {
        'n_trajectories': 100,
        'horizon': 50,
        'gamma': 0.9,
        'noise': 0.1,
    },
    'CHECK_MAX_SIZE': 64,
}
