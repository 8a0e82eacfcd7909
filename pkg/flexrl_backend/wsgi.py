"""
WSGI config for flexrl_backend project.

It exposes the WSGI callable as a module-level variable named ``application``.
Only the read-only results API is served; experiments run from the CLI.
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'flexrl_backend.settings')

application = get_wsgi_application()
