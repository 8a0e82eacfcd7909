"""
URL configuration for flexrl_backend project.

The API is read-only: results are written by the ``train`` and ``sweep``
management commands and browsed here.
"""
from django.urls import path, include

urlpatterns = [
    path('api/', include('flexrl.urls')),
]
