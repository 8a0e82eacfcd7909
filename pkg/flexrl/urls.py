from django.urls import path, include
from rest_framework.routers import DefaultRouter

from .views import ResultRowViewSet

router = DefaultRouter()
router.register(r'results', ResultRowViewSet, basename='result')

urlpatterns = [
    path('', include(router.urls)),
]
