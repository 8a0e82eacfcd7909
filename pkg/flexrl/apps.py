from django.apps import AppConfig


class FlexrlConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'flexrl'
    verbose_name = 'Flexible f-divergence offline RL'
