from django.apps import AppConfig


class MediumConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'medium'
