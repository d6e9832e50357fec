from django.apps import AppConfig


class InversionConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'inversion'
