from django.apps import AppConfig


class RcaConfig(AppConfig):
    name = "rca"
    verbose_name = "RCA(1) quasi-maximum likelihood"
