# src/apps/seq2seq/apps.py
from django.apps import AppConfig


class Seq2SeqConfig(AppConfig):
    name = "apps.seq2seq"
    verbose_name = "Encoder-decoder models"
