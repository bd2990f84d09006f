# flake8: noqa F401
from .journal import JsonLinesJournal
from .json_serializer import to_json, to_json_str

__all__ = ["JsonLinesJournal", "to_json", "to_json_str"]
