"""
Stable hashes of scoring parameter sets and detector command templates.
Reports print the short form next to the parameters; the run journal
stores the full hash to decide whether an output can be reused.
"""
import hashlib
import typing

from .db.json_serializer import to_json_str

SHORT_LENGTH = 12


def fingerprint(data: typing.Any) -> str:
    """
    SHA-1 over the canonical JSON text of ``data`` (keys sorted, NaN as
    null), so equal parameter sets hash equally regardless of key order.
    """
    return hashlib.sha1(to_json_str(data).encode()).hexdigest()


def short_fingerprint(data: typing.Any) -> str:
    return fingerprint(data)[:SHORT_LENGTH]
