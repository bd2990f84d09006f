"""
JSON conversion for reports and the run journal. Dataclasses become
dictionaries, paths and enums become strings, numpy scalars become Python
numbers and non-finite floats become ``None`` (rendered as blank/undefined).
Anything else that JSON cannot express is converted to str.
"""
import dataclasses
import datetime
import enum
import json
import math
from pathlib import PurePath

import numpy as np


def to_json(obj):
    """
    Convert the object to a JSON-serializable object.
    """
    if obj is None:
        return None
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, str):
        return obj
    if isinstance(obj, enum.Enum):
        return to_json(obj.value)
    if isinstance(obj, PurePath):
        return str(obj)
    if isinstance(obj, (datetime.date, datetime.time)):
        return obj.isoformat()
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_json(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [to_json(e) for e in obj]
    return str(obj)


def to_json_str(obj, indent=None) -> str:
    """
    Deterministic JSON text: keys sorted so that equal data gives equal text.
    """
    return json.dumps(to_json(obj), sort_keys=True, indent=indent)
