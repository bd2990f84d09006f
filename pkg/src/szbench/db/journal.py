import json
import logging
import pathlib
import threading
import typing

from .json_serializer import to_json

_log = logging.getLogger("SzBench.db")


class JsonLinesJournal:
    """
    An append-only file of JSON entries, one per line. Appending is
    threadsafe within a process. Lines that cannot be decoded (e.g. left
    over from an interrupted write) are skipped with a warning when reading.
    """

    def __init__(self, path: typing.Union[str, pathlib.Path]):
        self.path = pathlib.Path(path)
        if self.path.is_dir():
            msg = f"Cannot use {self.path} as journal because it is a directory."
            raise RuntimeError(msg)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def extend(self, entries: typing.Iterable) -> typing.List:
        serialized = [to_json(e) for e in entries]
        if not serialized:
            return serialized
        text = "".join(json.dumps(data, sort_keys=True) + "\n" for data in serialized)
        with self._lock, self.path.open("a", encoding="utf-8") as f:
            f.write(text)
            f.flush()
        _log.debug(f"Wrote {len(serialized)} entries to {self.path}.")
        return serialized

    def append(self, entry):
        return self.extend([entry])[0]

    def __iter__(self) -> typing.Iterator[dict]:
        if not self.path.exists():
            return
        with self.path.open("r", encoding="utf-8", errors="replace") as f:
            for number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError:
                    _log.warning(f"Skipping damaged line {number} of {self.path}.")
                    continue
                if isinstance(entry, dict):
                    yield entry

    def latest(self, key: str) -> typing.Dict[str, dict]:
        """
        The last entry for every value of ``entry[key]``.
        """
        result = {}
        for entry in self:
            if key in entry:
                result[str(entry[key])] = entry
        return result

    def clear(self):
        with self._lock:
            self.path.unlink(missing_ok=True)
