"""Campaign artifact files: atomic writes, JSONL and the stats CSV.

Every artifact is written whole to a temp file in the target directory and
renamed into place, so a reader never sees a half-written file and an
interrupted campaign leaves the previous checkpoint intact.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable

STATS_HEADER = "elapsed_s,iterations,mutations,crashes,corpus_size,mean_energy"


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".",
                               suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_compact(obj: Any) -> str:
    """Canonical one-line JSON: compact separators, keys in insertion order."""
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> None:
    lines = [dumps_compact(r) for r in rows]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def read_jsonl(path: str | Path) -> list[dict]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def write_json(path: str | Path, obj: Any) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, allow_nan=False) + "\n")


def read_json(path: str | Path) -> Any:
    with open(path) as fh:
        return json.load(fh)


def stats_csv_line(elapsed_s: float, iterations: int, mutations: int,
                   crashes: int, corpus_size: int, mean_energy: float) -> str:
    # repr() floats round-trip exactly and are stable across runs
    return (f"{elapsed_s:.3f},{iterations},{mutations},{crashes},"
            f"{corpus_size},{mean_energy!r}")


def write_stats_csv(path: str | Path, lines: Iterable[str]) -> None:
    body = "".join(line + "\n" for line in lines)
    atomic_write_text(path, STATS_HEADER + "\n" + body)


def read_stats_csv(path: str | Path) -> list[dict]:
    """Rows of the stats file as dicts keyed by the pinned header."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header != STATS_HEADER:
            raise ValueError(f"unexpected stats header: {header!r}")
        keys = header.split(",")
        rows = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            vals = line.split(",")
            row: dict[str, Any] = dict(zip(keys, vals))
            for k in ("elapsed_s", "mean_energy"):
                row[k] = float(row[k])
            for k in ("iterations", "mutations", "crashes", "corpus_size"):
                row[k] = int(row[k])
            rows.append(row)
        return rows
