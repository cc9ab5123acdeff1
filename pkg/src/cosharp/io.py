"""CSV, PGM and JSON helpers for experiment artifacts."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows):
    """Write rows under a single header line; floats are written round-trippable."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_vector_csv(path, vec, name="value"):
    write_csv(path, ["index", name], enumerate(np.asarray(vec, dtype=float)))


def read_vector_csv(path, column=None) -> np.ndarray:
    """Read a numeric column from a CSV with a header line.

    The last column is used unless ``column`` names another one. Files
    without a header (a bare column of numbers) are accepted too.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        return np.empty(0)
    try:
        float(rows[0][-1])
        header, body = None, rows
    except ValueError:
        header, body = rows[0], rows[1:]
    col = -1
    if column is not None:
        if header is None or column not in header:
            raise KeyError(f"column {column!r} not in {path}")
        col = header.index(column)
    return np.array([float(r[col]) for r in body])


def write_pgm(path, image: np.ndarray):
    """Binary 8-bit PGM, scaled so the image maximum maps to 255.

    ``image`` is ``(n_y, n_x)`` with row 0 at the bottom of the domain; rows
    are flipped so the file displays with +y up.
    """
    img = np.asarray(image, dtype=float)
    top = img.max() if img.size else 0.0
    scaled = np.zeros(img.shape) if top <= 0 else np.clip(img, 0, None) / top * 255.0
    data = np.rint(scaled).astype(np.uint8)[::-1]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Inverse of :func:`write_pgm` up to scaling (returns uint8, row 0 at the bottom)."""
    raw = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos].decode("ascii"))
    if fields[0] != "P5":
        raise ValueError("not a binary PGM file")
    w, h = int(fields[1]), int(fields[2])
    data = np.frombuffer(raw[pos + 1:pos + 1 + w * h], dtype=np.uint8).reshape(h, w)
    return data[::-1].copy()


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
