"""CSV datasets: header row, a time column ``t``, then one column per
observation coordinate. Lines starting with ``#`` are comments."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Dataset:
    t: np.ndarray
    y: np.ndarray
    columns: tuple = ()

    def __len__(self):
        return len(self.t)


def read_dataset(path) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset not found: {path}")
    with path.open(newline="") as fh:
        rows = [row for row in csv.reader(line for line in fh if not line.startswith("#")) if row]
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header[0] != "t" or len(header) < 2:
        raise ValueError(f"{path}: first column must be 't' followed by observation columns")
    body = np.array([[float(v) for v in row] for row in rows[1:]], dtype=float).reshape(-1, len(header))
    return Dataset(body[:, 0], body[:, 1:], tuple(header[1:]))


def write_dataset(path, t, y, comments=()) -> None:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    y = y.reshape(len(t), y.shape[-1] if y.ndim > 1 else 1)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t"] + [f"y{k + 1}" for k in range(y.shape[1])])
        for ti, yi in zip(t, y):
            writer.writerow([repr(float(ti))] + [_fmt(v) for v in yi])


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def kangaroo_data_path() -> Path:
    """Path of the bundled kangaroo-format count series.

    The bundled file is a synthetic surrogate simulated from model M3; pass
    the path of the real transect-count file where it is available.
    """
    return Path(str(resources.files("hscore") / "data" / "kangaroo_surrogate.csv"))
