"""Per-observation record of prequential log-evidence and H-score."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class TraceRow:
    t: float
    log_evidence_inc: float
    h_inc: float
    grad_log: np.ndarray
    hess_log: np.ndarray
    ess_before: float = math.nan
    n_temper: int = 0
    acceptance_rate: float = math.nan
    n_x: int = 0
    flag: str = ""


class PrequentialTrace:
    """Rows of increments; cumulative columns are computed as prefix sums.

    Rows before the first proper posterior carry ``h_inc = 0`` and the flag
    ``"improper"`` so that the H-score accumulates from the first proper
    predictive onwards.
    """

    def __init__(self, model: str, rows=None):
        self.model = model
        self.rows: list[TraceRow] = list(rows or [])

    def append(self, row: TraceRow) -> None:
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def _col(self, name):
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    @property
    def t(self):
        return self._col("t")

    @property
    def log_evidence_inc(self):
        return self._col("log_evidence_inc")

    @property
    def log_evidence_cum(self):
        # undefined (NaN) increments from an improper start are skipped
        return np.nancumsum(self.log_evidence_inc)

    @property
    def h_inc(self):
        return self._col("h_inc")

    @property
    def h_cum(self):
        return np.cumsum(self.h_inc)

    @property
    def grad_log(self):
        return np.array([r.grad_log for r in self.rows])

    @property
    def hess_log(self):
        return np.array([r.hess_log for r in self.rows])

    @property
    def ess_before(self):
        return self._col("ess_before")

    @property
    def n_temper(self):
        return self._col("n_temper")

    @property
    def acceptance_rate(self):
        return self._col("acceptance_rate")

    @property
    def n_x(self):
        return self._col("n_x")

    @property
    def flags(self):
        return [r.flag for r in self.rows]

    def __repr__(self):
        if not self.rows:
            return f"PrequentialTrace({self.model!r}, empty)"
        return (
            f"PrequentialTrace({self.model!r}, T={len(self)}, "
            f"log_evidence={self.log_evidence_cum[-1]:.4f}, h_score={self.h_cum[-1]:.4f})"
        )
