"""Time series of norms and their CSV form.

CSV schema: a header row, then one row per record.  The first column is
always ``t``.  Recognised columns:

``l2_u``, ``l2_w``
    ``|u|_2`` and ``|w|_2``.
``h{m}_u``, ``h{m}_w``
    ``|D^m u|_2`` and ``|D^m w|_2`` for each recorded order ``m``.
``lbeta_u``
    ``int |u|^(beta+1) dx``.
``energy``
    ``|u|_2**2 + |w|_2**2``.
``energy_residual``
    energy-balance residual (see :mod:`micropolar.integrator`).
``ineq_residual``
    residual of the strong energy inequality.
``dissipation``, ``div_w``, ``damping``, ``relax``
    accumulated dissipation integrals.

Values are written with ``repr`` precision so files round-trip exactly.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

REQUIRED = ("t",)


@dataclass
class NormSeries:
    columns: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_rows(cls, names, rows, meta=None) -> "NormSeries":
        arr = np.asarray(rows, dtype=float).reshape(-1, len(names))
        return cls({n: arr[:, i].copy() for i, n in enumerate(names)}, dict(meta or {}))

    @property
    def t(self) -> np.ndarray:
        return self.columns["t"]

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise KeyError(f"series has no column {name!r}; have {sorted(self.columns)}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.columns

    def __len__(self) -> int:
        return len(self.t) if "t" in self.columns else 0

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    def window(self, t_lo: float, t_hi: float) -> "NormSeries":
        keep = (self.t >= t_lo) & (self.t <= t_hi)
        return NormSeries({k: v[keep] for k, v in self.columns.items()}, dict(self.meta))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        names = self.names
        wr.writerow(names)
        for i in range(len(self)):
            wr.writerow([repr(float(self.columns[n][i])) for n in names])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text, required=REQUIRED) -> "NormSeries":
        p = Path(path_or_text) if not isinstance(path_or_text, str) or "\n" not in path_or_text \
            else None
        text = p.read_text() if p is not None else path_or_text
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty series file")
        names = [h.strip() for h in rows[0]]
        if names[:1] != ["t"]:
            raise ValueError(f"series header must start with 't', got {names[:1]}")
        missing = [r for r in required if r not in names]
        if missing:
            raise ValueError(f"series is missing columns {missing}")
        body = []
        for lineno, row in enumerate(rows[1:], 2):
            if len(row) != len(names):
                raise ValueError(f"line {lineno}: expected {len(names)} fields, got {len(row)}")
            body.append([float(x) for x in row])
        return cls.from_rows(names, body)
