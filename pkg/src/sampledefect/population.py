"""Finite populations, sample memberships and their exact summary statistics.

A population is stored column-wise (numpy arrays) because the worked
examples run to a few hundred thousand units; :class:`Unit` is a row view
for callers that want one.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .errors import PopulationError

RESERVED_COLUMNS = ("id", "y", "sampled", "row", "col")

PathOrStream = str | os.PathLike | IO[str]


@dataclass(frozen=True)
class Unit:
    id: str
    y: float
    covariates: tuple[float, ...] | None = None
    cell: tuple[int, int] | None = None


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class Population:
    """Immutable finite population of ``N`` units.

    Parameters
    ----------
    ids : sequence of str
        Unique unit identifiers, in population order.
    y : array-like of float
        Study variable, one finite value per unit.
    covariates : array-like, shape (N, p), optional
        Design variables.
    cells : array-like of int, shape (N, 2), optional
        Non-negative ``(row, col)`` grid coordinates.
    covariate_names : sequence of str, optional
        Column names for ``covariates``; defaults to ``x1..xp``.
    """

    def __init__(
        self,
        ids: Sequence[str],
        y,
        covariates=None,
        cells=None,
        covariate_names: Sequence[str] | None = None,
    ):
        ids = tuple(str(i) for i in ids)
        y = np.array(y, dtype=np.float64).reshape(-1)
        if len(ids) == 0:
            raise PopulationError("empty population")
        if len(ids) != y.shape[0]:
            raise PopulationError(f"{len(ids)} ids but {y.shape[0]} y values")
        if len(set(ids)) != len(ids):
            seen: set[str] = set()
            dup = next(i for i in ids if i in seen or seen.add(i))
            raise PopulationError(f"duplicate unit id {dup!r}")
        if not np.all(np.isfinite(y)):
            raise PopulationError("every unit needs a finite y value")

        if covariates is not None:
            covariates = np.array(covariates, dtype=np.float64)
            if covariates.ndim == 1:
                covariates = covariates.reshape(-1, 1)
            if covariates.ndim != 2 or covariates.shape[0] != len(ids):
                raise PopulationError("covariates must be an (N, p) array")
            if not np.all(np.isfinite(covariates)):
                raise PopulationError("covariates must be finite")
            if covariate_names is None:
                covariate_names = [f"x{j + 1}" for j in range(covariates.shape[1])]
            covariate_names = tuple(covariate_names)
            if len(covariate_names) != covariates.shape[1]:
                raise PopulationError("covariate_names length does not match covariates")
            _frozen(covariates)
        else:
            covariate_names = ()

        if cells is not None:
            cells = np.array(cells, dtype=np.int64)
            if cells.shape != (len(ids), 2):
                raise PopulationError("cells must be an (N, 2) array of (row, col)")
            if np.any(cells < 0):
                raise PopulationError("grid coordinates must be non-negative")
            _frozen(cells)

        self.ids = ids
        self.y = _frozen(y)
        self.covariates = covariates
        self.cells = cells
        self.covariate_names: tuple[str, ...] = covariate_names

    @property
    def N(self) -> int:
        return self.y.shape[0]

    def __len__(self) -> int:
        return self.N

    def __repr__(self) -> str:
        extra = []
        if self.covariates is not None:
            extra.append(f"covariates={list(self.covariate_names)}")
        if self.cells is not None:
            extra.append("gridded")
        tail = (", " + ", ".join(extra)) if extra else ""
        return f"Population(N={self.N}{tail})"

    @property
    def units(self) -> list[Unit]:
        cov = self.covariates
        cells = self.cells
        return [
            Unit(
                id=self.ids[i],
                y=float(self.y[i]),
                covariates=None if cov is None else tuple(float(v) for v in cov[i]),
                cell=None if cells is None else (int(cells[i, 0]), int(cells[i, 1])),
            )
            for i in range(self.N)
        ]

    @classmethod
    def from_units(cls, units: Iterable[Unit], covariate_names=None) -> "Population":
        units = list(units)
        if not units:
            raise PopulationError("empty population")
        has_cov = [u.covariates is not None for u in units]
        if any(has_cov) and not all(has_cov):
            raise PopulationError("ragged covariates: some units lack a covariate vector")
        cov = None
        if all(has_cov):
            widths = {len(u.covariates) for u in units}
            if len(widths) != 1:
                raise PopulationError("ragged covariates: vectors differ in length")
            cov = [u.covariates for u in units]
        has_cell = [u.cell is not None for u in units]
        if any(has_cell) and not all(has_cell):
            raise PopulationError("either every unit or no unit carries grid coordinates")
        cells = [u.cell for u in units] if all(has_cell) else None
        return cls(
            [u.id for u in units],
            [u.y for u in units],
            covariates=cov,
            cells=cells,
            covariate_names=covariate_names,
        )

    def is_binary(self) -> bool:
        return bool(np.all((self.y == 0.0) | (self.y == 1.0)))

    def require_binary(self, what: str = "this operation") -> None:
        if not self.is_binary():
            raise PopulationError(f"{what} requires a binary (0/1) study variable")


class SampleMembership:
    """Inclusion indicator R aligned with a population."""

    def __init__(self, flags):
        flags = np.array(flags)
        if flags.ndim != 1:
            raise PopulationError("membership flags must be one-dimensional")
        if flags.dtype != np.bool_:
            if not np.all((flags == 0) | (flags == 1)):
                raise PopulationError("sampled values must be 0 or 1")
            flags = flags.astype(bool)
        self.flags = _frozen(flags)

    @property
    def N(self) -> int:
        return self.flags.shape[0]

    @property
    def n(self) -> int:
        return int(np.count_nonzero(self.flags))

    @property
    def f(self) -> float:
        return self.n / self.N

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.flags)

    @classmethod
    def from_indices(cls, N: int, indices) -> "SampleMembership":
        flags = np.zeros(N, dtype=bool)
        flags[np.asarray(indices, dtype=np.int64)] = True
        return cls(flags)

    @classmethod
    def census(cls, N: int) -> "SampleMembership":
        return cls(np.ones(N, dtype=bool))

    def check_against(self, pop: Population) -> None:
        if self.N != pop.N:
            raise PopulationError(
                f"membership has length {self.N} but population has N={pop.N}"
            )

    def __eq__(self, other) -> bool:
        if not isinstance(other, SampleMembership):
            return NotImplemented
        return np.array_equal(self.flags, other.flags)

    def __repr__(self) -> str:
        return f"SampleMembership(N={self.N}, n={self.n})"


def _exact_mean(values: np.ndarray) -> float:
    if values.min() == values.max():
        # the rounded fsum mean need not equal the constant exactly
        return float(values[0])
    return math.fsum(values) / values.shape[0]


def population_stats(pop: Population) -> tuple[int, float, float]:
    """Return ``(N, mean, sd)`` with the divide-by-N standard deviation."""
    y = pop.y
    mean = _exact_mean(y)
    if y.min() == y.max():
        return pop.N, mean, 0.0
    sd = math.sqrt(math.fsum((y - mean) ** 2) / pop.N)
    return pop.N, mean, sd


def sample_stats(pop: Population, m: SampleMembership) -> tuple[int, float]:
    """Return ``(n, mean)`` over the sampled units."""
    m.check_against(pop)
    n = m.n
    if n == 0:
        raise PopulationError("empty sample")
    return n, _exact_mean(pop.y[m.flags])


# --- CSV I/O ---------------------------------------------------------------


def _open_text(source: PathOrStream):
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8"), True
    return source, False


def _parse_float(value: str, column: str, line: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise PopulationError(
            f"line {line}: non-numeric value {value!r} in column {column!r}"
        ) from None


def load_population(
    source: PathOrStream, schema: Mapping[str, str] | None = None
) -> tuple[Population, SampleMembership | None]:
    """Read a population CSV: ``id,y[,sampled][,row,col][,covariates...]``.

    ``schema`` maps canonical column names (``id``, ``y``, ``sampled``,
    ``row``, ``col``) to the names actually used in the file. Every other
    column is taken as a covariate, in file order.

    Returns the population and, if a ``sampled`` column is present, its
    membership; otherwise ``None``.
    """
    schema = dict(schema or {})
    stream, owned = _open_text(source)
    try:
        reader = csv.reader(stream)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise PopulationError("empty table: no header row") from None
        rows = list(reader)
    finally:
        if owned:
            stream.close()

    canon = {k: schema.get(k, k) for k in RESERVED_COLUMNS}
    if len(set(header)) != len(header):
        raise PopulationError("duplicate column names in header")
    col = {name: header.index(name) for name in header}
    for required in ("id", "y"):
        if canon[required] not in col:
            raise PopulationError(f"missing required column {canon[required]!r}")
    has_sampled = canon["sampled"] in col
    has_row, has_col = canon["row"] in col, canon["col"] in col
    if has_row != has_col:
        raise PopulationError("grid coordinates need both 'row' and 'col' columns")
    reserved = {canon[k] for k in RESERVED_COLUMNS}
    cov_names = [h for h in header if h not in reserved]

    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise PopulationError("empty table: no data rows")

    width = len(header)
    ids, ys, sampled, cells, covs = [], [], [], [], []
    i_id, i_y = col[canon["id"]], col[canon["y"]]
    i_s = col.get(canon["sampled"])
    i_r, i_c = col.get(canon["row"]), col.get(canon["col"])
    i_cov = [col[h] for h in cov_names]
    for lineno, r in enumerate(rows, start=2):
        if len(r) != width:
            raise PopulationError(
                f"line {lineno}: ragged row ({len(r)} fields, header has {width})"
            )
        ids.append(r[i_id].strip())
        ys.append(_parse_float(r[i_y], canon["y"], lineno))
        if has_sampled:
            s = r[i_s].strip()
            if s not in ("0", "1"):
                raise PopulationError(
                    f"line {lineno}: sampled value {s!r} outside {{0,1}}"
                )
            sampled.append(s == "1")
        if has_row:
            try:
                cells.append((int(r[i_r]), int(r[i_c])))
            except ValueError:
                raise PopulationError(
                    f"line {lineno}: grid coordinates must be integers"
                ) from None
        if i_cov:
            covs.append([_parse_float(r[j], header[j], lineno) for j in i_cov])

    pop = Population(
        ids,
        ys,
        covariates=covs if cov_names else None,
        cells=cells if has_row else None,
        covariate_names=cov_names or None,
    )
    membership = SampleMembership(np.array(sampled, dtype=bool)) if has_sampled else None
    return pop, membership


def load_membership(source: PathOrStream, pop: Population) -> SampleMembership:
    """Read an ``id,sampled`` CSV and align it to ``pop`` by id."""
    stream, owned = _open_text(source)
    try:
        reader = csv.DictReader(stream)
        if reader.fieldnames is None or not {"id", "sampled"} <= set(reader.fieldnames):
            raise PopulationError("membership file needs 'id' and 'sampled' columns")
        given = {}
        for lineno, r in enumerate(reader, start=2):
            s = r["sampled"].strip()
            if s not in ("0", "1"):
                raise PopulationError(f"line {lineno}: sampled value {s!r} outside {{0,1}}")
            key = r["id"].strip()
            if key in given:
                raise PopulationError(f"duplicate unit id {key!r} in membership")
            given[key] = s == "1"
    finally:
        if owned:
            stream.close()
    missing = [i for i in pop.ids if i not in given]
    if missing:
        raise PopulationError(f"membership lacks {len(missing)} population ids, e.g. {missing[0]!r}")
    extra = set(given) - set(pop.ids)
    if extra:
        raise PopulationError(f"membership has unknown id {sorted(extra)[0]!r}")
    return SampleMembership(np.array([given[i] for i in pop.ids], dtype=bool))


def _fmt(v: float) -> str:
    return repr(float(v))


def dump_population(
    pop: Population, dest: PathOrStream, membership: SampleMembership | None = None
) -> None:
    """Write ``pop`` (and optionally a membership) in the canonical CSV layout."""
    if membership is not None:
        membership.check_against(pop)
    header = ["id", "y"]
    if membership is not None:
        header.append("sampled")
    if pop.cells is not None:
        header += ["row", "col"]
    header += list(pop.covariate_names)

    if isinstance(dest, (str, os.PathLike)):
        stream = open(dest, "w", newline="", encoding="utf-8")
        owned = True
    else:
        stream, owned = dest, False
    try:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(header)
        flags = membership.flags if membership is not None else None
        for i in range(pop.N):
            row = [pop.ids[i], _fmt(pop.y[i])]
            if flags is not None:
                row.append("1" if flags[i] else "0")
            if pop.cells is not None:
                row += [str(int(pop.cells[i, 0])), str(int(pop.cells[i, 1]))]
            if pop.covariates is not None:
                row += [_fmt(v) for v in pop.covariates[i]]
            w.writerow(row)
    finally:
        if owned:
            stream.close()


def population_to_csv(pop: Population, membership: SampleMembership | None = None) -> str:
    buf = io.StringIO()
    dump_population(pop, buf, membership)
    return buf.getvalue()


def file_digest(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(Path(path), "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
