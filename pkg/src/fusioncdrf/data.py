"""Observed samples, fusion-set configuration, splitting and auxiliary draws."""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DataError, SourceSetError

if TYPE_CHECKING:
    from .reference import ReferenceMeasure

FUSED = "fused"
NONFUSED = "nonfused"
MODES = (FUSED, NONFUSED)


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


def derive_seed(master: int, *names: object) -> int:
    """Child seed from a master seed and a path of stage names.

    Stable across processes and Python versions (no use of ``hash``).
    """
    key = ":".join([str(int(master))] + [str(n) for n in names])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class SampleRecord(NamedTuple):
    x: np.ndarray
    a: np.ndarray
    y: float
    s: int


@dataclass(frozen=True)
class FusionConfig:
    """Source labels aligned with the target covariate law (``sources_x``) and
    with the target outcome law (``sources_y``)."""

    sources_x: frozenset[int]
    sources_y: frozenset[int]

    def __init__(self, sources_x: Iterable[int], sources_y: Iterable[int]):
        sx = frozenset(int(s) for s in sources_x)
        sy = frozenset(int(s) for s in sources_y)
        if not sx or not sy:
            raise DataError("fusion source sets must be nonempty")
        object.__setattr__(self, "sources_x", sx)
        object.__setattr__(self, "sources_y", sy)

    @property
    def intersection(self) -> frozenset[int]:
        return self.sources_x & self.sources_y

    def require_mode(self, mode: str) -> None:
        check_mode(mode)
        if mode == NONFUSED and not self.intersection:
            raise SourceSetError("empty source set: nonfused mode needs sources in both sets")

    def members_x(self, s: np.ndarray, mode: str = FUSED) -> np.ndarray:
        """Boolean mask of records whose source counts as covariate-aligned."""
        labels = self.sources_x if mode == FUSED else self.intersection
        return np.isin(s, sorted(labels))

    def members_y(self, s: np.ndarray, mode: str = FUSED) -> np.ndarray:
        labels = self.sources_y if mode == FUSED else self.intersection
        return np.isin(s, sorted(labels))

    def to_dict(self) -> dict:
        return {"sources_x": sorted(self.sources_x), "sources_y": sorted(self.sources_y)}


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-major container of observations ``(x, a, y, s)``.

    ``index`` holds the position of each record in the originating dataset so
    that split hygiene can be audited after any number of subsetting steps.
    """

    x: np.ndarray
    a: np.ndarray
    y: np.ndarray
    s: np.ndarray
    index: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        a = np.asarray(self.a, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if a.ndim == 1:
            a = a[:, None]
        y = np.asarray(self.y, dtype=float).reshape(-1)
        s = np.asarray(self.s).reshape(-1)
        if s.size and not np.all(np.equal(np.mod(s, 1), 0)):
            raise DataError("source labels must be integers")
        s = s.astype(np.int64)
        n = y.shape[0]
        if n == 0:
            raise DataError("empty dataset")
        if not (x.shape[0] == a.shape[0] == s.shape[0] == n):
            raise DataError("columns have inconsistent lengths")
        if np.any(s < 0):
            raise DataError("source labels must be nonnegative")
        if np.any((a < 0.0) | (a > 1.0)) or not np.all(np.isfinite(a)):
            row = int(np.nonzero(np.any((a < 0.0) | (a > 1.0) | ~np.isfinite(a), axis=1))[0][0])
            raise DataError(f"exposure out of range at row {row + 1}")
        index = np.arange(n) if self.index is None else np.asarray(self.index, dtype=np.int64)
        for arr in (x, a, y, s, index):
            arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def n(self) -> int:
        return len(self)

    @property
    def covariate_dim(self) -> int:
        return self.x.shape[1]

    @property
    def exposure_dim(self) -> int:
        return self.a.shape[1]

    @property
    def sources(self) -> frozenset[int]:
        return frozenset(int(v) for v in np.unique(self.s))

    def record(self, i: int) -> SampleRecord:
        return SampleRecord(self.x[i], self.a[i], float(self.y[i]), int(self.s[i]))

    def subset(self, mask_or_idx) -> Dataset:
        idx = np.asarray(mask_or_idx)
        if idx.dtype == bool:
            idx = np.nonzero(idx)[0]
        if idx.size == 0:
            raise DataError("empty dataset")
        return Dataset(self.x[idx], self.a[idx], self.y[idx], self.s[idx], self.index[idx])

    def restrict_sources(self, labels: Iterable[int]) -> Dataset:
        mask = np.isin(self.s, sorted(set(labels)))
        if not mask.any():
            raise SourceSetError("empty source set")
        return self.subset(mask)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for arr in (self.x, self.a, self.y, self.s):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class ExtendedData:
    """A dataset paired row-by-row with auxiliary exposures ``b`` drawn from the
    reference measure."""

    data: Dataset
    b: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        if b.ndim == 1:
            b = b[:, None]
        if b.shape != self.data.a.shape:
            raise DataError("auxiliary draws must match exposure shape")
        if np.any((b < 0.0) | (b > 1.0)):
            raise DataError("auxiliary exposure outside [0, 1]")
        b.setflags(write=False)
        object.__setattr__(self, "b", b)

    def __len__(self) -> int:
        return len(self.data)

    # convenience passthroughs
    @property
    def x(self) -> np.ndarray:
        return self.data.x

    @property
    def a(self) -> np.ndarray:
        return self.data.a

    @property
    def y(self) -> np.ndarray:
        return self.data.y

    @property
    def s(self) -> np.ndarray:
        return self.data.s

    def subset(self, idx) -> ExtendedData:
        idx = np.asarray(idx)
        if idx.dtype == bool:
            idx = np.nonzero(idx)[0]
        return ExtendedData(self.data.subset(idx), self.b[idx])


class SplitPair(NamedTuple):
    part1: Dataset
    part2: Dataset


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def split_sample(data: Dataset, fraction: float = 0.5, seed: int = 0) -> SplitPair:
    """Randomly partition ``data`` into a nuisance fold and a target fold.

    The first part receives ``round_half_up(fraction * n)`` records; both parts
    keep the original record order.
    """
    n = len(data)
    if n < 2:
        raise DataError("need at least 2 records to split")
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    k = min(max(round_half_up(fraction * n), 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    first = np.sort(perm[:k])
    second = np.sort(perm[k:])
    return SplitPair(data.subset(first), data.subset(second))


def extend_with_mu_draws(data: Dataset, mu: ReferenceMeasure, seed: int) -> ExtendedData:
    b = mu.sample(len(data), seed)
    return ExtendedData(data, b.reshape(len(data), -1))


def _column_layout(header: list[str]) -> tuple[list[int], list[int], int, int]:
    names = [h.strip() for h in header]
    for required in ("y", "s"):
        if required not in names:
            raise DataError(f"missing column {required!r}")
    x_cols = sorted(
        (i for i, h in enumerate(names) if h.startswith("x") and h[1:].isdigit()),
        key=lambda i: int(names[i][1:]),
    )
    if "a" in names:
        a_cols = [names.index("a")]
    else:
        a_cols = sorted(
            (i for i, h in enumerate(names) if h.startswith("a") and h[1:].isdigit()),
            key=lambda i: int(names[i][1:]),
        )
    if not x_cols:
        raise DataError("missing covariate columns x1..xr")
    if not a_cols:
        raise DataError("missing exposure column a")
    for prefix, cols in (("x", x_cols), ("a", a_cols)):
        if len(cols) > 1 or prefix == "x":
            expected = [f"{prefix}{j}" for j in range(1, len(cols) + 1)]
            if [names[i] for i in cols] != expected:
                raise DataError(f"missing column: expected {','.join(expected)}")
    return x_cols, a_cols, names.index("y"), names.index("s")


def load_dataset(path: str | Path) -> Dataset:
    """Read a dataset CSV with header ``x1,...,xr,a,y,s``.

    Lines starting with ``#`` are ignored. Errors name the 1-based data row and
    the column.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#") and line.strip())
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty dataset") from None
        x_cols, a_cols, y_col, s_col = _column_layout(header)
        names = [h.strip() for h in header]
        rows = []
        for k, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise DataError(f"row {k}: expected {len(header)} cells, got {len(row)}")
            vals = []
            for j, cell in enumerate(row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(f"non-numeric cell at row {k}, column {names[j]!r}") from None
            a_vals = [vals[j] for j in a_cols]
            if any(not 0.0 <= v <= 1.0 for v in a_vals):
                raise DataError(f"exposure out of range at row {k}")
            s_val = vals[s_col]
            if s_val != int(s_val) or s_val < 0:
                raise DataError(f"invalid source label at row {k}, column 's'")
            rows.append(vals)
    if not rows:
        raise DataError("empty dataset")
    arr = np.asarray(rows, dtype=float)
    return Dataset(arr[:, x_cols], arr[:, a_cols], arr[:, y_col], arr[:, s_col].astype(np.int64))


def dataset_header(r: int, d: int = 1) -> list[str]:
    a_names = ["a"] if d == 1 else [f"a{j}" for j in range(1, d + 1)]
    return [f"x{j}" for j in range(1, r + 1)] + a_names + ["y", "s"]


def save_dataset(data: Dataset, path: str | Path, comments: Sequence[str] = ()) -> None:
    """Write ``data`` as CSV; floats use ``repr`` so files round-trip exactly.

    Each entry of ``comments`` becomes a leading ``# ...`` line, which
    ``load_dataset`` skips.
    """
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(dataset_header(data.covariate_dim, data.exposure_dim))
        for i in range(len(data)):
            writer.writerow(
                [repr(float(v)) for v in data.x[i]]
                + [repr(float(v)) for v in data.a[i]]
                + [repr(float(data.y[i])), str(int(data.s[i]))]
            )
