"""Sparse observed QoS tensor: CSV ingestion, splitting, synthetic instances.

Observations are (user, service, time-slot, value) quadruples stored as
parallel index/value arrays plus per-mode slice lists, which is the layout
every per-row update sum iterates over. Values are nonnegative by contract;
only a small fraction of the full |I|x|J|x|K| grid is expected to be
observed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from . import kernels
from .errors import DataError
from .model import FactorModel


class Observation(NamedTuple):
    i: int
    j: int
    k: int
    y: float


def _slice_lists(idx: np.ndarray, size: int) -> list[np.ndarray]:
    """Positions of the entries touching each index of one mode, in entry order."""
    order = np.argsort(idx, kind="stable")
    counts = np.bincount(idx, minlength=size)
    bounds = np.concatenate(([0], np.cumsum(counts)))
    sorted_pos = np.arange(idx.shape[0], dtype=np.int64)[order]
    return [sorted_pos[bounds[m]:bounds[m + 1]] for m in range(size)]


class ObservedTensor:
    """Sparse nonnegative 3-way tensor of observed QoS values.

    Immutable after construction: the underlying arrays are marked
    read-only, so instances can be shared freely across workers.
    """

    def __init__(self, dims, i_idx, j_idx, k_idx, values, *, _validated=False):
        dims = tuple(int(d) for d in dims)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise DataError(f"dims must be three positive integers, got {dims}")
        self.dims = dims
        self.i_idx = np.ascontiguousarray(i_idx, dtype=np.int64)
        self.j_idx = np.ascontiguousarray(j_idx, dtype=np.int64)
        self.k_idx = np.ascontiguousarray(k_idx, dtype=np.int64)
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        n = self.values.shape[0]
        if not (self.i_idx.shape[0] == self.j_idx.shape[0] == self.k_idx.shape[0] == n):
            raise DataError("index and value arrays must have equal length")
        if not _validated:
            self._validate()
        for arr in (self.i_idx, self.j_idx, self.k_idx, self.values):
            arr.flags.writeable = False
        self.rows_by_user = _slice_lists(self.i_idx, dims[0])
        self.rows_by_service = _slice_lists(self.j_idx, dims[1])
        self.rows_by_time = _slice_lists(self.k_idx, dims[2])
        self.counts_by_user = np.bincount(self.i_idx, minlength=dims[0])
        self.counts_by_service = np.bincount(self.j_idx, minlength=dims[1])
        self.counts_by_time = np.bincount(self.k_idx, minlength=dims[2])

    def _validate(self):
        for name, idx, size in (
            ("user", self.i_idx, self.dims[0]),
            ("service", self.j_idx, self.dims[1]),
            ("time", self.k_idx, self.dims[2]),
        ):
            if idx.size and (idx.min() < 0 or idx.max() >= size):
                raise DataError(f"{name} index out of range for dims {self.dims}")
        if not np.isfinite(self.values).all():
            raise DataError("observed values must be finite")
        if self.values.size and self.values.min() < 0:
            pos = int(np.argmin(self.values))
            raise DataError(
                f"negative value {self.values[pos]} at entry "
                f"({self.i_idx[pos]}, {self.j_idx[pos]}, {self.k_idx[pos]}): "
                "QoS observations are nonnegative"
            )
        lin = (self.i_idx * self.dims[1] + self.j_idx) * self.dims[2] + self.k_idx
        uniq, first = np.unique(lin, return_index=True)
        if uniq.size != lin.size:
            dup_mask = np.ones(lin.size, dtype=bool)
            dup_mask[first] = False
            pos = int(np.nonzero(dup_mask)[0][0])
            raise DataError(
                f"duplicate observation at "
                f"({self.i_idx[pos]}, {self.j_idx[pos]}, {self.k_idx[pos]})"
            )

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def n_observed(self) -> int:
        return self.values.shape[0]

    def entry(self, pos: int) -> Observation:
        return Observation(
            int(self.i_idx[pos]), int(self.j_idx[pos]),
            int(self.k_idx[pos]), float(self.values[pos]),
        )

    def entries(self) -> Iterator[Observation]:
        for pos in range(len(self)):
            yield self.entry(pos)

    @classmethod
    def from_entries(cls, entries, dims=None) -> "ObservedTensor":
        """Build from (i, j, k, y) tuples; dims inferred as max index + 1 if omitted."""
        entries = list(entries)
        if not entries and dims is None:
            raise DataError("cannot infer dims from an empty observation set")
        ii = np.array([e[0] for e in entries], dtype=np.int64)
        jj = np.array([e[1] for e in entries], dtype=np.int64)
        kk = np.array([e[2] for e in entries], dtype=np.int64)
        yy = np.array([e[3] for e in entries], dtype=np.float64)
        if dims is None:
            dims = (int(ii.max()) + 1, int(jj.max()) + 1, int(kk.max()) + 1)
        return cls(dims, ii, jj, kk, yy)

    def subset(self, positions: np.ndarray) -> "ObservedTensor":
        """New tensor with the same dims holding the entries at `positions`."""
        positions = np.asarray(positions, dtype=np.int64)
        return ObservedTensor(
            self.dims,
            self.i_idx[positions], self.j_idx[positions],
            self.k_idx[positions], self.values[positions],
            _validated=True,
        )

    def save_csv(self, path) -> None:
        """Write `i,j,k,y` lines at full precision (round-trips bit-exactly)."""
        with open(path, "w", encoding="utf-8") as fh:
            for pos in range(len(self)):
                fh.write(
                    f"{self.i_idx[pos]},{self.j_idx[pos]},"
                    f"{self.k_idx[pos]},{float(self.values[pos])!r}\n"
                )


@dataclass
class DataSplit:
    """Disjoint train/validation/test partition of one observation set."""

    train: ObservedTensor
    validation: ObservedTensor
    test: ObservedTensor
    seed: int
    ratios: tuple[float, float, float]

    @property
    def dims(self):
        return self.train.dims


def load_observations(path, dims=None) -> ObservedTensor:
    """Read a CSV observation file: one `i,j,k,y` record per line.

    Blank lines and lines starting with `#` are skipped. Indices are
    0-based integers; `y` must be a finite nonnegative real. If `dims`
    is omitted it is inferred as max index + 1 per mode. Malformed
    records, negative values, out-of-range indices, and duplicate
    (i, j, k) triples raise DataError (with the line number where the
    record itself is at fault).
    """
    ii, jj, kk, yy = [], [], [], []
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = [f.strip() for f in line.split(",")]
            if len(fields) != 4:
                raise DataError(
                    f"{path}:{lineno}: expected 4 fields `i,j,k,y`, got {len(fields)}"
                )
            try:
                i, j, k = int(fields[0]), int(fields[1]), int(fields[2])
                y = float(fields[3])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: malformed record: {exc}") from exc
            if i < 0 or j < 0 or k < 0:
                raise DataError(f"{path}:{lineno}: negative index")
            if not np.isfinite(y):
                raise DataError(f"{path}:{lineno}: non-finite value {fields[3]}")
            if y < 0:
                raise DataError(
                    f"{path}:{lineno}: negative value {y}: QoS observations are nonnegative"
                )
            ii.append(i)
            jj.append(j)
            kk.append(k)
            yy.append(y)
    if not ii and dims is None:
        raise DataError(f"{path}: no observations and no explicit dims")
    if dims is None:
        dims = (max(ii) + 1, max(jj) + 1, max(kk) + 1)
    return ObservedTensor(
        dims,
        np.array(ii, dtype=np.int64), np.array(jj, dtype=np.int64),
        np.array(kk, dtype=np.int64), np.array(yy, dtype=np.float64),
    )


def split(source: ObservedTensor, ratios: Sequence[float], seed: int) -> DataSplit:
    """Seeded random partition into train/validation/test.

    Sizes are floor(ratio * n) with the remainder assigned to the training
    set. Identical (source, ratios, seed) produce identical partitions.
    """
    r = [float(x) for x in ratios]
    if len(r) != 3 or any(x < 0 or not np.isfinite(x) for x in r):
        raise ValueError(f"ratios must be three nonnegative reals, got {ratios}")
    if abs(sum(r) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1 within 1e-9, got sum {sum(r)!r}")
    n = len(source)
    if all(x > 0 for x in r) and n < 3:
        raise DataError(f"need at least 3 observations to split three ways, got {n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_val = int(np.floor(r[1] * n))
    n_test = int(np.floor(r[2] * n))
    n_train = n - n_val - n_test  # floor(r0*n) plus the rounding remainder
    return DataSplit(
        train=source.subset(perm[:n_train]),
        validation=source.subset(perm[n_train:n_train + n_val]),
        test=source.subset(perm[n_train + n_val:]),
        seed=int(seed),
        ratios=(r[0], r[1], r[2]),
    )


def write_split_files(data: DataSplit, prefix) -> dict:
    """Write <prefix>.{train,validation,test}.csv plus a JSON manifest sidecar."""
    prefix = str(prefix)
    parts = {"train": data.train, "validation": data.validation, "test": data.test}
    for name, tensor in parts.items():
        tensor.save_csv(f"{prefix}.{name}.csv")
    manifest = {
        "seed": data.seed,
        "ratios": list(data.ratios),
        "dims": list(data.dims),
        "counts": {name: len(tensor) for name, tensor in parts.items()},
    }
    with open(f"{prefix}.manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest


def _sample_triples(rng: np.random.Generator, total: int, count: int) -> np.ndarray:
    """`count` distinct linear indices in [0, total), uniform without replacement."""
    if 3 * count >= total:
        return rng.permutation(total)[:count]
    # sparse regime: sequential rejection keeps memory at O(count)
    seen = set()
    out = np.empty(count, dtype=np.int64)
    filled = 0
    while filled < count:
        for cand in rng.integers(0, total, size=2 * (count - filled)):
            if cand not in seen:
                seen.add(cand)
                out[filled] = cand
                filled += 1
                if filled == count:
                    break
    return out


def generate_synthetic(dims, rank, density, noise_sigma, seed):
    """Planted-factor instance for verification: returns (tensor, truth model).

    Ground-truth factors are uniform on (0, 1) and biases uniform on
    (0, 0.1); index triples are sampled without replacement at the given
    density, and each observation is the true reconstruction plus optional
    Gaussian noise, clamped at zero. With noise_sigma = 0 every observed
    value equals the planted model's prediction exactly, which makes the
    generator its own recovery oracle.
    """
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise ValueError(f"dims must be three positive integers, got {dims}")
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    if not (0 < density <= 1):
        raise ValueError(f"density must be in (0, 1], got {density}")
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be nonnegative, got {noise_sigma}")
    n_i, n_j, n_k = dims
    total = n_i * n_j * n_k
    count = int(round(density * total))
    if count < 1:
        raise ValueError(f"density {density} yields no observations on dims {dims}")
    rng = np.random.default_rng(seed)
    truth = FactorModel(
        U=rng.uniform(0.0, 1.0, (n_i, rank)),
        S=rng.uniform(0.0, 1.0, (n_j, rank)),
        T=rng.uniform(0.0, 1.0, (n_k, rank)),
        a=rng.uniform(0.0, 0.1, n_i),
        b=rng.uniform(0.0, 0.1, n_j),
        c=rng.uniform(0.0, 0.1, n_k),
    )
    lin = np.sort(_sample_triples(rng, total, count))
    ii = lin // (n_j * n_k)
    rem = lin % (n_j * n_k)
    jj = rem // n_k
    kk = rem % n_k
    yhat = kernels.predict_entries(
        truth.U, truth.S, truth.T, truth.a, truth.b, truth.c, ii, jj, kk
    )
    if noise_sigma > 0:
        yy = np.maximum(yhat + rng.normal(0.0, noise_sigma, count), 0.0)
    else:
        yy = yhat
    tensor = ObservedTensor(dims, ii, jj, kk, yy, _validated=True)
    return tensor, truth
