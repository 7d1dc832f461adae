"""Loading, preprocessing, scaling and synthesizing the sample sets used for training.

A :class:`Dataset` is a frozen ``(n, d)`` float matrix with per-column names
and kinds. Loaders reject malformed input instead of coercing it.
"""
import csv
import struct
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np

CONTINUOUS = "continuous"
DISCRETE = "discrete"


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Column:
    name: str
    kind: str = CONTINUOUS

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, DISCRETE):
            raise DatasetError(f"column {self.name!r}: kind must be continuous or discrete")


@dataclass(frozen=True)
class NormState:
    """Per-column ``min``/``max`` of the data a scaler was fitted on."""

    mins: np.ndarray
    maxs: np.ndarray
    method: str = "minmax"

    def __post_init__(self):
        mins = np.asarray(self.mins, dtype=np.float64)
        maxs = np.asarray(self.maxs, dtype=np.float64)
        if mins.shape != maxs.shape or np.any(maxs < mins):
            raise DatasetError("NormState needs max >= min in every column")
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)


@dataclass(frozen=True)
class Dataset:
    data: np.ndarray
    labels: Optional[np.ndarray] = None
    schema: Tuple[Column, ...] = ()
    original_shape: Tuple[int, ...] = ()
    norm_state: Optional[NormState] = None

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1:
            raise DatasetError(f"dataset needs at least one row of a 2-D matrix, got shape {data.shape}")
        schema = tuple(self.schema) or tuple(Column(f"x{j}") for j in range(data.shape[1]))
        if len(schema) != data.shape[1]:
            raise DatasetError(f"schema names {len(schema)} columns but data has {data.shape[1]}")
        cont = [j for j, c in enumerate(schema) if c.kind == CONTINUOUS]
        if not np.isfinite(data[:, cont]).all():
            raise DatasetError("continuous columns contain non-finite values")
        labels = self.labels
        if labels is not None:
            labels = np.array(labels, dtype=np.int64)
            if labels.shape != (data.shape[0],):
                raise DatasetError("labels must have one entry per row")
            labels.setflags(write=False)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "schema", schema)
        object.__setattr__(self, "original_shape", tuple(self.original_shape) or data.shape)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape

    @property
    def column_names(self) -> Tuple[str, ...]:
        return tuple(c.name for c in self.schema)

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels is not None else 0

    def continuous(self) -> "Dataset":
        """Keep only the continuous columns (the ones a GAN here trains on)."""
        keep = [j for j, c in enumerate(self.schema) if c.kind == CONTINUOUS]
        if len(keep) == len(self.schema):
            return self
        if not keep:
            raise DatasetError("dataset has no continuous columns")
        return replace(self, data=self.data[:, keep], schema=tuple(self.schema[j] for j in keep),
                       original_shape=(self.data.shape[0], len(keep)), norm_state=None)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return replace(self, data=self.data[rows],
                       labels=None if self.labels is None else self.labels[rows],
                       original_shape=(len(rows),) + tuple(self.original_shape[1:]))


def _is_number(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def load_tabular(path, schema: Optional[Sequence[Column]] = None, delimiter: str = ",",
                 header: Optional[bool] = None, label_column: Optional[str] = None) -> Dataset:
    """Read a delimited text file into a :class:`Dataset`.

    ``header=None`` treats the first row as a header when it repeats the
    schema's column names, or (without a schema) when any field is non-numeric. Continuous columns must parse as floats; discrete columns
    may hold any token and are integer-coded in order of first appearance.
    ``label_column`` names a column to pull out as per-row class labels
    (integer-coded the same way). Errors name the 1-based file line and the
    column.
    """
    with open(path, newline="") as fh:
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh, delimiter=delimiter))
                if r and any(t.strip() for t in r)]
    if not rows:
        raise DatasetError(f"{path}: file is empty")
    first = [t.strip() for t in rows[0][1]]
    if header is None:
        if schema is not None:
            header = first == [c.name for c in schema]
        else:
            header = not all(_is_number(t) for t in first)
    names = first if header else None
    if header:
        rows = rows[1:]
    if not rows:
        raise DatasetError(f"{path}: file has a header but no data rows")
    width = len(rows[0][1])
    if schema is None:
        names = names or [f"x{j}" for j in range(width)]
        schema = [Column(n) for n in names]
    schema = list(schema)
    if names is not None and len(names) != len(schema):
        raise DatasetError(f"{path}: header has {len(names)} columns, schema has {len(schema)}")
    if len(schema) != width:
        raise DatasetError(f"{path}: rows have {width} columns, schema has {len(schema)}")

    n = len(rows)
    out = np.empty((n, width))
    codes = [dict() for _ in range(width)]
    for r, (lineno, row) in enumerate(rows):
        if len(row) != width:
            raise DatasetError(f"{path}: line {lineno} has {len(row)} fields, expected {width}")
        for j, token in enumerate(row):
            token = token.strip()
            col = schema[j]
            if col.kind == DISCRETE or col.name == label_column:
                out[r, j] = codes[j].setdefault(token, len(codes[j]))
                continue
            try:
                value = float(token)
            except ValueError:
                raise DatasetError(f"{path}: line {lineno}, column {j + 1} ({col.name!r}): "
                                   f"cannot parse {token!r} as a number") from None
            if not np.isfinite(value):
                raise DatasetError(f"{path}: line {lineno}, column {j + 1} ({col.name!r}): "
                                   "non-finite value")
            out[r, j] = value

    labels = None
    if label_column is not None:
        try:
            j = [c.name for c in schema].index(label_column)
        except ValueError:
            raise DatasetError(f"{path}: label column {label_column!r} not found") from None
        labels = out[:, j].astype(np.int64)
        tokens = list(codes[j])
        if all(t.lstrip("-").isdigit() for t in tokens):
            # integer labels keep their own values instead of first-seen order
            labels = np.array([int(t) for t in tokens], dtype=np.int64)[labels]
            if labels.min() < 0:
                raise DatasetError(f"{path}: label column {label_column!r} has negative labels")
        out = np.delete(out, j, axis=1)
        del schema[j]
    return Dataset(out, labels, tuple(schema))


def write_tabular(path, dataset: Dataset, delimiter: str = ",", header: bool = True):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        if header:
            w.writerow(dataset.column_names)
        for row in dataset.data:
            w.writerow([repr(float(v)) for v in row])


_KDD99_NAMES = (
    "duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes", "land",
    "wrong_fragment", "urgent", "hot", "num_failed_logins", "logged_in", "num_compromised",
    "root_shell", "su_attempted", "num_root", "num_file_creations", "num_shells",
    "num_access_files", "num_outbound_cmds", "is_host_login", "is_guest_login", "count",
    "srv_count", "serror_rate", "srv_serror_rate", "rerror_rate", "srv_rerror_rate",
    "same_srv_rate", "diff_srv_rate", "srv_diff_host_rate", "dst_host_count",
    "dst_host_srv_count", "dst_host_same_srv_rate", "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate", "dst_host_srv_diff_host_rate", "dst_host_serror_rate",
    "dst_host_srv_serror_rate", "dst_host_rerror_rate", "dst_host_srv_rerror_rate",
)
_KDD99_DISCRETE = {"protocol_type", "service", "flag", "land", "logged_in",
                   "is_host_login", "is_guest_login"}
KDD99_SCHEMA = tuple(Column(n, DISCRETE if n in _KDD99_DISCRETE else CONTINUOUS)
                     for n in _KDD99_NAMES)
KDD99_FEATURES = 18
KDD99_PLOT_COLUMN = "count"


def load_kdd99(path, with_label: Optional[bool] = None) -> Dataset:
    """Read a headerless KDD Cup 99 file (41 features, optionally a trailing label field)."""
    with open(path, newline="") as fh:
        first = next((r for r in csv.reader(fh) if r), None)
    if first is None:
        raise DatasetError(f"{path}: file is empty")
    if with_label is None:
        with_label = len(first) == len(KDD99_SCHEMA) + 1
    schema = list(KDD99_SCHEMA) + ([Column("label", DISCRETE)] if with_label else [])
    ds = load_tabular(path, schema, header=False, label_column="label" if with_label else None)
    return ds


def preprocess_kdd99(raw: Dataset, n_features: int = KDD99_FEATURES) -> Dataset:
    """Keep the first ``n_features`` continuous columns that are not identically zero.

    Columns are taken in schema order; the chosen names are in the output
    schema. Raises when fewer than ``n_features`` columns qualify.
    """
    names = raw.column_names
    if names[:len(KDD99_SCHEMA)] != tuple(c.name for c in KDD99_SCHEMA):
        raise DatasetError("input does not have the KDD99 column schema")
    candidates = [j for j, c in enumerate(raw.schema)
                  if c.kind == CONTINUOUS and np.any(raw.data[:, j] != 0)]
    if len(candidates) < n_features:
        listed = ", ".join(names[j] for j in candidates)
        raise DatasetError(f"only {len(candidates)} continuous non-zero KDD99 columns "
                           f"(need {n_features}): {listed}")
    keep = candidates[:n_features]
    return Dataset(raw.data[:, keep], raw.labels, tuple(raw.schema[j] for j in keep),
                   (raw.data.shape[0], n_features, 1))


def flatten(data, original_shape: Optional[Tuple[int, ...]] = None) -> Dataset:
    """Row-major flattening of an ``(n, a, b, ...)`` array into ``(n, a*b*...)``.

    Accepts a raw array or a :class:`Dataset`; the pre-flatten extents are
    kept in ``original_shape``.
    """
    if isinstance(data, Dataset):
        return data
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim < 2:
        raise DatasetError("flatten needs at least two axes")
    return Dataset(arr.reshape(arr.shape[0], -1), original_shape=original_shape or arr.shape)


def unflatten(dataset: Dataset) -> np.ndarray:
    return dataset.data.reshape(dataset.original_shape)


def decimate(dataset: Dataset, k: int) -> Dataset:
    """Keep every ``k``-th column (``k = 1`` is the identity)."""
    if k < 1:
        raise DatasetError("decimation factor must be positive")
    if k == 1:
        return dataset
    keep = np.arange(0, dataset.data.shape[1], k)
    return replace(dataset, data=dataset.data[:, keep], schema=tuple(dataset.schema[j] for j in keep),
                   norm_state=None)


def fit_minmax(data) -> NormState:
    data = np.asarray(data, dtype=np.float64)
    return NormState(data.min(axis=0), data.max(axis=0))


def apply_minmax(data, state: NormState) -> np.ndarray:
    data = np.asarray(data, dtype=np.float64)
    span = state.maxs - state.mins
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, 2.0 * (data - state.mins) / safe - 1.0, 0.0)


def invert_minmax(data, state: NormState) -> np.ndarray:
    data = np.asarray(data, dtype=np.float64)
    span = state.maxs - state.mins
    return np.where(span > 0, (data + 1.0) * 0.5 * span + state.mins, state.mins)


def normalize(dataset: Dataset, state: Optional[NormState] = None) -> Tuple[Dataset, NormState]:
    """Scale continuous columns to ``[-1, 1]`` by ``2 (x - min)/(max - min) - 1``.

    Constant columns map to 0. Pass ``state`` to reuse a scaler fitted
    elsewhere (e.g. on a training split).
    """
    if any(c.kind != CONTINUOUS for c in dataset.schema):
        raise DatasetError("normalize needs continuous columns only; call .continuous() first")
    state = state or fit_minmax(dataset.data)
    return replace(dataset, data=apply_minmax(dataset.data, state), norm_state=state), state


def denormalize(dataset, state: Optional[NormState] = None):
    """Inverse of :func:`normalize`; accepts a Dataset or a plain matrix."""
    if isinstance(dataset, Dataset):
        state = state or dataset.norm_state
        if state is None:
            raise DatasetError("no NormState to invert")
        return replace(dataset, data=invert_minmax(dataset.data, state), norm_state=None)
    if state is None:
        raise DatasetError("no NormState to invert")
    return invert_minmax(dataset, state)


@dataclass(frozen=True)
class MixtureSpec:
    """Gaussian mixture with diagonal (vector) or full (matrix) covariances."""

    means: Sequence
    covs: Sequence
    weights: Sequence

    def validate(self) -> Tuple[np.ndarray, list, np.ndarray]:
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        if means.shape[0] == 1 and len(self.means) > 1 and np.ndim(self.means[0]) == 0:
            means = means.T
        k, d = means.shape
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (k,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise DatasetError("mixture weights must be non-negative, one per component, and sum to 1")
        if len(self.covs) != k:
            raise DatasetError("need one covariance per component")
        covs = []
        for i, c in enumerate(self.covs):
            c = np.asarray(c, dtype=np.float64)
            if c.ndim <= 1:
                c = np.diag(np.broadcast_to(c, (d,)).astype(np.float64))
            if c.shape != (d, d) or not np.allclose(c, c.T):
                raise DatasetError(f"component {i}: covariance must be a symmetric {d}x{d} matrix")
            try:
                np.linalg.cholesky(c)
            except np.linalg.LinAlgError:
                raise DatasetError(f"component {i}: covariance is not positive-definite") from None
            covs.append(c)
        return means, covs, w


def synth_gaussian_mixture(spec: MixtureSpec, n: int, seed: int = 0, labeled: bool = False) -> Dataset:
    """``n`` i.i.d. draws; labels are the component index when ``labeled``."""
    means, covs, w = spec.validate()
    if n < 1:
        raise DatasetError("n must be positive")
    rng = np.random.default_rng(seed)
    comp = rng.choice(len(w), size=n, p=w)
    z = rng.standard_normal((n, means.shape[1]))
    x = np.empty_like(z)
    for i, c in enumerate(covs):
        rows = comp == i
        x[rows] = means[i] + z[rows] @ np.linalg.cholesky(c).T
    return Dataset(x, comp if labeled else None)


def synth_kdd99_like(n: int, seed: int = 0) -> Dataset:
    """Raw rows with the KDD99 schema and plausible ranges, for tests and demos.

    ``num_outbound_cmds`` is all zeros, as in the real data.
    """
    rng = np.random.default_rng(seed)
    cols = []
    for c in KDD99_SCHEMA:
        if c.kind == DISCRETE:
            cols.append(rng.integers(0, 3 if c.name != "service" else 60, n).astype(np.float64))
        elif c.name == "num_outbound_cmds":
            cols.append(np.zeros(n))
        elif c.name.endswith("_rate"):
            cols.append(np.round(rng.beta(0.5, 2.0, n), 2))
        elif c.name in ("count", "srv_count", "dst_host_count", "dst_host_srv_count"):
            cols.append(np.minimum(rng.poisson(rng.choice([5.0, 120.0], n)), 511).astype(np.float64))
        elif c.name in ("src_bytes", "dst_bytes"):
            cols.append(np.floor(rng.lognormal(5.0, 2.0, n)))
        else:
            cols.append(rng.poisson(0.3, n).astype(np.float64))
    return Dataset(np.column_stack(cols), schema=KDD99_SCHEMA)


def train_test_split(dataset: Dataset, train_fraction: float = 1.0, seed: int = 0
                     ) -> Tuple[Dataset, Optional[Dataset]]:
    """Seeded shuffle-split; ``train_fraction = 1`` returns the data unshuffled and no test part."""
    if not 0.0 < train_fraction <= 1.0:
        raise DatasetError("train_fraction must lie in (0, 1]")
    if train_fraction == 1.0:
        return dataset, None
    n = dataset.data.shape[0]
    perm = np.random.default_rng(seed).permutation(n)
    cut = max(1, int(round(train_fraction * n)))
    if cut >= n:
        return dataset.subset(perm), None
    return dataset.subset(perm[:cut]), dataset.subset(perm[cut:])


# Tensor container layout (little-endian):
#   8 bytes  magic b"GBTENSOR"
#   u32      version
#   u32      number of axes k
#   k * u64  extents
#   f64 * prod(extents)  values in row-major order
TENSOR_MAGIC = b"GBTENSOR"
TENSOR_VERSION = 1


def write_tensor(path, array):
    arr = np.ascontiguousarray(array, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<II", TENSOR_VERSION, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.tobytes())


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != TENSOR_MAGIC:
        raise DatasetError(f"{path}: not a tensor container (bad magic)")
    if len(blob) < 16:
        raise DatasetError(f"{path}: truncated header")
    version, k = struct.unpack_from("<II", blob, 8)
    if version != TENSOR_VERSION:
        raise DatasetError(f"{path}: unsupported tensor container version {version}")
    end = 16 + 8 * k
    if len(blob) < end:
        raise DatasetError(f"{path}: truncated header")
    shape = struct.unpack_from(f"<{k}Q", blob, 16)
    count = int(np.prod(shape, dtype=np.int64))
    if len(blob) - end != 8 * count:
        raise DatasetError(f"{path}: payload has {len(blob) - end} bytes, expected {8 * count}")
    return np.frombuffer(blob, dtype="<f8", offset=end).reshape(shape).astype(np.float64)


def load_tensor_dataset(path, labels_path=None) -> Dataset:
    """Read a tensor container and flatten it to one row per leading-axis entry."""
    arr = read_tensor(path)
    if arr.ndim == 1:
        arr = arr[:, None]
    ds = flatten(arr)
    if labels_path is not None:
        lab = read_tensor(labels_path).astype(np.int64).ravel()
        ds = replace(ds, labels=lab)
    return ds
