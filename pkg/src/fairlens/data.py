"""Schemas, integer-encoded datasets and the preprocessing around them.

Every dataset handled by the package is a matrix of small integers, one column
per attribute, each drawn from a finite domain declared in a schema.  Raw
tables (strings and continuous numbers) are turned into that form by
:func:`preprocess_bin` using the per-column encodings of a :class:`Binning`.
"""
from __future__ import annotations

import bisect
import configparser
import csv
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


class SchemaError(ValueError):
    """Raised for malformed or inconsistent schema definitions."""


class DataError(ValueError):
    """Raised when data does not conform to its schema."""


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    domain: tuple[int, ...]
    protected: bool = False

    def __post_init__(self):
        dom = tuple(int(v) for v in self.domain)
        if not dom:
            raise SchemaError(f"attribute {self.name!r} has an empty domain")
        if len(set(dom)) != len(dom):
            raise SchemaError(f"attribute {self.name!r} has repeated domain values")
        object.__setattr__(self, "domain", tuple(sorted(dom)))

    @classmethod
    def from_range(cls, name: str, lo: int, hi: int, protected: bool = False) -> "AttributeSpec":
        if hi < lo:
            raise SchemaError(f"attribute {name!r}: empty range {lo}..{hi}")
        return cls(name, tuple(range(lo, hi + 1)), protected)

    @property
    def lo(self) -> int:
        return self.domain[0]

    @property
    def hi(self) -> int:
        return self.domain[-1]

    @property
    def size(self) -> int:
        return len(self.domain)

    @property
    def is_range(self) -> bool:
        return self.hi - self.lo + 1 == self.size

    def contains(self, value: int) -> bool:
        i = bisect.bisect_left(self.domain, value)
        return i < len(self.domain) and self.domain[i] == value

    def describe_domain(self) -> str:
        if self.is_range:
            return f"{self.lo}..{self.hi}"
        return "{" + ", ".join(map(str, self.domain)) + "}"


@dataclass(frozen=True)
class DatasetSchema:
    attributes: tuple[AttributeSpec, ...]
    label_name: str = "label"
    name: str = "dataset"

    def __post_init__(self):
        attrs = tuple(self.attributes)
        object.__setattr__(self, "attributes", attrs)
        names = [a.name for a in attrs]
        if len(set(names)) != len(names):
            raise SchemaError("attribute names must be unique")
        if self.label_name in names:
            raise SchemaError(f"label {self.label_name!r} collides with an attribute name")
        if attrs and all(a.protected for a in attrs):
            raise SchemaError("at least one attribute must be non-protected")

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.attributes]

    @property
    def n_attributes(self) -> int:
        return len(self.attributes)

    def index(self, name: str) -> int:
        for i, a in enumerate(self.attributes):
            if a.name == name:
                return i
        raise SchemaError(f"unknown attribute {name!r}")

    def indices(self, names: Iterable[str]) -> list[int]:
        return [self.index(n) for n in names]

    @property
    def protected_names(self) -> list[str]:
        return [a.name for a in self.attributes if a.protected]

    @property
    def protected_indices(self) -> list[int]:
        return [i for i, a in enumerate(self.attributes) if a.protected]

    @property
    def lower(self) -> np.ndarray:
        return np.array([a.lo for a in self.attributes], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([a.hi for a in self.attributes], dtype=float)

    def input_domain_size(self) -> int:
        # python ints do not overflow
        return math.prod(a.size for a in self.attributes)

    def with_protected(self, names: Iterable[str]) -> "DatasetSchema":
        """Copy of the schema where exactly ``names`` are protected."""
        wanted = set(names)
        unknown = wanted - set(self.names)
        if unknown:
            raise SchemaError(f"unknown protected attributes: {sorted(unknown)}")
        attrs = tuple(replace(a, protected=a.name in wanted) for a in self.attributes)
        return replace(self, attributes=attrs)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "label": self.label_name,
            "attributes": [
                {"name": a.name, "domain": list(a.domain), "protected": a.protected}
                for a in self.attributes
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DatasetSchema":
        attrs = tuple(
            AttributeSpec(a["name"], tuple(a["domain"]), bool(a.get("protected", False)))
            for a in d["attributes"]
        )
        return cls(attrs, d.get("label", "label"), d.get("name", "dataset"))

    def fingerprint(self) -> str:
        """Hash of names and domains; protected flags are excluded on purpose,
        since one trained model is tested against several protected sets."""
        payload = json.dumps(
            [self.label_name, [(a.name, list(a.domain)) for a in self.attributes]],
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def conforms(self, X: np.ndarray) -> np.ndarray:
        """Boolean mask of rows whose every value lies in its domain."""
        X = np.atleast_2d(X)
        ok = np.ones(len(X), dtype=bool)
        for j, a in enumerate(self.attributes):
            col = X[:, j]
            if a.is_range:
                ok &= (col >= a.lo) & (col <= a.hi)
            else:
                ok &= np.isin(col, a.domain)
        return ok

    def validate_rows(self, X: np.ndarray) -> None:
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_attributes:
            raise DataError(f"expected {self.n_attributes} columns, got {X.shape[1]}")
        bad = np.flatnonzero(~self.conforms(X))
        if bad.size:
            r = int(bad[0])
            for j, a in enumerate(self.attributes):
                if not a.contains(int(X[r, j])):
                    raise DataError(
                        f"row {r}: value {int(X[r, j])} of column {a.name!r} "
                        f"outside domain {a.describe_domain()}"
                    )


@dataclass(frozen=True, eq=False)
class Dataset:
    """Integer rows plus binary labels under a schema.  Arrays are read-only."""

    schema: DatasetSchema
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=np.int64).reshape(-1, self.schema.n_attributes)
        y = np.array(self.y, dtype=np.int64).reshape(-1)
        if len(X) != len(y):
            raise DataError(f"{len(X)} rows but {len(y)} labels")
        if y.size and not np.isin(y, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        self.schema.validate_rows(X)
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return len(self.X)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.schema == other.schema
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
        )

    def subset(self, idx) -> "Dataset":
        return Dataset(self.schema, self.X[idx], self.y[idx])

    def with_schema(self, schema: DatasetSchema) -> "Dataset":
        return Dataset(schema, self.X, self.y)

    def concat(self, X: np.ndarray, y: np.ndarray) -> "Dataset":
        return Dataset(self.schema, np.vstack([self.X, np.asarray(X).reshape(-1, self.X.shape[1])]),
                       np.concatenate([self.y, np.asarray(y).reshape(-1)]))


# ---------------------------------------------------------------- CSV

def write_csv(ds: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ds.schema.names + [ds.schema.label_name])
        for row, lab in zip(ds.X.tolist(), ds.y.tolist()):
            w.writerow(row + [lab])


def load_csv(path, schema: DatasetSchema) -> Dataset:
    """Read an integer-encoded CSV whose header is the attributes plus the label."""
    expected = schema.names + [schema.label_name]
    rows: list[list[int]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: missing header row")
        header = [h.strip() for h in header]
        if header != expected:
            raise DataError(f"{path}: header {header} does not match schema {expected}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(expected):
                raise DataError(f"{path}: row {lineno} has {len(rec)} fields, expected {len(expected)}")
            vals = []
            for col, cell in zip(expected, rec):
                try:
                    vals.append(int(cell.strip()))
                except ValueError:
                    raise DataError(f"{path}: row {lineno}, column {col!r}: not an integer: {cell!r}") from None
            rows.append(vals)
    arr = np.array(rows, dtype=np.int64).reshape(-1, len(expected))
    X, y = arr[:, :-1], arr[:, -1]
    bad_lab = np.flatnonzero(~np.isin(y, (0, 1)))
    if bad_lab.size:
        r = int(bad_lab[0])
        raise DataError(f"{path}: row {r + 2}, column {schema.label_name!r}: label {int(y[r])} not in {{0, 1}}")
    bad = np.flatnonzero(~schema.conforms(X)) if len(X) else []
    if len(bad):
        r = int(bad[0])
        for j, a in enumerate(schema.attributes):
            if not a.contains(int(X[r, j])):
                raise DataError(
                    f"{path}: row {r + 2}, column {a.name!r}: value {int(X[r, j])} "
                    f"outside domain {a.describe_domain()}"
                )
    return Dataset(schema, X, y)


# ---------------------------------------------------------------- binning

def bin_index(value: float, edges: Sequence[float]) -> int:
    """Index of the left-closed bin holding ``value``.

    Edges ``e0 < e1 < ...`` delimit bins ``(-inf, e0), [e0, e1), ..., [e_last, inf)``,
    so the result is in ``0..len(edges)``; values outside the edges fall in the
    two boundary bins.
    """
    return bisect.bisect_right(edges, value)


@dataclass(frozen=True)
class ColumnEncoding:
    """How one raw column becomes an integer attribute.

    Exactly one of ``edges`` (numeric binning), ``categories`` (string lookup,
    index = position) or ``clip`` (integers clipped into ``lo..hi``) is set.
    """

    source: str
    edges: tuple[float, ...] | None = None
    categories: tuple[str, ...] | None = None
    clip: tuple[int, int] | None = None

    def __post_init__(self):
        given = [self.edges is not None, self.categories is not None, self.clip is not None]
        if sum(given) != 1:
            raise SchemaError(f"column {self.source!r}: give exactly one of edges, values, clip")
        if self.edges is not None:
            e = self.edges
            if not e or any(b <= a for a, b in zip(e, e[1:])):
                raise SchemaError(f"column {self.source!r}: bin edges must be strictly increasing")

    def domain(self) -> tuple[int, ...]:
        if self.edges is not None:
            return tuple(range(len(self.edges) + 1))
        if self.categories is not None:
            return tuple(range(len(self.categories)))
        lo, hi = self.clip
        return tuple(range(lo, hi + 1))

    def encode(self, values) -> np.ndarray:
        vals = list(values)
        if self.edges is not None:
            return np.searchsorted(np.asarray(self.edges, float), np.asarray(vals, float), side="right")
        if self.categories is not None:
            lookup = {c: i for i, c in enumerate(self.categories)}
            out = np.empty(len(vals), dtype=np.int64)
            for i, v in enumerate(vals):
                key = str(v).strip()
                if key not in lookup:
                    raise DataError(f"column {self.source!r}: unknown category {key!r}")
                out[i] = lookup[key]
            return out
        lo, hi = self.clip
        return np.clip(np.asarray(vals, dtype=float).round().astype(np.int64), lo, hi)


@dataclass(frozen=True)
class Binning:
    """A schema together with the raw-table encodings that produce it."""

    schema: DatasetSchema
    encodings: Mapping[str, ColumnEncoding]
    label_source: str
    label_positive: tuple[str, ...]
    drop: tuple[str, ...] = ()
    raw_columns: tuple[str, ...] | None = None
    delimiter: str = ","
    extras: Mapping[str, str] = field(default_factory=dict)


def preprocess_bin(raw, binning: Binning) -> Dataset:
    """Encode a raw table (pandas DataFrame) into an integer dataset.

    Columns listed in ``binning.drop`` (label leaks) and any column not mapped to
    an attribute are discarded.  Rows with missing values in a used column are
    dropped.
    """
    schema = binning.schema
    for name in binning.drop:
        if name in schema.names:
            raise SchemaError(f"dropped column {name!r} is also an attribute")
    used = [binning.encodings[a.name].source for a in schema.attributes] + [binning.label_source]
    missing = [c for c in used if c not in raw.columns]
    if missing:
        raise DataError(f"raw table lacks columns {missing}")
    raw = raw[used].dropna()
    cols = [binning.encodings[a.name].encode(raw[binning.encodings[a.name].source]) for a in schema.attributes]
    X = np.column_stack(cols) if cols else np.zeros((len(raw), 0), dtype=np.int64)
    positive = set(binning.label_positive)
    y = np.array([1 if str(v).strip() in positive else 0 for v in raw[binning.label_source]], dtype=np.int64)
    return Dataset(schema, X, y)


def read_raw(path, binning: Binning):
    """Read a raw table with the delimiter and column names of ``binning``."""
    import pandas as pd

    if binning.raw_columns:
        return pd.read_csv(path, header=None, names=list(binning.raw_columns), sep=binning.delimiter,
                           skipinitialspace=True, keep_default_na=False)
    return pd.read_csv(path, sep=binning.delimiter, skipinitialspace=True)


# ---------------------------------------------------------------- schema files

def _split_list(text: str) -> list[str]:
    return [t.strip() for t in text.replace("\n", ",").split(",") if t.strip()]


def _parse_domain(text: str) -> tuple[int, ...]:
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(v) for v in _split_list(text))


def _truthy(text: str) -> bool:
    return text.strip().lower() in ("1", "yes", "true", "on")


def parse_schema_text(text: str) -> Binning:
    """Parse a schema definition (INI syntax; see README for the format)."""
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",), inline_comment_prefixes=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise SchemaError(f"cannot parse schema: {exc}") from None
    if "dataset" not in cp:
        raise SchemaError("schema needs a [dataset] section")
    ds = cp["dataset"]
    attrs, encs = [], {}
    for section in cp.sections():
        if not section.startswith("attribute "):
            continue
        name = section[len("attribute "):].strip()
        sec = cp[section]
        source = sec.get("source", name)
        enc = None
        if "edges" in sec:
            enc = ColumnEncoding(source, edges=tuple(float(v) for v in _split_list(sec["edges"])))
        elif "values" in sec:
            enc = ColumnEncoding(source, categories=tuple(_split_list(sec["values"])))
        elif "clip" in sec:
            d = _parse_domain(sec["clip"])
            enc = ColumnEncoding(source, clip=(d[0], d[-1]))
        if "domain" in sec:
            domain = _parse_domain(sec["domain"])
        elif enc is not None:
            domain = enc.domain()
        else:
            raise SchemaError(f"attribute {name!r} needs a domain, edges, values or clip")
        if enc is not None and tuple(enc.domain()) != tuple(domain):
            raise SchemaError(f"attribute {name!r}: declared domain disagrees with its encoding")
        attrs.append(AttributeSpec(name, domain, _truthy(sec.get("protected", "no"))))
        if enc is not None:
            encs[name] = enc
    schema = DatasetSchema(tuple(attrs), ds.get("label", "label"), ds.get("name", "dataset"))
    raw_cols = tuple(_split_list(ds["raw_columns"])) if "raw_columns" in ds else None
    extras = {k: v for k, v in ds.items() if k not in ("name", "label", "label_source", "label_positive",
                                                      "drop", "raw_columns", "delimiter")}
    delim = ds.get("delimiter", ",")
    if delim == "semicolon":
        delim = ";"
    return Binning(
        schema=schema,
        encodings=encs,
        label_source=ds.get("label_source", schema.label_name),
        label_positive=tuple(_split_list(ds.get("label_positive", "1"))),
        drop=tuple(_split_list(ds.get("drop", ""))),
        raw_columns=raw_cols,
        delimiter=delim,
        extras=extras,
    )


def load_schema(path) -> Binning:
    return parse_schema_text(Path(path).read_text(encoding="utf-8"))


def schema_to_text(schema: DatasetSchema) -> str:
    """Serialize a bare schema (no raw encodings) in the schema-file format."""
    lines = ["[dataset]", f"name = {schema.name}", f"label = {schema.label_name}", ""]
    for a in schema.attributes:
        lines.append(f"[attribute {a.name}]")
        dom = f"{a.lo}..{a.hi}" if a.is_range else ", ".join(map(str, a.domain))
        lines.append(f"domain = {dom}")
        lines.append(f"protected = {'yes' if a.protected else 'no'}")
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------- split / mutate

def split(ds: Dataset, train_fraction: float, rng_seed: int) -> tuple[Dataset, Dataset]:
    """Shuffle then cut; the train part has ``floor(fraction * n)`` rows."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    order = np.random.default_rng(rng_seed).permutation(len(ds))
    n_train = int(math.floor(train_fraction * len(ds)))
    return ds.subset(order[:n_train]), ds.subset(order[n_train:])


def mutate_protected(ds: Dataset, rng_seed: int) -> Dataset:
    """Flip binary protected attributes; redraw the others uniformly from their domain.

    Labels and non-protected columns are returned untouched.  A redraw may
    reproduce the original value.
    """
    prot = ds.schema.protected_indices
    if not prot:
        raise SchemaError("schema has no protected attribute")
    rng = np.random.default_rng(rng_seed)
    X = ds.X.copy()
    for j in prot:
        a = ds.schema.attributes[j]
        if a.size == 2:
            lo, hi = a.domain
            X[:, j] = np.where(X[:, j] == lo, hi, lo)
        else:
            X[:, j] = np.asarray(a.domain)[rng.integers(0, a.size, size=len(X))]
    return Dataset(ds.schema, X, ds.y)
