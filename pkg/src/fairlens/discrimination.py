"""The individual-discrimination oracle.

An instance ``x`` is discriminatory for a model when some ``x'`` that differs
from it only on protected attributes gets a different predicted label.  The
check enumerates protected-value combinations in lexicographic order (by
schema position), skipping ``x``'s own combination, up to ``cap`` variants.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from fairlens.data import DatasetSchema, SchemaError

DEFAULT_CAP = 1000
PHASES = ("init", "global", "local")
_CHUNK_ROWS = 200_000


@dataclass(frozen=True)
class IdiRecord:
    instance: tuple[int, ...]
    witness: tuple[int, ...]
    model_labels: tuple[int, int]
    provenance: str
    protected_set: tuple[str, ...]
    exhaustive: bool = True
    witness_count: int = 1

    def to_dict(self) -> dict:
        return {
            "instance": list(self.instance),
            "witness": list(self.witness),
            "model_labels": list(self.model_labels),
            "provenance": self.provenance,
            "protected_set": list(self.protected_set),
            "exhaustive": self.exhaustive,
            "witness_count": self.witness_count,
        }

    @classmethod
    def from_dict(cls, d) -> "IdiRecord":
        return cls(tuple(d["instance"]), tuple(d["witness"]), tuple(d["model_labels"]),
                   d["provenance"], tuple(d["protected_set"]), bool(d.get("exhaustive", True)),
                   int(d.get("witness_count", 1)))

    def validate(self, schema: DatasetSchema) -> None:
        """Raise ``ValueError`` unless the record is a well-formed IDI pair."""
        prot = set(schema.indices(self.protected_set))
        diff = [i for i, (a, b) in enumerate(zip(self.instance, self.witness)) if a != b]
        if any(i not in prot for i in diff):
            raise ValueError("instance and witness differ on a non-protected attribute")
        if not diff:
            raise ValueError("instance and witness are identical")
        if self.model_labels[0] == self.model_labels[1]:
            raise ValueError("instance and witness share a label")


def write_jsonl(records: Iterable[IdiRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), separators=(",", ":")) + "\n")


def read_jsonl(path) -> list[IdiRecord]:
    with open(path, encoding="utf-8") as fh:
        return [IdiRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def protected_indices(schema: DatasetSchema, protected: Sequence[str]) -> list[int]:
    if not protected:
        raise SchemaError("protected attribute set is empty")
    return sorted(schema.indices(protected))


def variant_grid(schema: DatasetSchema, protected: Sequence[str], cap: int = DEFAULT_CAP) -> tuple[list[int], np.ndarray, int]:
    """First ``cap + 1`` protected combinations in lexicographic order.

    One extra row is kept so that dropping an instance's own combination still
    leaves ``cap`` variants.  Returns (column indices, combos, full product size).
    """
    if cap < 1:
        raise ValueError("cap must be at least 1")
    idx = protected_indices(schema, protected)
    domains = [schema.attributes[i].domain for i in idx]
    total = int(np.prod([len(d) for d in domains], dtype=object))
    combos = np.array(list(itertools.islice(itertools.product(*domains), cap + 1)), dtype=np.int64)
    return idx, combos.reshape(-1, len(idx)), total


class Oracle:
    """Vectorised discrimination checker bound to one model and protected set."""

    def __init__(self, model, protected: Sequence[str], cap: int = DEFAULT_CAP):
        self.model = model
        self.schema = model.schema
        self.protected = tuple(sorted(protected, key=self.schema.index))
        self.cap = cap
        self.idx, self.combos, self.total = variant_grid(self.schema, self.protected, cap)
        # product minus the instance's own combination
        self.exhaustive = self.total - 1 <= cap

    def variants(self, x: np.ndarray) -> np.ndarray:
        """Protected variants of ``x`` in enumeration order (own combination removed)."""
        own = np.all(self.combos == x[self.idx], axis=1)
        keep = self.combos[~own][: self.cap]
        V = np.repeat(x[None, :], len(keep), axis=0)
        V[:, self.idx] = keep
        return V

    def check_many(self, X: np.ndarray):
        """For each row: its label, whether it is an IDI, witness position, witness count.

        Returns ``(labels, is_idi, witnesses, counts)``; ``witnesses[i]`` is
        only meaningful where ``is_idi[i]``.
        """
        X = np.atleast_2d(np.asarray(X, dtype=np.int64))
        n, d = X.shape
        C = self.combos
        own = np.all(C[None, :, :] == X[:, None, self.idx], axis=2)  # n x (cap+1)
        # column j is a valid variant if it is not own and within the first cap non-own ones
        rank = np.cumsum(~own, axis=1)
        valid = (~own) & (rank <= self.cap)
        labels = self.model.predict(X)
        is_idi = np.zeros(n, dtype=bool)
        first = np.zeros(n, dtype=np.int64)
        counts = np.zeros(n, dtype=np.int64)
        per = max(1, _CHUNK_ROWS // max(len(C), 1))
        for s in range(0, n, per):
            xs = X[s:s + per]
            V = np.repeat(xs[:, None, :], len(C), axis=1)
            V[:, :, self.idx] = C[None, :, :]
            pv = self.model.predict(V.reshape(-1, d)).reshape(len(xs), len(C))
            flip = (pv != labels[s:s + per, None]) & valid[s:s + per]
            is_idi[s:s + per] = flip.any(axis=1)
            first[s:s + per] = np.argmax(flip, axis=1)
            counts[s:s + per] = flip.sum(axis=1)
        W = X.copy()
        W[:, self.idx] = C[first]
        return labels, is_idi, W, counts

    def records(self, X: np.ndarray, phase: str = "global") -> list[IdiRecord | None]:
        labels, is_idi, W, counts = self.check_many(X)
        X = np.atleast_2d(X)
        out: list[IdiRecord | None] = []
        for i in range(len(X)):
            if not is_idi[i]:
                out.append(None)
                continue
            out.append(IdiRecord(
                tuple(int(v) for v in X[i]),
                tuple(int(v) for v in W[i]),
                (int(labels[i]), 1 - int(labels[i])),
                phase,
                self.protected,
                self.exhaustive,
                int(counts[i]),
            ))
        return out

    def is_idi(self, X: np.ndarray) -> np.ndarray:
        return self.check_many(X)[1]


def check_idi(model, x, protected: Sequence[str], cap: int = DEFAULT_CAP, phase: str = "global") -> IdiRecord | None:
    """The first witness of discrimination for ``x`` or ``None``.

    With ``cap`` at least the number of protected combinations the answer is
    exhaustive; otherwise the record's ``exhaustive`` flag is false.
    """
    x = np.asarray(x, dtype=np.int64)
    if x.ndim != 1:
        raise ValueError("check_idi takes a single instance")
    return Oracle(model, protected, cap).records(x[None, :], phase)[0]


def dedup_records(records: Iterable[IdiRecord | None]) -> list[IdiRecord]:
    seen, out = set(), []
    for r in records:
        if r is not None and r.instance not in seen:
            seen.add(r.instance)
            out.append(r)
    return out


def idi_rate(model, instances, protected: Sequence[str], cap: int = DEFAULT_CAP, phase: str = "init"):
    """Fraction of ``instances`` that are IDIs, and the deduplicated records."""
    X = np.atleast_2d(np.asarray(instances, dtype=np.int64))
    if len(X) == 0:
        raise ValueError("no instances given")
    recs = dedup_records(Oracle(model, protected, cap).records(X, phase))
    return len(recs) / len(X), recs
