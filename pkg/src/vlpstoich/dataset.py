"""Curated 60-mer/180-mer sequence dataset: parsing, validation, padding,
length histograms and stratified fold assignment."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    BadLabel,
    BadSymbol,
    DuplicateId,
    DuplicateSequence,
    EmptyFile,
    TooFewSamples,
)

# One-letter amino-acid alphabet: A-Z without J (25 symbols, includes
# ambiguity/special codes B, O, U, X, Z).
ALPHABET = "ABCDEFGHIKLMNOPQRSTUVWXYZ"
ALPHABET_SET = frozenset(ALPHABET)

# Token used for positions beyond the sequence end after padding.
PAD = "-"

# Length histogram bin edges: <=200, (200,400], (400,600], >600.
LENGTH_BIN_EDGES = (200, 400, 600)
LENGTH_BIN_LABELS = ("<=200", "(200,400]", "(400,600]", ">600")


class StoichiometryClass(Enum):
    SIXTY = 60
    ONE_EIGHTY = 180

    @property
    def target(self) -> int:
        """Numeric regression/classification target: -1 for 60-mer, +1 for 180-mer."""
        return -1 if self is StoichiometryClass.SIXTY else 1

    @classmethod
    def from_label(cls, text: str) -> "StoichiometryClass":
        text = text.strip()
        if text == "60":
            return cls.SIXTY
        if text == "180":
            return cls.ONE_EIGHTY
        raise BadLabel(f"stoichiometry must be 60 or 180, got {text!r}")


@dataclass(frozen=True)
class ProteinRecord:
    """One curated sequence with its PDB-style identifier and class label."""

    id: str
    sequence: str
    label: StoichiometryClass


@dataclass(frozen=True)
class StoichiometryDataset:
    """Immutable ordered collection of validated records.

    max_length is the uniform padded length m used downstream; the bundled
    corpus uses m = 1426.
    """

    records: tuple[ProteinRecord, ...]
    max_length: int

    def __post_init__(self):
        if self.max_length < 1:
            raise ValueError("max_length must be >= 1")
        seen_ids: set[str] = set()
        seen_seqs: set[str] = set()
        for rec in self.records:
            if not rec.id:
                raise DuplicateId("record id must be non-empty")
            if rec.id in seen_ids:
                raise DuplicateId(f"duplicate record id {rec.id!r}")
            seen_ids.add(rec.id)
            if not rec.sequence:
                raise BadSymbol(f"record {rec.id!r} has an empty sequence")
            bad = set(rec.sequence) - ALPHABET_SET
            if bad:
                raise BadSymbol(
                    f"record {rec.id!r} contains invalid symbol(s) {sorted(bad)}"
                )
            if rec.sequence in seen_seqs:
                raise DuplicateSequence(
                    f"record {rec.id!r} duplicates an earlier sequence"
                )
            seen_seqs.add(rec.sequence)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def labels(self) -> np.ndarray:
        """Numeric targets (+1 / -1), one per record, dataset order."""
        return np.array([r.label.target for r in self.records], dtype=float)

    def class_counts(self) -> dict[StoichiometryClass, int]:
        counts = {c: 0 for c in StoichiometryClass}
        for rec in self.records:
            counts[rec.label] += 1
        return counts


@dataclass(frozen=True)
class FoldAssignment:
    """Stratified partition of record indices into k folds."""

    fold_of: tuple[int, ...]
    k: int
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.fold_of) == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.fold_of) != fold)


def parse_dataset(csv_text: str, max_length: int | None = None) -> StoichiometryDataset:
    """Parse the canonical CSV format (header: id,sequence,stoichiometry).

    Sequences are upper-cased and validated against the 25-symbol alphabet.
    If max_length is None it is set to the longest sequence in the file.
    """
    reader = csv.reader(io.StringIO(csv_text))
    rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    if not rows:
        raise EmptyFile("dataset CSV is empty")
    header = [h.strip().lower() for h in rows[0]]
    if header != ["id", "sequence", "stoichiometry"]:
        raise EmptyFile(
            f"expected header 'id,sequence,stoichiometry', got {','.join(header)!r}"
        )
    if len(rows) == 1:
        raise EmptyFile("dataset CSV has a header but no data rows")

    records = []
    for row_num, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise BadLabel(f"row {row_num}: expected 3 fields, got {len(row)}")
        rec_id, seq, label_text = (cell.strip() for cell in row)
        seq = seq.upper()
        for col, ch in enumerate(seq, start=1):
            if ch not in ALPHABET_SET:
                raise BadSymbol(
                    f"row {row_num}, column {col}: invalid symbol {ch!r}",
                    row=row_num,
                    column=col,
                )
        label = StoichiometryClass.from_label(label_text)
        records.append(ProteinRecord(id=rec_id, sequence=seq, label=label))

    if max_length is None:
        max_length = max(len(r.sequence) for r in records)
    return StoichiometryDataset(records=tuple(records), max_length=max_length)


def dataset_to_csv(dataset: StoichiometryDataset) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["id", "sequence", "stoichiometry"])
    for rec in dataset.records:
        writer.writerow([rec.id, rec.sequence, str(rec.label.value)])
    return out.getvalue()


def dataset_to_json(dataset: StoichiometryDataset) -> str:
    rows = [
        {"id": r.id, "sequence": r.sequence, "stoichiometry": r.label.value}
        for r in dataset.records
    ]
    return json.dumps(rows, indent=2)


def dataset_from_json(text: str, max_length: int | None = None) -> StoichiometryDataset:
    rows = json.loads(text)
    if not rows:
        raise EmptyFile("dataset JSON is empty")
    records = tuple(
        ProteinRecord(
            id=row["id"],
            sequence=row["sequence"].upper(),
            label=StoichiometryClass.from_label(str(row["stoichiometry"])),
        )
        for row in rows
    )
    if max_length is None:
        max_length = max(len(r.sequence) for r in records)
    return StoichiometryDataset(records=records, max_length=max_length)


def pad_or_truncate(sequence: str, max_length: int) -> list[str]:
    """Return exactly max_length tokens: sequence symbols then PAD tokens."""
    tokens = list(sequence[:max_length])
    tokens.extend(PAD for _ in range(max_length - len(tokens)))
    return tokens


def length_histogram(
    dataset: StoichiometryDataset,
) -> dict[StoichiometryClass, tuple[int, ...]]:
    """Per-class sequence-length counts in bins <=200, (200,400], (400,600], >600."""
    hist = {c: [0, 0, 0, 0] for c in StoichiometryClass}
    for rec in dataset.records:
        n = len(rec.sequence)
        if n <= LENGTH_BIN_EDGES[0]:
            b = 0
        elif n <= LENGTH_BIN_EDGES[1]:
            b = 1
        elif n <= LENGTH_BIN_EDGES[2]:
            b = 2
        else:
            b = 3
        hist[rec.label][b] += 1
    return {c: tuple(v) for c, v in hist.items()}


def stratified_fold_indices(targets: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Assign each sample to one of k folds, stratified by the +-1 target.

    Deterministic for a given (targets order, k, seed); uses numpy's PCG64
    generator so splits reproduce across platforms.
    """
    targets = np.asarray(targets)
    if k < 2:
        raise TooFewSamples("fold count must be >= 2")
    fold_of = np.full(len(targets), -1, dtype=int)
    rng = np.random.default_rng(seed)
    # Rotate the fold that receives each class's remainder so uneven class
    # sizes do not pile extras onto the same folds.
    for class_idx, value in enumerate(sorted(set(targets.tolist()))):
        members = np.flatnonzero(targets == value)
        if len(members) < k:
            raise TooFewSamples(
                f"class {value} has {len(members)} members, fewer than k={k}"
            )
        order = rng.permutation(len(members))
        for j, pos in enumerate(order):
            fold_of[members[pos]] = (j + class_idx) % k
    return fold_of


def stratified_folds(dataset: StoichiometryDataset, k: int, seed: int) -> FoldAssignment:
    fold_of = stratified_fold_indices(dataset.labels, k, seed)
    return FoldAssignment(fold_of=tuple(int(f) for f in fold_of), k=k, seed=seed)
