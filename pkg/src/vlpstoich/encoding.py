"""Sequence-to-matrix feature encoding.

Two symbol maps (25-category CHARPROTSET-style table, 6-category side-chain
clusters) crossed with two methods (integer-label, one-hot). PAD is category
0: integer value 0 or an all-zero one-hot block.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dataset import ALPHABET, PAD, StoichiometryDataset, pad_or_truncate
from .errors import LayoutMismatch

CHARPROTSET_NAME = "charprotset"
CLUSTERS_NAME = "clusters"

# Six side-chain chemistry groups over the 25-symbol alphabet.
CLUSTER_GROUPS: tuple[tuple[str, str], ...] = (
    ("aliphatic", "GAVLI"),
    ("aromatic", "FYW"),
    ("neutral", "CMPSTNQ"),
    ("positive", "HKR"),
    ("negative", "DE"),
    ("special", "BXOUZ"),
)


class EncodingMethod(Enum):
    INTEGER_LABEL = "integer"
    ONE_HOT = "onehot"

    @classmethod
    def from_name(cls, name: str) -> "EncodingMethod":
        for m in cls:
            if m.value == name:
                return m
        raise ValueError(f"unknown encoding method {name!r}")


@dataclass(frozen=True)
class EncodingMap:
    """Total map from alphabet symbols to category indices 1..C (0 = PAD)."""

    name: str
    category_of: dict[str, int]
    num_categories: int
    category_names: tuple[str, ...]

    def __post_init__(self):
        missing = set(ALPHABET) - set(self.category_of)
        if missing:
            raise ValueError(f"encoding map misses symbols {sorted(missing)}")
        values = set(self.category_of.values())
        if values != set(range(1, self.num_categories + 1)):
            raise ValueError("category indices must be contiguous 1..C")


def charprotset_map() -> EncodingMap:
    """Bijection from the 25 symbols to 1..25 in alphabetical order."""
    return EncodingMap(
        name=CHARPROTSET_NAME,
        category_of={ch: i + 1 for i, ch in enumerate(ALPHABET)},
        num_categories=25,
        category_names=tuple(ALPHABET),
    )


def cluster_map() -> EncodingMap:
    """Six knowledge-based side-chain groups, indexed in the printed order."""
    cat = {}
    for idx, (_, symbols) in enumerate(CLUSTER_GROUPS, start=1):
        for ch in symbols:
            cat[ch] = idx
    return EncodingMap(
        name=CLUSTERS_NAME,
        category_of=cat,
        num_categories=len(CLUSTER_GROUPS),
        category_names=tuple(name for name, _ in CLUSTER_GROUPS),
    )


def encoding_map_by_name(name: str) -> EncodingMap:
    if name == CHARPROTSET_NAME:
        return charprotset_map()
    if name == CLUSTERS_NAME:
        return cluster_map()
    raise ValueError(f"unknown encoding map {name!r}")


@dataclass(frozen=True)
class FeatureLayout:
    """Position/channel structure of an encoded matrix.

    channels is 1 for integer-label and C for one-hot; the flat feature
    index of (position, channel) is position * channels + channel.
    """

    positions: int
    channels: int
    map_name: str
    method: EncodingMethod

    @property
    def n_features(self) -> int:
        return self.positions * self.channels

    def feature_index(self, position: int, channel: int) -> int:
        if not (0 <= position < self.positions and 0 <= channel < self.channels):
            raise LayoutMismatch(
                f"(position={position}, channel={channel}) outside layout"
            )
        return position * self.channels + channel

    def position_of(self, feature: int) -> tuple[int, int]:
        if not (0 <= feature < self.n_features):
            raise LayoutMismatch(f"feature index {feature} outside layout")
        return divmod(feature, self.channels)

    def block_columns(self, position: int) -> range:
        start = position * self.channels
        return range(start, start + self.channels)

    def to_json(self) -> dict:
        return {
            "m": self.positions,
            "c": self.channels,
            "map_name": self.map_name,
            "method": self.method.value,
        }

    @classmethod
    def from_json(cls, d: dict) -> "FeatureLayout":
        return cls(
            positions=d["m"],
            channels=d["c"],
            map_name=d["map_name"],
            method=EncodingMethod.from_name(d["method"]),
        )


@dataclass(frozen=True)
class FeatureMatrix:
    """Dense n_samples x n_features matrix with its layout and row metadata."""

    values: np.ndarray
    layout: FeatureLayout
    row_ids: tuple[str, ...]
    row_labels: np.ndarray  # numeric targets +-1

    def __post_init__(self):
        n, f = self.values.shape
        if f != self.layout.n_features:
            raise LayoutMismatch(
                f"matrix has {f} columns, layout expects {self.layout.n_features}"
            )
        if len(self.row_ids) != n or len(self.row_labels) != n:
            raise LayoutMismatch("row metadata length mismatch")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    def take(self, indices) -> "FeatureMatrix":
        idx = np.asarray(indices)
        return FeatureMatrix(
            values=self.values[idx],
            layout=self.layout,
            row_ids=tuple(self.row_ids[i] for i in idx),
            row_labels=self.row_labels[idx],
        )


def encode_sequence(
    sequence: str, emap: EncodingMap, method: EncodingMethod, max_length: int
) -> np.ndarray:
    """Encode one sequence into a flat feature row."""
    tokens = pad_or_truncate(sequence, max_length)
    codes = np.array(
        [0 if t == PAD else emap.category_of[t] for t in tokens], dtype=float
    )
    if method is EncodingMethod.INTEGER_LABEL:
        return codes
    row = np.zeros(max_length * emap.num_categories)
    present = codes > 0
    positions = np.flatnonzero(present)
    channels = codes[present].astype(int) - 1
    row[positions * emap.num_categories + channels] = 1.0
    return row


def encode(
    dataset: StoichiometryDataset, emap: EncodingMap, method: EncodingMethod
) -> FeatureMatrix:
    """Encode every record; row order preserves dataset order."""
    m = dataset.max_length
    rows = np.empty(
        (
            len(dataset),
            m * (emap.num_categories if method is EncodingMethod.ONE_HOT else 1),
        )
    )
    for i, rec in enumerate(dataset.records):
        rows[i] = encode_sequence(rec.sequence, emap, method, m)
    layout = FeatureLayout(
        positions=m,
        channels=emap.num_categories if method is EncodingMethod.ONE_HOT else 1,
        map_name=emap.name,
        method=method,
    )
    return FeatureMatrix(
        values=rows,
        layout=layout,
        row_ids=tuple(r.id for r in dataset.records),
        row_labels=dataset.labels,
    )


def decode_onehot_row(row: np.ndarray, layout: FeatureLayout) -> list[int]:
    """Recover the padded category sequence (0 = PAD) from a one-hot row."""
    if layout.method is not EncodingMethod.ONE_HOT:
        raise LayoutMismatch("decode_onehot_row requires a one-hot layout")
    blocks = np.asarray(row).reshape(layout.positions, layout.channels)
    codes = []
    for block in blocks:
        hits = np.flatnonzero(block == 1.0)
        codes.append(0 if len(hits) == 0 else int(hits[0]) + 1)
    return codes


def feature_matrix_from_arrays(values, labels, ids=None) -> FeatureMatrix:
    """Wrap a raw (n, d) array as a FeatureMatrix with a flat 1-channel layout.

    Convenience for tests and for fitting on arbitrary numeric data.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values.reshape(-1, 1)
    labels = np.asarray(labels, dtype=float)
    n, d = values.shape
    layout = FeatureLayout(
        positions=d, channels=1, map_name="raw", method=EncodingMethod.INTEGER_LABEL
    )
    if ids is None:
        ids = tuple(f"r{i}" for i in range(n))
    return FeatureMatrix(values=values, layout=layout, row_ids=tuple(ids), row_labels=labels)


def matrix_to_csv(fm: FeatureMatrix) -> str:
    """Debug export: one row per sample, id column then feature values."""
    lines = ["id," + ",".join(f"f{j}" for j in range(fm.layout.n_features))]
    for rid, row in zip(fm.row_ids, fm.values):
        lines.append(rid + "," + ",".join(f"{v:.10g}" for v in row))
    return "\n".join(lines) + "\n"


def layout_to_json_text(layout: FeatureLayout) -> str:
    return json.dumps(layout.to_json(), indent=2)
