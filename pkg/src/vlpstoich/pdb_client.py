"""RCSB search/sequence client used to rebuild the corpus.

Transport is injected so every test runs offline against recorded
responses; live HTTP is an explicit opt-in refresh path with an on-disk
cache. The frozen bundled corpus, not a live fetch, is the ground truth.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone

from .dataset import (
    ALPHABET_SET,
    ProteinRecord,
    StoichiometryClass,
    StoichiometryDataset,
)
from .errors import (
    BadChainCount,
    BadFasta,
    BadSymbol,
    HttpStatusError,
    InsufficientUnique,
    MalformedResponse,
    NetworkError,
)

# RCSB attribute names evolve with the service schema; they are pinned here
# in one place so a schema change is a one-line fix.
SEARCH_ATTR_CHAIN_COUNT = "rcsb_assembly_info.polymer_entity_instance_count_protein"
SEARCH_ATTR_SYMMETRY = "rcsb_struct_symmetry.type"

SEARCH_URL = "https://search.rcsb.org/rcsbsearchapi/v2/query"
SEQUENCE_URL_TEMPLATE = "https://www.rcsb.org/fasta/entry/{entry_id}"

PAGE_SIZE = 100
MAX_IN_FLIGHT = 4

CACHE_DIR_ENV = "STOIC_CACHE_DIR"


@dataclass(frozen=True)
class SearchQuery:
    chain_count: int
    symmetry: str
    document: str  # serialized JSON query


@dataclass(frozen=True)
class FetchedEntry:
    id: str
    sequence: str
    retrieved_at: str


def build_search_query(chain_count: int, symmetry: str = "Icosahedral") -> SearchQuery:
    """Assemblies filtered by protein chain count AND symmetry type."""
    if chain_count <= 0:
        raise BadChainCount(f"chain count must be positive, got {chain_count}")
    document = {
        "query": {
            "type": "group",
            "logical_operator": "and",
            "nodes": [
                {
                    "type": "terminal",
                    "service": "text",
                    "parameters": {
                        "attribute": SEARCH_ATTR_CHAIN_COUNT,
                        "operator": "equals",
                        "value": chain_count,
                    },
                },
                {
                    "type": "terminal",
                    "service": "text",
                    "parameters": {
                        "attribute": SEARCH_ATTR_SYMMETRY,
                        "operator": "exact_match",
                        "value": symmetry,
                    },
                },
            ],
        },
        "return_type": "polymer_entity",
        "request_options": {
            "paginate": {"start": 0, "rows": PAGE_SIZE},
        },
    }
    return SearchQuery(
        chain_count=chain_count, symmetry=symmetry, document=json.dumps(document)
    )


# ---------------------------------------------------------------- transports

class HttpTransport:
    """Live HTTP via requests."""

    def request(self, method: str, url: str, body: str | None = None):
        import requests

        try:
            if method == "POST":
                resp = requests.post(
                    url, data=body, headers={"Content-Type": "application/json"}, timeout=60
                )
            else:
                resp = requests.get(url, timeout=60)
        except requests.RequestException as exc:
            raise NetworkError(str(exc)) from exc
        return resp.status_code, resp.text


class DictTransport:
    """In-memory transport keyed by (method, url); for tests."""

    def __init__(self, responses: dict):
        self.responses = responses

    def request(self, method: str, url: str, body: str | None = None):
        key = (method, url)
        if key not in self.responses:
            raise NetworkError(f"no recorded response for {method} {url}")
        entry = self.responses[key]
        if callable(entry):
            entry = entry(body)
        return entry


class DirectoryFixtureTransport:
    """Recorded responses on disk.

    Naming convention:
      search pages -> search_cc{chain_count}_start{start}.json
      sequences    -> seq_{entry_id}.fasta
    A file with the extra suffix ".error" holds "<status>\\n<body>" and
    simulates a non-200 response.
    """

    def __init__(self, directory: str):
        self.directory = directory
        if not os.path.isdir(directory):
            raise NetworkError(f"fixture directory not found: {directory}")

    def _load(self, name: str):
        error_path = os.path.join(self.directory, name + ".error")
        if os.path.exists(error_path):
            with open(error_path) as handle:
                first, _, rest = handle.read().partition("\n")
            return int(first.strip()), rest
        path = os.path.join(self.directory, name)
        if not os.path.exists(path):
            raise NetworkError(f"fixture file not found: {path}")
        with open(path) as handle:
            return 200, handle.read()

    def request(self, method: str, url: str, body: str | None = None):
        if method == "POST":
            try:
                doc = json.loads(body)
                chain_count = doc["query"]["nodes"][0]["parameters"]["value"]
                start = doc["request_options"]["paginate"]["start"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise NetworkError(f"unrecognized search request: {exc}") from exc
            return self._load(f"search_cc{chain_count}_start{start}.json")
        entry_id = url.rstrip("/").rsplit("/", 1)[-1]
        safe = re.sub(r"[^A-Za-z0-9_.-]", "_", entry_id)
        return self._load(f"seq_{safe}.fasta")


class CachingTransport:
    """Wraps another transport with an on-disk response cache."""

    def __init__(self, inner, cache_dir: str | None = None):
        self.inner = inner
        self.cache_dir = cache_dir or os.environ.get(CACHE_DIR_ENV)

    def request(self, method: str, url: str, body: str | None = None):
        if not self.cache_dir:
            return self.inner.request(method, url, body)
        key = hashlib.sha256(f"{method}|{url}|{body or ''}".encode()).hexdigest()
        path = os.path.join(self.cache_dir, key + ".json")
        if os.path.exists(path):
            with open(path) as handle:
                entry = json.load(handle)
            return entry["status"], entry["text"]
        status, text = self.inner.request(method, url, body)
        os.makedirs(self.cache_dir, exist_ok=True)
        with open(path, "w") as handle:
            json.dump({"status": status, "text": text}, handle)
        return status, text


# ------------------------------------------------------------------ fetching

def fetch_entry_ids(query: SearchQuery, transport, url: str = SEARCH_URL) -> list[str]:
    """Run the paginated search to exhaustion; returns de-duplicated ids."""
    ids: list[str] = []
    seen: set[str] = set()
    start = 0
    while True:
        doc = json.loads(query.document)
        doc["request_options"]["paginate"]["start"] = start
        status, text = transport.request("POST", url, json.dumps(doc))
        if status != 200:
            raise HttpStatusError(status, f"search returned HTTP {status}")
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MalformedResponse(f"search response is not JSON: {exc}") from exc
        if "result_set" not in payload or "total_count" not in payload:
            raise MalformedResponse("search response misses result_set/total_count")
        for hit in payload["result_set"]:
            identifier = hit.get("identifier")
            if not identifier:
                raise MalformedResponse("search hit without identifier")
            if identifier not in seen:
                seen.add(identifier)
                ids.append(identifier)
        start += PAGE_SIZE
        if start >= payload["total_count"] or not payload["result_set"]:
            break
    return ids


def parse_fasta(payload: str) -> str:
    """Strip '>' header lines, concatenate bodies, drop whitespace, upper-case."""
    lines = [line.strip() for line in payload.strip().splitlines() if line.strip()]
    if not lines or not lines[0].startswith(">"):
        raise BadFasta("payload does not start with a FASTA header")
    body = "".join(line for line in lines if not line.startswith(">"))
    body = re.sub(r"\s", "", body).upper()
    if not body:
        raise BadFasta("FASTA payload has no sequence body")
    bad = set(body) - ALPHABET_SET
    if bad:
        raise BadSymbol(f"FASTA sequence contains invalid symbol(s) {sorted(bad)}")
    return body


def fetch_sequence(entry_id: str, transport, url_template: str = SEQUENCE_URL_TEMPLATE) -> FetchedEntry:
    if not entry_id:
        raise MalformedResponse("entry id must be non-empty")
    url = url_template.format(entry_id=entry_id)
    status, text = transport.request("GET", url)
    if status != 200:
        raise HttpStatusError(status, f"sequence fetch for {entry_id} returned HTTP {status}")
    sequence = parse_fasta(text)
    return FetchedEntry(
        id=entry_id,
        sequence=sequence,
        retrieved_at=datetime.now(timezone.utc).isoformat(),
    )


def fetch_sequences(entry_ids: list[str], transport, max_workers: int = MAX_IN_FLIGHT) -> list[FetchedEntry]:
    """Fetch many sequences with a bounded in-flight limit; merged by id sort."""
    ordered = sorted(set(entry_ids))
    if max_workers <= 1 or len(ordered) <= 1:
        entries = [fetch_sequence(i, transport) for i in ordered]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            entries = list(pool.map(lambda i: fetch_sequence(i, transport), ordered))
    return sorted(entries, key=lambda e: e.id)


def assemble_corpus(
    entries_60: list[FetchedEntry],
    entries_180: list[FetchedEntry],
    per_class_cap: int,
) -> StoichiometryDataset:
    """Drop exact-duplicate sequences (first by id order wins), cap per class."""
    records: list[ProteinRecord] = []
    seen: set[str] = set()
    for entries, label in (
        (entries_60, StoichiometryClass.SIXTY),
        (entries_180, StoichiometryClass.ONE_EIGHTY),
    ):
        kept = 0
        for entry in sorted(entries, key=lambda e: e.id):
            if entry.sequence in seen:
                continue
            if kept >= per_class_cap:
                break
            seen.add(entry.sequence)
            records.append(ProteinRecord(id=entry.id, sequence=entry.sequence, label=label))
            kept += 1
        if kept < per_class_cap:
            raise InsufficientUnique(
                f"class {label.value}: only {kept} unique sequences, cap is {per_class_cap}"
            )
    max_length = max(len(r.sequence) for r in records)
    return StoichiometryDataset(records=tuple(records), max_length=max_length)
