"""Dataset download with checksum verification and idempotent re-runs."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Tuple
from urllib.parse import urljoin

from python_keed.config import ConfigSection, section
from python_keed.errors import ConfigError, FetchError
from python_keed.http import HttpClient
from python_keed.utils import sha256_hex

logger = logging.getLogger(__name__)

RECORDS_INDEX = "RECORDS"

DEFAULT_CATALOG: Dict[str, Dict[str, Any]] = {
    "qtdb": {"base_url": "https://physionet.org/files/qtdb/1.0.0/", "extensions": ["hea", "dat", "q1c"]},
    "butpdb": {"base_url": "https://physionet.org/files/butpdb/1.0.0/", "extensions": ["hea", "dat", "atr"]},
    "pwave": {"base_url": "https://physionet.org/files/pwave/1.0.0/", "extensions": ["hea", "dat", "atr"]},
}


@dataclass(frozen=True)
class CatalogEntry:
    """One downloadable dataset.

    Attributes:
        dataset_id: Catalog key
        base_url: Directory URL the file names are joined to
        records: Record names; empty means read the dataset's RECORDS index
        extensions: File extensions fetched per record
        checksums: Optional SHA-256 per file name
    """
    dataset_id: str
    base_url: str
    records: Tuple[str, ...] = ()
    extensions: Tuple[str, ...] = ("hea", "dat")
    checksums: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, dataset_id: str, data: Mapping[str, Any]) -> "CatalogEntry":
        if "base_url" not in data:
            raise ConfigError(f"Catalog entry {dataset_id!r} has no base_url")
        return cls(
            dataset_id=dataset_id,
            base_url=str(data["base_url"]).rstrip("/") + "/",
            records=tuple(str(r) for r in data.get("records", ())),
            extensions=tuple(str(e).lstrip(".") for e in data.get("extensions", ("hea", "dat"))),
            checksums={str(k): str(v).lower() for k, v in dict(data.get("checksums", {})).items()},
        )

    def url(self, file_name: str) -> str:
        return urljoin(self.base_url, file_name)


@section("fetch", "datasets")
@dataclass(frozen=True)
class FetchConfig(ConfigSection):
    catalog: Mapping[str, Mapping[str, Any]] = field(
        default_factory=lambda: dict(DEFAULT_CATALOG), metadata={"name": ["catalog"], "type": "catalog"})

    def entry(self, dataset_id: str) -> CatalogEntry:
        if dataset_id not in self.catalog:
            raise ConfigError(f"Unknown dataset {dataset_id!r}; catalog has {sorted(self.catalog)}")
        return CatalogEntry.from_mapping(dataset_id, self.catalog[dataset_id])


@dataclass(frozen=True)
class FetchSummary:
    downloaded: Tuple[str, ...]
    skipped: Tuple[str, ...]


class DatasetFetcher:
    """Downloads a catalog entry into a directory.

    Files that already exist (and match their checksum, when one is
    configured) are skipped. Downloads land in ``<name>.part`` and are
    renamed only after verification.
    """
    httpClient: HttpClient
    entry: CatalogEntry
    destination: Path

    def __init__(self, httpClient: HttpClient, entry: CatalogEntry, destination: Path):
        self.httpClient = httpClient
        self.entry = entry
        self.destination = Path(destination)

    def is_verified(self, path: Path) -> bool:
        if not path.is_file():
            return False
        expected = self.entry.checksums.get(path.name)
        return expected is None or sha256_hex(path.read_bytes()) == expected

    async def _get(self, file_name: str) -> bytes:
        url = self.entry.url(file_name)
        try:
            download = await self.httpClient.download(url)
        except Exception as err:
            raise FetchError(f"Download of {url} failed: {err}") from err
        if download.truncated:
            raise FetchError(
                f"Truncated download of {url}: {len(download.content)} of {download.declared_length} bytes")
        return download.content

    async def records(self) -> List[str]:
        if self.entry.records:
            return list(self.entry.records)
        await self.fetch_file(RECORDS_INDEX)
        text = (self.destination / RECORDS_INDEX).read_text()
        return [line.strip() for line in text.splitlines() if line.strip()]

    async def fetch_file(self, file_name: str) -> bool:
        """Fetch one file; returns False when a verified copy was already present."""
        path = self.destination / file_name
        if self.is_verified(path):
            logger.info("Skipping verified %s", path)
            return False
        if path.exists():
            logger.warning("Removing %s: checksum mismatch", path)
            path.unlink()
        data = await self._get(file_name)
        expected = self.entry.checksums.get(file_name)
        if expected is not None and sha256_hex(data) != expected:
            raise FetchError(f"Checksum mismatch for {file_name}: expected {expected}, got {sha256_hex(data)}")
        path.parent.mkdir(parents=True, exist_ok=True)
        part = path.with_name(path.name + ".part")
        part.write_bytes(data)
        part.replace(path)
        logger.info("Downloaded %s (%d bytes)", path, len(data))
        return True

    async def fetch(self) -> FetchSummary:
        downloaded, skipped = [], []
        for record in await self.records():
            for extension in self.entry.extensions:
                file_name = f"{record}.{extension}"
                (downloaded if await self.fetch_file(file_name) else skipped).append(file_name)
        return FetchSummary(tuple(downloaded), tuple(skipped))
