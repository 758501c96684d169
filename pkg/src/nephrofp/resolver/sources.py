"""Lookup backends: offline fixtures and HTTP+JSON adapters.

Compound lookups answer ``name -> SMILES`` and registry lookups answer
``NDC -> proprietary name``. Both return ``None`` for a definitive miss and
raise :class:`UpstreamError` for transport failures that survived retries.
"""
from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol
from urllib.parse import quote

import httpx

log = logging.getLogger(__name__)

__all__ = [
    "UpstreamError",
    "CompoundLookup",
    "NdcLookup",
    "FixtureCompoundDb",
    "FixtureNdcDb",
    "RetryPolicy",
    "RateLimiter",
    "PubChemClient",
    "OpenFdaNdcClient",
    "read_tsv_entries",
    "ndc_candidates",
]


class UpstreamError(RuntimeError):
    """Transport error or 5xx response that persisted through all retries."""


class CompoundLookup(Protocol):
    def smiles_for(self, name: str) -> str | None: ...


class NdcLookup(Protocol):
    def proprietary_name(self, ndc: str) -> str | None: ...


def read_tsv_entries(path) -> dict[str, tuple[str, str, str]]:
    """Parse ``term<TAB>status<TAB>value<TAB>timestamp`` lines.

    Later lines override earlier ones, so append-only files stay consistent.
    """
    entries: dict[str, tuple[str, str, str]] = {}
    path = Path(path)
    if not path.exists():
        return entries
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                # a torn final line from an interrupted append is skipped
                log.warning("%s:%d: expected 4 fields, got %d", path, lineno, len(parts))
                continue
            term, status, value, ts = parts
            entries[term] = (status, value, ts)
    return entries


class _FixtureDb:
    def __init__(self, entries: dict[str, str | None]):
        self.entries = dict(entries)
        self.calls = 0
        self.queries: list[str] = []
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path):
        raw = read_tsv_entries(path)
        return cls({k: (v if s == "hit" and v else None) for k, (s, v, _) in raw.items()})

    def _get(self, key: str) -> str | None:
        with self._lock:
            self.calls += 1
            self.queries.append(key)
        return self.entries.get(key)


class FixtureCompoundDb(_FixtureDb):
    """In-memory ``normalized name -> SMILES`` table."""

    def smiles_for(self, name: str) -> str | None:
        return self._get(name)


class FixtureNdcDb(_FixtureDb):
    """In-memory ``11-digit NDC -> proprietary name`` table."""

    def proprietary_name(self, ndc: str) -> str | None:
        return self._get(ndc)


@dataclass
class RetryPolicy:
    attempts: int = 3
    backoff: float = 0.5
    sleep: Callable[[float], None] = field(default=time.sleep, repr=False)

    def delays(self):
        return [self.backoff * 2**k for k in range(self.attempts - 1)]


class RateLimiter:
    """Spaces calls at least ``1 / rate`` seconds apart across threads."""

    def __init__(self, rate: float, clock=time.monotonic, sleep=time.sleep):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.interval = 1.0 / rate
        self.clock = clock
        self.sleep = sleep
        self._next = 0.0
        self._lock = threading.Lock()

    def acquire(self):
        with self._lock:
            now = self.clock()
            start = max(now, self._next)
            self._next = start + self.interval
        if start > now:
            self.sleep(start - now)


def _get_json(client: httpx.Client, url: str, params, retry: RetryPolicy,
              limiter: RateLimiter | None):
    delays = retry.delays()
    for attempt in range(retry.attempts):
        if limiter is not None:
            limiter.acquire()
        try:
            resp = client.get(url, params=params)
        except httpx.TransportError as exc:
            err = f"{type(exc).__name__}: {exc}"
        else:
            if resp.status_code == 200:
                return resp.json()
            if resp.status_code in (400, 404):
                return None
            if resp.status_code == 429 or resp.status_code >= 500:
                err = f"HTTP {resp.status_code}"
            else:
                return None
        if attempt < retry.attempts - 1:
            log.info("retrying %s after %s", url, err)
            retry.sleep(delays[attempt])
    raise UpstreamError(f"{url}: {err} after {retry.attempts} attempts")


class PubChemClient:
    """Compound name lookup against the PubChem PUG REST API."""

    SMILES_KEYS = ("CanonicalSMILES", "ConnectivitySMILES", "SMILES", "IsomericSMILES")

    def __init__(self, base_url: str = "https://pubchem.ncbi.nlm.nih.gov/rest/pug",
                 client: httpx.Client | None = None, retry: RetryPolicy | None = None,
                 limiter: RateLimiter | None = None, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.client = client or httpx.Client(timeout=timeout)
        self.retry = retry or RetryPolicy()
        self.limiter = limiter

    def smiles_for(self, name: str) -> str | None:
        url = f"{self.base_url}/compound/name/{quote(name, safe='')}/property/CanonicalSMILES/JSON"
        data = _get_json(self.client, url, None, self.retry, self.limiter)
        if not data:
            return None
        props = data.get("PropertyTable", {}).get("Properties", [])
        if len(props) > 1:
            log.warning("%r matched %d compounds; using the first", name, len(props))
        for prop in props:
            for key in self.SMILES_KEYS:
                if prop.get(key):
                    return prop[key]
        return None


def ndc_candidates(ndc: str) -> list[str]:
    """Hyphenated 10-digit package codes an 11-digit NDC may correspond to."""
    lab, prod, pkg = ndc[:5], ndc[5:9], ndc[9:]
    out = []
    if lab.startswith("0"):
        out.append(f"{lab[1:]}-{prod}-{pkg}")
    if prod.startswith("0"):
        out.append(f"{lab}-{prod[1:]}-{pkg}")
    if pkg.startswith("0"):
        out.append(f"{lab}-{prod}-{pkg[1:]}")
    return out


class OpenFdaNdcClient:
    """NDC to proprietary (brand) name via the openFDA drug/ndc endpoint."""

    def __init__(self, base_url: str = "https://api.fda.gov/drug/ndc.json",
                 client: httpx.Client | None = None, retry: RetryPolicy | None = None,
                 limiter: RateLimiter | None = None, timeout: float = 30.0):
        self.base_url = base_url
        self.client = client or httpx.Client(timeout=timeout)
        self.retry = retry or RetryPolicy()
        self.limiter = limiter

    def proprietary_name(self, ndc: str) -> str | None:
        for code in ndc_candidates(ndc):
            params = {"search": f'packaging.package_ndc:"{code}"', "limit": 1}
            data = _get_json(self.client, self.base_url, params, self.retry, self.limiter)
            if data and data.get("results"):
                result = data["results"][0]
                name = result.get("brand_name") or result.get("generic_name")
                if name:
                    return name
        return None
