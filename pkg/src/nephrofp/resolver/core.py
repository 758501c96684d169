from __future__ import annotations

import enum
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ..molgraph import SmilesError, parse_smiles
from .cache import CachedCompoundLookup, CachedNdcLookup, ResolverCache
from .names import EmptyAfterNormalization, normalize_name, normalize_ndc
from .sources import (
    FixtureCompoundDb,
    FixtureNdcDb,
    OpenFdaNdcClient,
    PubChemClient,
    RateLimiter,
    RetryPolicy,
    UpstreamError,
)

log = logging.getLogger(__name__)


class ResolutionStatus(str, enum.Enum):
    RESOLVED_BY_GENERIC = "ResolvedByGeneric"
    RESOLVED_BY_NAME = "ResolvedByName"
    RESOLVED_BY_NDC = "ResolvedByNdc"
    UNRESOLVED = "Unresolved"
    # upstream kept failing; not cached, so a re-run retries the record
    FAILED = "UpstreamFailed"

    @property
    def resolved(self) -> bool:
        return self not in (ResolutionStatus.UNRESOLVED, ResolutionStatus.FAILED)


@dataclass(frozen=True)
class DrugRecord:
    drug_name: str | None = None
    generic_name: str | None = None
    ndc: str | None = None
    source_stay_id: object = None

    def __post_init__(self):
        if not any(_present(v) for v in (self.drug_name, self.generic_name, self.ndc)):
            raise ValueError("DrugRecord needs a drug name, generic name or NDC")

    def identity(self) -> tuple[str | None, str | None, str | None]:
        """Normalised ``(generic, name, ndc)`` used for batch deduplication."""
        return _try_normalize(self.generic_name), _try_normalize(self.drug_name), normalize_ndc(self.ndc)


def _present(v) -> bool:
    return v is not None and str(v).strip() != ""


def _try_normalize(raw) -> str | None:
    if not _present(raw):
        return None
    try:
        return normalize_name(str(raw))
    except EmptyAfterNormalization:
        return None


@dataclass(frozen=True)
class Resolution:
    status: ResolutionStatus
    smiles: str | None = None
    queried_term: str | None = None
    attempts: tuple[str, ...] = ()
    error: str | None = None

    def __post_init__(self):
        if (self.smiles is not None) != self.status.resolved:
            raise ValueError(f"smiles must be present iff resolved (status={self.status.value})")


def _valid(smiles: str | None, term: str) -> str | None:
    if not smiles:
        return None
    try:
        parse_smiles(smiles)
    except SmilesError as exc:
        log.warning("discarding unparseable SMILES for %r: %s", term, exc)
        return None
    return smiles


def resolve(record: DrugRecord, compound_db, ndc_db) -> Resolution:
    """Generic name, then drug name, then NDC via the registry's proprietary name."""
    generic, name, ndc = record.identity()
    tried: list[str] = []

    for term, status in ((generic, ResolutionStatus.RESOLVED_BY_GENERIC),
                         (name, ResolutionStatus.RESOLVED_BY_NAME)):
        if term is None or term in tried:
            continue
        tried.append(term)
        smiles = _valid(compound_db.smiles_for(term), term)
        if smiles:
            return Resolution(status, smiles, term, tuple(tried))

    if ndc is not None:
        proprietary = _try_normalize(ndc_db.proprietary_name(ndc))
        if proprietary is not None:
            tried.append(proprietary)
            smiles = _valid(compound_db.smiles_for(proprietary), proprietary)
            if smiles:
                return Resolution(ResolutionStatus.RESOLVED_BY_NDC, smiles, proprietary, tuple(tried))

    return Resolution(ResolutionStatus.UNRESOLVED, None, tried[-1] if tried else None, tuple(tried))


@dataclass
class BatchResult:
    resolutions: list[Resolution]
    upstream_calls: int
    cache_hits: int
    unique_records: int

    def counts(self) -> dict[str, int]:
        out = {s.value: 0 for s in ResolutionStatus}
        for r in self.resolutions:
            out[r.status.value] += 1
        return out


def resolve_batch(records, compound_db, ndc_db, cache: ResolverCache | None = None,
                  parallelism: int = 1) -> BatchResult:
    """Resolve ``records`` with deduplication and a persistent cache.

    Output order matches input order. An :class:`UpstreamError` marks only the
    affected records as ``FAILED``.
    """
    records = list(records)
    cache = cache if cache is not None else ResolverCache()
    compound = CachedCompoundLookup(compound_db, cache)
    registry = CachedNdcLookup(ndc_db, cache)

    unique: dict[tuple, DrugRecord] = {}
    keys = []
    for rec in records:
        key = rec.identity()
        keys.append(key)
        unique.setdefault(key, rec)

    def work(rec: DrugRecord) -> Resolution:
        try:
            return resolve(rec, compound, registry)
        except UpstreamError as exc:
            log.error("upstream failure for %r: %s", rec, exc)
            return Resolution(ResolutionStatus.FAILED, error=str(exc))

    todo = list(unique.items())
    if parallelism > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(work, (rec for _, rec in todo)))
    else:
        results = [work(rec) for _, rec in todo]
    by_key = {key: res for (key, _), res in zip(todo, results)}
    cache.flush()
    return BatchResult(
        [by_key[k] for k in keys],
        compound.upstream_calls + registry.upstream_calls,
        compound.cache_hits + registry.cache_hits,
        len(unique),
    )


@dataclass
class ResolverConfig:
    mode: str = "offline"
    compound_fixture: Path | None = None
    ndc_fixture: Path | None = None
    cache: Path | None = None
    compound_url: str = "https://pubchem.ncbi.nlm.nih.gov/rest/pug"
    ndc_url: str = "https://api.fda.gov/drug/ndc.json"
    rate_limit: float = 5.0
    parallelism: int = 4
    retries: int = 3
    backoff: float = 0.5
    timeout: float = 30.0
    extra: dict = field(default_factory=dict, repr=False)

    ENV = {
        "NEPHROFP_COMPOUND_URL": ("compound_url", str),
        "NEPHROFP_NDC_URL": ("ndc_url", str),
        "NEPHROFP_RATE_LIMIT": ("rate_limit", float),
        "NEPHROFP_PARALLELISM": ("parallelism", int),
        "NEPHROFP_RETRIES": ("retries", int),
        "NEPHROFP_RESOLVER_MODE": ("mode", str),
    }

    def with_env(self, environ=None) -> "ResolverConfig":
        environ = os.environ if environ is None else environ
        for var, (attr, cast) in self.ENV.items():
            if var in environ:
                setattr(self, attr, cast(environ[var]))
        return self

    def validate(self):
        if self.mode not in ("offline", "http"):
            raise ValueError(f"resolver mode must be 'offline' or 'http', got {self.mode!r}")
        if self.rate_limit <= 0 or self.parallelism < 1 or self.retries < 1:
            raise ValueError("rate_limit > 0, parallelism >= 1 and retries >= 1 required")
        if self.mode == "offline" and self.compound_fixture is None:
            raise ValueError("offline mode needs a compound_fixture file")


def build_lookups(cfg: ResolverConfig):
    """``(compound_db, ndc_db)`` for the configured mode."""
    cfg.validate()
    if cfg.mode == "offline":
        compound = FixtureCompoundDb.from_file(cfg.compound_fixture)
        ndc = FixtureNdcDb.from_file(cfg.ndc_fixture) if cfg.ndc_fixture else FixtureNdcDb({})
        return compound, ndc
    limiter = RateLimiter(cfg.rate_limit)
    retry = RetryPolicy(attempts=cfg.retries, backoff=cfg.backoff)
    return (
        PubChemClient(cfg.compound_url, retry=retry, limiter=limiter, timeout=cfg.timeout),
        OpenFdaNdcClient(cfg.ndc_url, retry=retry, limiter=limiter, timeout=cfg.timeout),
    )
