"""Prescription record to SMILES resolution with fallback and caching."""
from .cache import CachedCompoundLookup, CachedNdcLookup, ResolverCache
from .core import (
    BatchResult,
    DrugRecord,
    Resolution,
    ResolutionStatus,
    ResolverConfig,
    build_lookups,
    resolve,
    resolve_batch,
)
from .names import EmptyAfterNormalization, normalize_name, normalize_ndc
from .sources import (
    FixtureCompoundDb,
    FixtureNdcDb,
    OpenFdaNdcClient,
    PubChemClient,
    RateLimiter,
    RetryPolicy,
    UpstreamError,
    ndc_candidates,
)

__all__ = [
    "BatchResult",
    "CachedCompoundLookup",
    "CachedNdcLookup",
    "DrugRecord",
    "EmptyAfterNormalization",
    "FixtureCompoundDb",
    "FixtureNdcDb",
    "OpenFdaNdcClient",
    "PubChemClient",
    "RateLimiter",
    "Resolution",
    "ResolutionStatus",
    "ResolverCache",
    "ResolverConfig",
    "RetryPolicy",
    "UpstreamError",
    "build_lookups",
    "ndc_candidates",
    "normalize_name",
    "normalize_ndc",
    "resolve",
    "resolve_batch",
]
