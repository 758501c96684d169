"""Persistent lookup cache.

One line per upstream answer, ``term<TAB>status<TAB>value<TAB>timestamp`` in
UTF-8, where status is ``hit`` or ``miss``. Compound answers are keyed by the
normalised query term and carry a SMILES value; registry answers are keyed
``ndc:<11 digits>`` and carry the proprietary name. New entries are appended
on :meth:`ResolverCache.flush`, so an interrupted run loses at most the
current batch.
"""
from __future__ import annotations

import threading
from datetime import datetime, timezone
from pathlib import Path

from .sources import read_tsv_entries

__all__ = ["ResolverCache", "CachedCompoundLookup", "CachedNdcLookup"]


def _clean(text: str) -> str:
    return text.replace("\t", " ").replace("\n", " ").replace("\r", " ")


class ResolverCache:
    def __init__(self, path=None, clock=None):
        self.path = Path(path) if path is not None else None
        self._clock = clock or (lambda: datetime.now(timezone.utc))
        self._entries: dict[str, tuple[str, str, str]] = {}
        self._pending: list[str] = []
        self._lock = threading.Lock()
        if self.path is not None:
            self._entries.update(read_tsv_entries(self.path))

    def __len__(self):
        return len(self._entries)

    def __contains__(self, key):
        return key in self._entries

    def get(self, key: str) -> tuple[bool, str | None]:
        """``(found, value)``; ``value`` is ``None`` for a cached miss."""
        entry = self._entries.get(key)
        if entry is None:
            return False, None
        status, value, _ = entry
        return True, (value if status == "hit" and value else None)

    def put(self, key: str, value: str | None):
        ts = self._clock().isoformat(timespec="seconds")
        entry = ("hit" if value else "miss", _clean(value or ""), ts)
        with self._lock:
            self._entries[key] = entry
            self._pending.append(key)

    def flush(self):
        with self._lock:
            keys, self._pending = self._pending, []
            if self.path is None or not keys:
                return 0
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                for key in keys:
                    status, value, ts = self._entries[key]
                    fh.write(f"{_clean(key)}\t{status}\t{value}\t{ts}\n")
            return len(keys)


class _CachedLookup:
    prefix = ""

    def __init__(self, inner, cache: ResolverCache):
        self.inner = inner
        self.cache = cache
        self.upstream_calls = 0
        self.cache_hits = 0
        self._lock = threading.Lock()
        self._key_locks: dict[str, threading.Lock] = {}

    def _lookup(self, term: str, fetch):
        key = self.prefix + term
        with self._lock:
            key_lock = self._key_locks.setdefault(key, threading.Lock())
        # concurrent requests for the same term wait for the first answer
        with key_lock:
            found, value = self.cache.get(key)
            if found:
                with self._lock:
                    self.cache_hits += 1
                return value
            with self._lock:
                self.upstream_calls += 1
            value = fetch(term)
            self.cache.put(key, value)
            return value


class CachedCompoundLookup(_CachedLookup):
    def smiles_for(self, name: str) -> str | None:
        return self._lookup(name, self.inner.smiles_for)


class CachedNdcLookup(_CachedLookup):
    prefix = "ndc:"

    def proprietary_name(self, ndc: str) -> str | None:
        return self._lookup(ndc, self.inner.proprietary_name)
