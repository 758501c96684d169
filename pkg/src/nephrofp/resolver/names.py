"""Drug-name normalisation for compound database queries."""
from __future__ import annotations

import re

__all__ = ["EmptyAfterNormalization", "normalize_name", "normalize_ndc"]


class EmptyAfterNormalization(ValueError):
    """Nothing left to query once dose, route and form tokens are removed."""


UNITS = r"(?:mg|mcg|ug|g|kg|ml|l|meq|mmol|units?|iu|%|mg/ml|mcg/ml|mg/kg|units/ml|ml/hr)"
ROUTES = {
    "iv", "po", "oral", "im", "sc", "subq", "sq", "pr", "sl", "ng", "top", "topical",
    "inh", "neb", "ivpb", "intravenous",
}
FORMS = {
    "tab", "tabs", "tablet", "tablets", "cap", "caps", "capsule", "capsules", "inj",
    "injection", "soln", "solution", "susp", "suspension", "syringe", "vial", "bag",
    "cream", "oint", "ointment", "patch", "er", "sr", "xl", "dr", "ec", "flush", "premix",
    "liquid", "elixir", "syrup", "supp", "suppository", "drip", "bolus", "dose",
}

_PARENS = re.compile(r"\([^()]*\)|\[[^\[\]]*\]")
_DOSE = re.compile(rf"(?<![a-z])\d+(?:[.,]\d+)?(?:/\d+(?:[.,]\d+)?)*\s*{UNITS}?(?![a-z])")
_UNIT_ONLY = re.compile(rf"^{UNITS}$")
_TOKEN = re.compile(r"[a-z0-9'\-]*[a-z][a-z0-9'\-]*")


def normalize_name(raw: str | None) -> str:
    """Lowercase ``raw`` and strip dose, route, form and parenthesised qualifiers.

    >>> normalize_name("Acetaminophen 325mg Tab")
    'acetaminophen'
    """
    text = (raw or "").lower()
    while True:
        stripped = _PARENS.sub(" ", text)
        if stripped == text:
            break
        text = stripped
    text = _DOSE.sub(" ", text)
    words = []
    for tok in re.split(r"[\s,;/]+", text):
        tok = tok.strip(".-*'\"")
        if not tok or tok in ROUTES or tok in FORMS or _UNIT_ONLY.match(tok):
            continue
        if not _TOKEN.fullmatch(tok):
            continue
        words.append(tok)
    if not words:
        raise EmptyAfterNormalization(f"nothing to query in {raw!r}")
    return " ".join(words)


def normalize_ndc(raw: str | None) -> str | None:
    """Digits-only 11-digit NDC, or ``None`` when absent or malformed."""
    if raw is None:
        return None
    digits = re.sub(r"\D", "", str(raw))
    if not digits or set(digits) == {"0"}:
        return None
    if len(digits) < 11:
        digits = digits.zfill(11)
    return digits if len(digits) == 11 else None
