from __future__ import annotations

from dataclasses import dataclass, field

from .kdigo import AkiOutcome, label_aki
from .records import InsufficientData, KdigoConfig, StayRecord

FIRST_DAY_HOURS = 24.0
MIN_AGE = 18.0


@dataclass
class ExclusionResult:
    included: list[StayRecord]
    # ordered: prior history, age, onset after window, insufficient data
    counts: dict[str, int]
    outcomes: dict = field(default_factory=dict)


def apply_exclusions(stays, cfg: KdigoConfig = KdigoConfig()) -> ExclusionResult:
    """Drop stays with prior AKI/CKD, age under 18, or AKI onset after the
    label window. Each stay is counted once, at its first failing criterion.
    Stays that cannot be labelled at all are dropped last and counted apart.
    """
    counts = {"prior_aki_or_ckd": 0, "under_18": 0, "aki_after_window": 0, "insufficient_data": 0}
    included, outcomes = [], {}
    for stay in stays:
        if stay.prior_aki_or_ckd:
            counts["prior_aki_or_ckd"] += 1
            continue
        if stay.age_at_admission < MIN_AGE:
            counts["under_18"] += 1
            continue
        try:
            outcome: AkiOutcome = label_aki(stay, cfg)
        except InsufficientData:
            counts["insufficient_data"] += 1
            continue
        if outcome.onset is not None and outcome.onset > cfg.label_window:
            counts["aki_after_window"] += 1
            continue
        included.append(stay)
        outcomes[stay.stay_id] = outcome
    return ExclusionResult(included, counts, outcomes)


def has_first_day_prescription(stay: StayRecord) -> bool:
    return any(0.0 <= h < FIRST_DAY_HOURS for _, h in stay.prescriptions)


def filter_first_day_prescription(stays) -> tuple[list[StayRecord], dict[str, int]]:
    """Keep stays with a prescription starting in ``[admit, admit + 24 h)``."""
    stays = list(stays)
    kept = [s for s in stays if has_first_day_prescription(s)]
    return kept, {"stays_in": len(stays), "with_first_day_prescription": len(kept)}


def first_day_drugs(stay: StayRecord):
    return [rec for rec, h in stay.prescriptions if 0.0 <= h < FIRST_DAY_HOURS]
