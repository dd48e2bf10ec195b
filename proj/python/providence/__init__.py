"""Ballot-polling audit stopping rules, round-size planning and simulation."""

import json

from ._providence import (
    AuditKind,
    AuditVerdict,
    CapacityError,
    DomainError,
    PairwiseContest,
    ProvidenceError,
    RoundPlan,
    ScheduleViolation,
    bravo_kmin,
    first_round_stop_probs,
    kmin,
    minerva_schedule,
    misleading_min_round_size,
    next_round_size,
    risk,
)
from ._providence import _simulate_json

__all__ = [
    "AuditKind",
    "AuditVerdict",
    "CapacityError",
    "DomainError",
    "PairwiseContest",
    "ProvidenceError",
    "RoundPlan",
    "ScheduleViolation",
    "bravo_kmin",
    "first_round_stop_probs",
    "kmin",
    "minerva_schedule",
    "misleading_min_round_size",
    "next_round_size",
    "risk",
    "simulate",
]


def simulate(contest, kind=AuditKind.PROVIDENCE, *, alpha=0.1, target_p=0.9, trials=1000, seed=0,
             null_hypothesis=False, max_rounds=5):
    """Run Monte Carlo audits and return the report as a dict."""
    return json.loads(_simulate_json(contest, kind, alpha, target_p, trials, seed, null_hypothesis, max_rounds))
