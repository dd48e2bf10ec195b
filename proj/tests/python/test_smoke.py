import math

import pytest

import providence as pv


def test_pilot_risks():
    contest = pv.PairwiseContest.from_winner_share(0.62835)
    prov = pv.risk(pv.AuditKind.PROVIDENCE, contest, 0.1, [(140, 81)])
    eor = pv.risk(pv.AuditKind.EOR_BRAVO, contest, 0.1, [(140, 81)])
    assert prov.stopped
    assert prov.measured_risk == pytest.approx(0.0418, abs=5e-4)
    assert not eor.stopped
    assert eor.measured_risk == pytest.approx(0.366, abs=1e-3)


def test_selection_order_bravo():
    contest = pv.PairwiseContest.from_margin(0.5)
    order = [[1] * 9]
    v = pv.risk(pv.AuditKind.SO_BRAVO, contest, 0.1, selection_order=order)
    assert v.stopped


def test_planning():
    contest = pv.PairwiseContest.from_margin(0.05)
    assert pv.misleading_min_round_size(0.05, 0.01) == 2163
    plan = pv.next_round_size(contest, 0.1, 0.5, misleading_limit=0.01)
    assert plan.cumulative_n >= 2163
    probs = pv.first_round_stop_probs(2163, 0.05, 0.1)
    assert probs["providence"] == pytest.approx(0.817, abs=1e-3)
    assert pv.minerva_schedule(17272, 1.5, 2) == [17272, 43180]
    assert pv.kmin(pv.PairwiseContest.from_winner_share(0.51), 0.1, 17272) == 8725


def test_errors_map_to_python_exceptions():
    with pytest.raises(pv.DomainError):
        pv.PairwiseContest.from_margin(1.5)
    contest = pv.PairwiseContest.from_margin(0.01)
    with pytest.raises(pv.CapacityError):
        pv.next_round_size(contest, 0.1, 0.99, max_n=100)


def test_simulate_is_reproducible():
    contest = pv.PairwiseContest.from_margin(0.3)
    a = pv.simulate(contest, trials=200, seed=4)
    b = pv.simulate(contest, trials=200, seed=4)
    assert a == b
    assert a["trials"] == 200
    assert 0.0 <= a["stop_fraction"] <= 1.0
    assert not math.isnan(a["total_ballots_mean"])
