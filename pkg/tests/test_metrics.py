import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from holdq.env import accounting_total
from holdq.errors import DataError
from holdq.metrics import (
    REPORT_FIELDS,
    MetricsReport,
    TradeRecord,
    compute_report,
    emit_report,
    evaluate,
    ledger_total,
    parse_report,
    segment_trades,
)


def test_single_long_trade():
    (t,) = segment_trades([0, 1, 1, 0], [100, 100, 102, 102], 0.0)
    assert (t.entry_index, t.exit_index, t.direction) == (1, 3, 1)
    assert t.length == 2
    assert t.gross_pnl == 2.0
    assert t.net_return_pct == pytest.approx(2.0)


def test_all_flat_has_no_trades():
    assert segment_trades([0, 0, 0], [1, 2, 3], 0.5) == []


def test_reversal_splits_cost():
    trades = segment_trades([0, 1, -1, 0], [100, 101, 103, 102], 0.1)
    assert [t.direction for t in trades] == [1, -1]
    assert trades[0].exit_index == trades[1].entry_index == 2
    assert sum(t.cost_paid for t in trades) == pytest.approx(0.1 * (1 + 2 + 1))
    assert trades[0].cost_paid == pytest.approx(0.2)
    assert trades[0].gross_pnl == pytest.approx(2.0)
    assert trades[1].gross_pnl == pytest.approx(1.0)


def test_open_position_marked_at_last_price():
    (t,) = segment_trades([1, 1], [100, 99, 104], 0.1)
    assert (t.entry_index, t.exit_index) == (0, 2)
    assert t.cost_paid == pytest.approx(0.1)
    assert t.gross_pnl == pytest.approx(4.0)


def test_alignment_errors():
    with pytest.raises(DataError):
        segment_trades([0, 1], [1, 2, 3, 4], 0.0)
    with pytest.raises(DataError, match="terminal"):
        segment_trades([0, 0, 1], [1, 2, 3], 0.0)


def test_win_rate_counting():
    trades = [TradeRecord(0, 1, 1, 0.0, 0.0, r) for r in (1.0, 1.0, -1.0, 1.0)]
    rep = compute_report(trades)
    assert rep.win_rate == 75.0
    assert rep.trade_num == 4
    assert rep.return_avg == pytest.approx(0.5)
    r = np.array([1.0, 1.0, -1.0, 1.0])
    assert rep.sharpe_ratio == pytest.approx(r.mean() / r.std())


def test_single_trade_sharpe_is_degenerate():
    rep = compute_report([TradeRecord(0, 3, -1, 1.0, 0.0, 1.0)])
    assert rep.sharpe_ratio == 0.0
    assert rep.sharpe_degenerate
    assert rep.trade_length == 3.0


def test_empty_report_is_zero():
    rep = compute_report([], cost=0.05)
    assert rep == MetricsReport(cost=0.05)
    assert emit_report(rep).splitlines()[1] == "0.05,0,0.0,0.0,0.0,0.0,0.0"
    assert emit_report(compute_report([])).splitlines()[1] == "0.0,0,0.0,0.0,0.0,0.0,0.0"


def test_wide_report_row_round_trips():
    # large counts and short decimals, as a real-data sweep row would look
    rep = MetricsReport(cost=0.01, trade_num=4210, return_avg=1.87, trade_length=6.0, win_rate=57.25,
                        sharpe_ratio=1.33, cumulative_pnl=0.0)
    text = emit_report(rep, "csv")
    assert text.splitlines()[0] == ",".join(REPORT_FIELDS)
    assert parse_report(text, "csv") == [rep]
    assert parse_report(emit_report(rep, "json"), "json") == [rep]


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_emit_parse_emit_idempotent(fmt):
    reps = [evaluate([0, 1, 1, -1, -1, 0, 1], np.linspace(100, 101, 8) + np.sin(np.arange(8)), c)
            for c in (0.0, 0.01, 0.1)]
    text = emit_report(reps, fmt)
    again = emit_report(parse_report(text, fmt), fmt)
    assert again == text


def test_sweep_golden_rows():
    # trades: long 100->103, short 102->99, long 99->104; each pays 2 x cost
    prices = [100, 101, 103, 102, 100, 99, 101, 104, 104]
    actions = [1, 1, 0, -1, -1, 1, 1, 0]
    reps = [evaluate(actions, prices, c) for c in (0.0, 0.5)]
    assert emit_report(reps, "csv") == (
        "cost,trade_num,return_avg,trade_length,win_rate,sharpe_ratio,cumulative_pnl\n"
        "0.0,3,3.6638938403644286,2.0,100.0,3.735708213024081,11.0\n"
        "0.5,3,2.667062784709844,2.0,100.0,2.7460646601723764,8.0\n"
    )
    assert json.loads(emit_report(reps, "json"))[1]["trade_num"] == 3


def test_parse_rejects_wrong_fields():
    with pytest.raises(DataError):
        parse_report("a,b\n1,2\n", "csv")


actions_st = st.lists(st.sampled_from([-1, 0, 1]), min_size=1, max_size=60)


@settings(max_examples=80)
@given(actions=actions_st, seed=st.integers(0, 10_000), c=st.floats(0, 0.5))
def test_pnl_consistency_with_env(actions, seed, c):
    rng = np.random.default_rng(seed)
    prices = 100 + np.concatenate([[0.0], np.cumsum(rng.choice([-0.1, 0.1], size=len(actions)))])
    trades = segment_trades(actions, prices, c)
    total = sum(t.gross_pnl - t.cost_paid for t in trades)
    assert total == pytest.approx(accounting_total(actions, np.diff(prices), c), abs=1e-9)
    assert total == pytest.approx(ledger_total(actions, prices, c), abs=1e-9)


@settings(max_examples=80)
@given(actions=actions_st)
def test_segmentation_partitions_positions(actions):
    prices = np.linspace(50, 60, len(actions) + 1)
    trades = segment_trades(actions, prices, 0.0)
    owner = {}
    for k, t in enumerate(trades):
        assert t.exit_index > t.entry_index
        assert t.direction != 0
        for i in range(t.entry_index, t.exit_index):
            assert i not in owner
            owner[i] = k
            assert actions[i] == t.direction
    assert set(owner) == {i for i, a in enumerate(actions) if a != 0}


@settings(max_examples=50)
@given(actions=actions_st, scale=st.floats(0.01, 100), seed=st.integers(0, 1000))
def test_rates_invariant_to_price_scale(actions, scale, seed):
    rng = np.random.default_rng(seed)
    prices = 100 + np.concatenate([[0.0], np.cumsum(rng.normal(0, 1, len(actions)))])
    a = evaluate(actions, prices, 0.05)
    b = evaluate(actions, prices * scale, 0.05 * scale)
    assert b.win_rate == a.win_rate
    assert b.return_avg == pytest.approx(a.return_avg, rel=1e-9, abs=1e-12)


def test_report_invariants():
    rep = evaluate([1, -1, 0, 1, 1, 0, -1], [5, 6, 4, 4, 5, 7, 6, 5], 0.2)
    assert rep.trade_num == 4
    assert 0 <= rep.win_rate <= 100
