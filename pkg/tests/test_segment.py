import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stagewise.errors import UsageError
from stagewise.psr import PSRConfig
from stagewise.segment import (
    Decision,
    SegmenterConfig,
    StreamState,
    classify_rates,
    divide_stages,
    fit_stage,
    score_stream,
)

from conftest import uniform_dataset

FAST = SegmenterConfig(psr=PSRConfig(tau=1, r=1))


def test_rates_below_alpha_continue():
    assert classify_rates([0.01, 0.02]) == [Decision.CONTINUE, Decision.CONTINUE]


def test_isolated_exceedance_discarded():
    assert classify_rates([0.20, 0.01]) == [Decision.PENDING, Decision.CONTINUE]


def test_rate_equal_to_alpha_is_not_abnormal():
    assert classify_rates([0.05, 0.05]) == [Decision.CONTINUE, Decision.CONTINUE]


def test_switch_at_first_of_consecutive_pair():
    # cycles 83 and 84 (relative to the stage start) exceed alpha
    st_ = StreamState(None, 16, 0.05, 2)
    decisions = {}
    for i in range(16, 90):
        decisions[i] = st_.observe(i, 0.3 if i in (83, 84) else 0.01)
        if decisions[i] is Decision.SWITCH:
            break
    assert decisions[83] is Decision.PENDING
    assert decisions[84] is Decision.SWITCH
    assert st_.pending_start == 83


def test_consecutive_required_three():
    assert classify_rates([0.2, 0.2, 0.01, 0.2, 0.2, 0.2], consecutive_required=3) == [
        Decision.PENDING, Decision.PENDING, Decision.CONTINUE,
        Decision.PENDING, Decision.PENDING, Decision.SWITCH]


@given(st.lists(st.floats(0, 1), max_size=40))
def test_isolated_exceedances_never_switch(rates):
    # break up every run so no two consecutive rates exceed alpha
    rates = [0.0 if i % 2 else r for i, r in enumerate(rates)]
    assert Decision.SWITCH not in classify_rates(rates, 0.05, 2)


def test_score_stream_rejects_non_adjacent():
    ds = uniform_dataset(20)
    model = fit_stage(ds.cycles[:15], FAST)
    state = StreamState(model, 16, 0.05)
    score, decision = score_stream(state, ds.cycle(16))
    assert decision is Decision.CONTINUE and 0 <= score.abnormality_rate <= 1
    with pytest.raises(UsageError):
        score_stream(state, ds.cycle(18))


def test_single_change_detected():
    seg = divide_stages(uniform_dataset(45, change=25), FAST)
    assert seg.ranges() == [(1, 24), (25, 45)]
    seg.check_partition()


def test_no_change_single_stage():
    seg = divide_stages(uniform_dataset(45), FAST)
    assert seg.ranges() == [(1, 45)]
    assert all(t.abnormality_rate <= 0.05 for t in seg.trace)


def test_two_changes_three_stages():
    ds = uniform_dataset(70, change=25)
    # second shift: move current too from cycle 48 on
    from stagewise.ingest import BatteryDataset, CycleRecord
    cycles = []
    for c in ds.cycles:
        v = dict(c.variables)
        if c.cycle_index >= 48:
            v["current"] = v["current"] + 4.0
        cycles.append(CycleRecord(c.cycle_index, c.time_s, v))
    seg = divide_stages(BatteryDataset("two", 2.0, tuple(cycles)), FAST)
    assert seg.ranges() == [(1, 24), (25, 47), (48, 70)]
    assert [s.start_cycle for s in seg.stages[1:]] == seg.boundaries() == [25, 48]


def test_short_tail_merged():
    seg = divide_stages(uniform_dataset(40, change=33), FAST)
    assert seg.ranges() == [(1, 40)]
    assert "short_tail" in seg.flags and "short_tail" in seg.stages[-1].flags
    assert [t.cycle for t in seg.trace] == list(range(1, 41))


def test_window_longer_than_dataset():
    with pytest.raises(UsageError):
        divide_stages(uniform_dataset(10), FAST)


def test_stage_lengths_respect_window():
    seg = divide_stages(uniform_dataset(60, change=20), FAST)
    assert all(s.length >= FAST.window for s in seg.stages[:-1])


def test_deterministic():
    ds = uniform_dataset(45, change=25, seed=3)
    cfg = SegmenterConfig()
    a = divide_stages(ds, cfg)
    b = divide_stages(ds, cfg)
    assert a.to_json() == b.to_json()


def test_outputs(tmp_path):
    seg = divide_stages(uniform_dataset(45, change=25), FAST)
    doc = json.loads(seg.write_json(tmp_path / "s.json").read_text())
    assert doc["n_stages"] == 2
    assert doc["stages"][1]["start_cycle"] == 25
    assert doc["config"]["window"] == 15
    lines = seg.write_scores_csv(tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "cycle,stage_id,AR,t2_limit,role"
    assert len(lines) == 46
    assert lines[25].split(",")[:2] == ["25", "2"]
    table = seg.table().splitlines()
    assert table[0].split() == ["Name", "No.", "of", "stages", "Range"]
    assert table[1].split() == ["uniform", "2", "1-24,25-45"]


def test_config_validation():
    with pytest.raises(UsageError):
        SegmenterConfig(window=2)
    with pytest.raises(UsageError):
        SegmenterConfig(consecutive_required=0)
    with pytest.raises(UsageError):
        SegmenterConfig(alpha=1.5)


def test_stage_metadata_auto_psr():
    seg = divide_stages(uniform_dataset(45, change=25))
    for s in seg.stages:
        assert s.tau >= 1 and s.r >= 1 and 1 <= s.d <= 3 * s.r and s.n_pcs <= s.d
    assert "psr_reselected_per_stage" in seg.flags
    assert "d_reselected_per_stage" in seg.flags
