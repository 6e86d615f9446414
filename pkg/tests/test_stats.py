import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mtsbwp.fluid import bad_history_scenario
from mtsbwp.profile import example1_profile
from mtsbwp.stats import flow_bandwidth, flow_samples, node_bandwidth, node_samples, weighted_band
from mtsbwp.traffic import Arrival

P = example1_profile()
FIN = 1316 / 45


def test_band_percentiles():
    b = weighted_band([1, 2, 3], [1, 1, 8], "time")
    assert b.mean == pytest.approx(2.7)
    assert (b.worst, b.best) == (1.0, 3.0)
    assert b.total == 10 and b.weight == "time"


def test_band_decile_means():
    b = weighted_band([1, 2, 3], [1, 1, 8], "time", mode="decile_mean")
    assert (b.worst, b.best) == (1.0, 3.0)
    b = weighted_band([1, 3], [0.5, 9.5], "time", mode="decile_mean")
    # worst tenth is half 1 and half 3
    assert b.worst == pytest.approx(2.0)
    assert b.best == 3.0


def test_band_edge_cases():
    assert weighted_band([], [], "flows") is None
    assert weighted_band([5.0], [0.0], "flows") is None
    b = weighted_band([4.0], [1.0], "flows")
    assert (b.mean, b.worst, b.best) == (4.0, 4.0, 4.0)
    with pytest.raises(ValueError):
        weighted_band([1.0], [1.0], "flows", mode="median")


@given(st.lists(st.tuples(st.floats(0, 10), st.floats(0.01, 5)), min_size=1, max_size=30))
def test_band_is_ordered(pairs):
    v, w = zip(*pairs)
    for mode in ("percentile", "decile_mean"):
        b = weighted_band(v, w, "time", mode)
        assert min(v) - 1e-9 <= b.worst <= b.best + 1e-9 <= max(v) + 2e-9
        assert b.worst <= b.mean + 1e-9 or mode == "percentile"


def test_node_bandwidth_on_bad_history():
    tr = bad_history_scenario(P).run()
    b = node_bandwidth(tr, 0, warmup=0)
    assert b.mean == pytest.approx(90 / FIN)
    assert (b.worst, b.best) == (3.0, 3.0)
    assert b.total == pytest.approx(FIN)
    v, w = node_samples(tr, 0, warmup=0)
    assert (v * w).sum() == pytest.approx(90.0)
    late = node_bandwidth(tr, 0, warmup=10)
    assert late.mean == pytest.approx(3.0) and late.total == pytest.approx(FIN - 10)
    # background nodes are always active until the horizon
    bg = node_bandwidth(tr, [1, 2, 3, 4], warmup=0)
    assert bg.total == pytest.approx(4 * 40)
    assert node_bandwidth(tr, 0, warmup=35) is None


def test_isolated_small_flow_gets_fastest_speed():
    sc = bad_history_scenario(P)
    sc.arrivals = [Arrival(0.0, 0, 0.8)]
    tr = sc.run()
    b = flow_bandwidth(tr, 0.8, 0, warmup=0)
    assert b.mean == pytest.approx(6.0, abs=1e-9)
    assert b.total == 1 and b.weight == "flows"


def test_flow_samples_filter_by_size_node_and_warmup():
    tr = bad_history_scenario(P).run()
    assert flow_samples(tr, 90.0, 0, warmup=0) == pytest.approx([90 / FIN])
    assert flow_samples(tr, 8.0, 0, warmup=0).size == 0
    assert flow_samples(tr, 90.0, 1, warmup=0).size == 0
    assert flow_samples(tr, 90.0, 0, warmup=1.0).size == 0
    assert flow_bandwidth(tr, 8.0, 0, warmup=0) is None


def test_samples_pool_across_traces():
    tr = bad_history_scenario(P).run()
    v, w = node_samples([tr, tr], 0, warmup=0)
    v1, w1 = node_samples(tr, 0, warmup=0)
    assert np.array_equal(v, np.concatenate([v1, v1]))
    assert w.sum() == pytest.approx(2 * w1.sum())
