from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtsbwp.alloc import allocate, bounds
from mtsbwp.profile import (
    ProfileConfig,
    ProfileError,
    Requirements,
    adjusted_flow_speed,
    dimension,
    dimension_bucket_sizes,
    dimension_rates,
    dimension_timescales,
    example1_profile,
    example1_requirements,
    packet_bucket_sizes,
    solve_target_flow_speed,
    trtcm_profile,
    validate,
)

from oracles import bucket_sizes_by_hand

EXAMPLE1_RATES = [[2, 2, 2, 0.75], [4, 2, 1, 0.25], [10, 10, 1, 1], [10, 10, 10, 10]]
TS1 = [0, Fraction(2, 15), 2, 30]


def test_example1_rates_match_worked_matrix():
    r = dimension_rates(example1_requirements())
    np.testing.assert_allclose(r, EXAMPLE1_RATES, rtol=0, atol=1e-9)
    assert r[:3, -1].sum() == 2.0


def test_capacity_fill_leaves_row3_at_capacity():
    r = dimension_rates(example1_requirements(), free_fill="capacity")
    assert r[2].tolist() == [10, 10, 10, 1]
    np.testing.assert_allclose(np.delete(r, 2, axis=0), np.delete(np.array(EXAMPLE1_RATES), 2, axis=0))


def test_single_node_rejected():
    req = Requirements(2.0, 1, (2, 2), (2.0,), (1.0,))
    with pytest.raises(ProfileError, match="2 nodes"):
        dimension_rates(req)


def test_raised_long_term_guarantee_is_infeasible():
    req = replace(example1_requirements(), guaranteed=(2, 2, 2, 2))
    with pytest.raises(ProfileError, match="DP 2, TS 4 is negative"):
        dimension_rates(req)


@pytest.mark.parametrize(
    "field,value,msg",
    [
        ("guaranteed", (2, 2.5, 2, 0.75), "non-increasing"),
        ("speeds", (6, 6, 3), "strictly decreasing"),
        ("file_sizes", (0.8, 0.8, 90), "strictly increasing"),
        ("guaranteed", (2.5, 2, 2, 0.75), "exceeds nominal"),
        ("speeds", (6, 4, 2), "must exceed nominal"),
    ],
)
def test_requirement_invariants(field, value, msg):
    with pytest.raises(ProfileError, match=msg):
        replace(example1_requirements(), **{field: value}).check()


def test_timescales_example1():
    ts = dimension_timescales(example1_requirements())
    np.testing.assert_allclose(ts, [0, 0.8 / 6, 2, 30], rtol=1e-12)
    np.testing.assert_allclose(ts, [0, 0.13333, 2, 30], atol=1e-5)


def test_ts_last_recomputes_largest_file():
    req = replace(example1_requirements(), file_sizes=(0.8, 8.0, 1.0))
    assert req.effective_file_sizes[-1] == 90.0  # 11.25 GByte
    assert dimension_timescales(req)[-1] == 30.0


def test_zero_file_sizes_rejected():
    req = Requirements(10, 5, (2, 2, 2, 0.75), (6, 4, 3), (0, 0, 0))
    with pytest.raises(ProfileError):
        dimension_timescales(req)


def test_bucket_sizes_example1():
    expected = bucket_sizes_by_hand(EXAMPLE1_RATES, TS1)
    assert expected == [
        [0, 0, 0, Fraction(75, 2)],
        [0, Fraction(4, 15), Fraction(34, 15), Fraction(743, 30)],
        [0, 0, 18, 18],
        [0, 0, 0, 0],
    ]
    bs = dimension_bucket_sizes(EXAMPLE1_RATES, [float(t) for t in TS1])
    np.testing.assert_allclose(bs, np.array(expected, dtype=float), atol=1e-12)
    # rounded values as usually quoted
    np.testing.assert_allclose(
        bs, [[0, 0, 0, 37.5], [0, 0.26667, 2.26667, 24.76667], [0, 0, 18, 18], [0, 0, 0, 0]], atol=1e-5
    )


def test_constant_rows_need_no_buckets():
    assert dimension_bucket_sizes([[3, 3, 3, 3]], [0, 1, 2, 3]).tolist() == [[0, 0, 0, 0]]


def test_increasing_row_gives_negative_bucket():
    with pytest.raises(ProfileError, match="negative bucket"):
        dimension_bucket_sizes([[1, 2, 2, 2]], [0, 1, 2, 3])


def test_adjusted_flow_speed():
    assert adjusted_flow_speed(6, 4, 2 / 15, 2) == pytest.approx(4.1333, abs=1e-4)
    assert adjusted_flow_speed(4, 4, 0.3, 2) == pytest.approx(4)
    assert adjusted_flow_speed(6, 4, 1, 2) == pytest.approx(5.0)


def test_solve_target_flow_speed():
    assert solve_target_flow_speed(62 / 15, 6, 2 / 15, 2) == pytest.approx(4.0, abs=1e-12)
    assert solve_target_flow_speed(4.1333, 6, 0.13333, 2) == pytest.approx(4.0, abs=1e-3)
    assert solve_target_flow_speed(6, 6, 0.5, 2) == pytest.approx(6)
    assert solve_target_flow_speed(5.0, 6, 1, 2) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        solve_target_flow_speed(0.3, 6, 0.1, 2)


@given(
    bw1=st.floats(0.1, 100),
    ts2=st.floats(0.01, 10),
    span=st.floats(0.01, 100),
    frac=st.floats(0.01, 1.0),
)
def test_solve_inverts_adjusted(bw1, ts2, span, frac):
    ts3 = ts2 + span
    floor = ts2 * bw1 / ts3
    target = floor + frac * bw1
    bw2 = solve_target_flow_speed(target, bw1, ts2, ts3)
    assert adjusted_flow_speed(bw1, bw2, ts2, ts3) == pytest.approx(target, abs=1e-9, rel=1e-12)


def test_packet_bucket_sizes():
    assert packet_bucket_sizes([[0.0]], [[2.0]], 1500, 0.01)[0, 0] == pytest.approx(0.02)
    bs = np.array([[0.0, 0.5]])
    np.testing.assert_allclose(packet_bucket_sizes(bs, [[1.0, 1.0]], 1e-9, 0.0), [[8e-18, 0.5]])
    p = example1_profile()
    assert packet_bucket_sizes(p.bs, p.r, 1500, 0.1)[0, 3] == 37.5
    with pytest.raises(ValueError):
        packet_bucket_sizes(bs, bs, 0, 0.1)


def test_example1_validates_clean():
    rep = validate(example1_profile(), 10, 5)
    assert rep.findings == []
    assert rep.ok


def _errors(p):
    return [f.rule for f in validate(p, 10, 5).errors]


def test_validate_zero_last_row():
    p = example1_profile()
    r = p.r.copy()
    r[3] = 0
    assert _errors(ProfileConfig(r, p.bs, p.ts)) == ["work-conserving"]


def test_validate_single_inversion():
    p = example1_profile()
    r = p.r.copy()
    r[0] = [2, 3, 2, 1]
    rep = validate(ProfileConfig(r, p.bs, p.ts), 10, 5)
    mono = [f for f in rep.errors if f.rule == "monotone"]
    assert len(mono) == 1
    assert "R[1,2]" in mono[0].message


@pytest.mark.parametrize(
    "dp,ts,value,rule",
    [
        (3, 3, 1.0, "work-conserving"),
        (0, 0, 3.0, "guarantee"),
        (1, 3, 0.5, "return-rule"),
        (2, 1, 10.5, "monotone"),
    ],
)
def test_single_perturbation_gives_matching_error(dp, ts, value, rule):
    p = example1_profile()
    r = p.r.copy()
    r[dp, ts] = value
    assert _errors(ProfileConfig(r, p.bs, p.ts)) == [rule]


def test_bucket_mismatch_is_only_a_warning():
    p = example1_profile()
    bs = p.bs.copy()
    bs[1, 3] = 20
    rep = validate(ProfileConfig(p.r, bs, p.ts), 10, 5)
    assert rep.ok
    assert [f.rule for f in rep.findings] == ["bucket-consistency"]


def test_trtcm_profile_shape_and_validation():
    p = trtcm_profile(2, 8)
    assert (p.n_dp, p.n_ts) == (2, 1)
    assert p.r.tolist() == [[2], [8]]
    assert validate(p, 10, 5).ok
    assert trtcm_profile(0, 0).r.sum() == 0


def test_trtcm_single_active_node_gets_whole_link():
    p = trtcm_profile(2, 8)
    tokens = np.zeros((5, 2, 1))
    flows = [3, 0, 0, 0, 0]
    res = allocate(bounds(p.r, tokens, flows), flows, 10.0)
    assert res.th.tolist() == [10, 0, 0, 0, 0]


def test_profile_json_roundtrip(tmp_path):
    p = example1_profile()
    p.save(tmp_path / "p.json")
    q = ProfileConfig.load(tmp_path / "p.json")
    assert np.array_equal(p.r, q.r) and np.array_equal(p.bs, q.bs) and np.array_equal(p.ts, q.ts)
    assert set(p.to_dict()) == {"n_dp", "n_ts", "r", "bs", "ts"}


def test_profile_is_read_only():
    p = example1_profile()
    with pytest.raises(ValueError):
        p.r[0, 0] = 5


def test_requirements_from_gbyte_json():
    req = Requirements.from_dict(
        {
            "capacity_gbps": 10,
            "nodes": 5,
            "guaranteed_gbps": [2, 2, 2, 0.75],
            "speeds_gbps": [6, 4, 3],
            "file_sizes_gbyte": [0.1, 1, 11.25],
        }
    )
    assert req.file_sizes == (0.8, 8.0, 90.0)


@st.composite
def requirements(draw):
    n = draw(st.integers(2, 10))
    c = draw(st.floats(1, 100))
    sn = c / n
    bw_last = draw(st.floats(1.01, 3)) * sn
    bw = sorted({bw_last * draw(st.floats(1, 4)) for _ in range(2)} | {bw_last}, reverse=True)
    bw = [min(b, c) for b in bw]
    if len(set(bw)) != len(bw):
        bw = [bw_last]
    g = sorted((draw(st.floats(0, 1)) * sn for _ in range(len(bw) + 1)), reverse=True)
    sizes = [1.0 * (k + 1) * 10 ** k for k in range(len(bw))]
    return Requirements(c, n, tuple(g), tuple(bw), tuple(sizes))


@settings(max_examples=200)
@given(requirements())
def test_accepted_requirements_give_monotone_return_rule(req):
    try:
        r = dimension_rates(req)
    except ProfileError:
        return
    assert np.all(np.diff(r, axis=1) <= 1e-9)
    assert r[:3, -1].sum() == pytest.approx(req.nominal_speed, abs=1e-12)
    try:
        p = dimension(req)
    except ProfileError:
        return
    assert np.all(p.bs >= 0) and np.all(p.bs[:, 0] == 0)
