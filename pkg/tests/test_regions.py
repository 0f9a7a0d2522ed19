import json
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from golden_regions import GOLDEN, actual
from radlab.errors import ClassifierRejection
from radlab.regions import (
    INF, ParameterPoint, classify, consistency_violations, embedding_check, markdown_table,
    rat, sweep_points,
)

SWEEP = dict(
    n_values=(2, 3, 4),
    s_values=[F(k, 4) for k in range(-4, 14)],
    p_values=[F(1, 2), F(2, 3), F(1), F(5, 4), F(3, 2), F(2), F(3), F(4)],
    q_values=[F(1, 2), F(1), F(3, 2), F(2), INF],
)


def big_sweep():
    return list(sweep_points(**SWEEP))


@pytest.mark.parametrize("kw,far,near,flags", GOLDEN,
                         ids=[f"{i:02d}" for i in range(len(GOLDEN))])
def test_golden(kw, far, near, flags):
    assert actual(classify(ParameterPoint(**kw))) == (far, near, flags)


def test_golden_table_size():
    assert len(GOLDEN) >= 20


def test_sweep_has_no_violations():
    pts = big_sweep()
    assert len(pts) >= 10_000
    bad = []
    for pp in pts:
        rep = classify(pp)
        v = consistency_violations(rep)
        if v:
            bad.append((pp.label(), v))
        # sharpness and far decay never overlap
        assert not (rep.sharp_far["value"] and rep.far["kind"] == "decay")
    assert not bad, bad[:5]


def test_log_only_on_threshold():
    for pp in sweep_points(n_values=(2, 3)):
        rep = classify(pp)
        if rep.near["kind"] == "log":
            assert pp.tau == pp.tau_star
            assert pp.cub_index <= 0


def test_threshold_exponent_is_zero():
    for pp in sweep_points(n_values=(2, 3)):
        rep = classify(pp)
        if pp.tau == pp.tau_star and rep.far["kind"] == "decay":
            assert rep.far_exponent == 0


def test_exact_and_deterministic():
    pp = ParameterPoint(2, F(1, 3), F(1, 12), F(3, 2), 1)
    a, b = classify(pp).to_json(), classify(pp).to_json()
    assert a == b
    # floats are mapped to the nearby simple fraction, strings parsed exactly
    assert ParameterPoint(2, 1 / 3, 0, 2, 2).s == F(1, 3)
    assert rat("1/3") == F(1, 3)
    rep = classify(ParameterPoint(2, 1, F(1, 3) - F(1, 12), 2, 2))
    assert rep.far["exponent"] == "0"


def test_json_round_trip():
    for kw, *_ in GOLDEN:
        pp = ParameterPoint(**kw)
        assert ParameterPoint.from_dict(json.loads(json.dumps(pp.to_dict()))) == pp
    d = json.loads(classify(ParameterPoint(2, 1, 0, 2, 2)).to_json())
    assert d["far"]["exponent"] == "-1/2"


@pytest.mark.parametrize("kw", [
    dict(n=1, s=1, p=2),
    dict(n=2, s=1, tau=-1, p=2),
    dict(n=2, s=1, p=0),
    dict(n=2, s=1, p=4, u=2, space="N"),
    dict(n=2, m=1, p=2, space="W"),
    dict(n=2, s=1, p=2, space="X"),
])
def test_rejections(kw):
    with pytest.raises(ClassifierRejection):
        classify(ParameterPoint(**kw))


def test_rejects_out_of_catalog():
    with pytest.raises(ClassifierRejection):
        classify(ParameterPoint(2, 1, p=2, q=2, u=4, space="N"))
    with pytest.raises(ClassifierRejection):
        classify(ParameterPoint(2, m=1, p=F(1, 2), u=2, space="W"))
    with pytest.raises(ClassifierRejection):
        embedding_check(ParameterPoint(2, 1), ParameterPoint(3, 1))


def test_embedding_examples():
    a = ParameterPoint(2, 2, 0, 2, 2)
    b = ParameterPoint(2, 1, 0, 2, 2)
    assert embedding_check(a, b).relation == "embeds"
    assert embedding_check(b, a).relation == "unknown"
    n = ParameterPoint(2, 1, p=2, q=INF, u=4, space="N")
    t = ParameterPoint(2, 1, F(1, 4), 2, INF)
    r = embedding_check(n, t)
    assert r.relation == "equal" and not r.proper
    n2 = ParameterPoint(2, 1, p=2, q=2, u=4, space="N")
    t2 = ParameterPoint(2, 1, F(1, 4), 2, 2)
    r = embedding_check(n2, t2)
    assert r.relation == "embeds" and r.proper
    assert embedding_check(t2, n2).relation == "unknown"
    assert embedding_check(a, a).relation == "equal"


_pts = st.builds(
    ParameterPoint, st.just(2),
    st.sampled_from([F(1, 2), F(1), F(3, 2), F(2)]),
    st.sampled_from([F(0), F(1, 8), F(1, 4)]),
    st.sampled_from([F(1), F(2), F(4)]),
    st.sampled_from([F(1), F(2), INF]),
)


@settings(max_examples=40, deadline=None)
@given(_pts, _pts, _pts)
def test_embedding_transitive(a, b, c):
    ab, bc = embedding_check(a, b), embedding_check(b, c)
    if ab.relation != "unknown" and bc.relation != "unknown":
        assert embedding_check(a, c).relation != "unknown"


def test_markdown_table():
    pts = list(sweep_points(n_values=(2,), s_values=[F(1)], p_values=[F(2)], q_values=[F(2)]))
    md = markdown_table(pts)
    lines = md.strip().splitlines()
    assert lines[0].startswith("|") and len(lines) == len(pts) + 2


def test_sobolev_morrey_examples():
    rep = classify(ParameterPoint(2, m=1, p=2, u=2, space="W"))
    assert rep.far["exponent"] == "-1/2"
    rep = classify(ParameterPoint(3, m=2, p=1, u=F(6, 5), space="W"))
    assert not rep.embeds_cub["value"]
    # p = 1 sits outside the near-origin statement, which needs p > 1
    rep = classify(ParameterPoint(2, m=1, p=1, u=2, space="W"))
    assert rep.near["kind"] == "unknown" and rep.notes
