import math
import sys
import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from skewsearch.oracle import (BASE_PARAMS, NOMINAL_CORNER, STANDARD_CORNERS, AdapterFailure, AnalyticCellModel,
                               ExternalOracle, PvtCorner, PvtSample, SimOutcome, external_adapter,
                               model_from_pvt, true_root)
from skewsearch.search import characterize

models = st.builds(AnalyticCellModel, d0=st.floats(1, 200), x_c=st.floats(-50, 50), lam=st.floats(0.1, 10),
                   alpha=st.floats(0.15, 20))


def test_sim_outcome_rejects_non_positive_delay():
    with pytest.raises(ValueError):
        SimOutcome(0.0)
    assert SimOutcome.failure().failed and not SimOutcome(1.0).failed


def test_large_skew_approaches_nominal():
    m = AnalyticCellModel(d0=40, x_c=18, lam=2, alpha=2)
    assert m.evaluate(1e4).delay == pytest.approx(40, rel=1e-12)


def test_root_skew_gives_exactly_110_percent():
    m = AnalyticCellModel(d0=40, x_c=18, lam=2, alpha=2)
    x = m.x_c + m.lam * math.log(m.alpha / 0.1)
    assert m.evaluate(x).delay == pytest.approx(1.1 * m.d0, rel=1e-12)


def test_failure_region():
    m = AnalyticCellModel(d0=40, x_c=18, lam=2, alpha=2)
    assert m.evaluate(m.x_c - 1).failed
    assert m.evaluate(m.x_c).failed


def test_true_root_examples():
    assert true_root(AnalyticCellModel(1, 0, 1, 1)) == pytest.approx(math.log(10), abs=1e-6)
    assert true_root(AnalyticCellModel(1, 3.0, 1, 0.1)) == pytest.approx(3.0, abs=1e-12)
    r1 = true_root(AnalyticCellModel(1, 2.0, 1, 1)) - 2.0
    r2 = true_root(AnalyticCellModel(1, 2.0, 2, 1)) - 2.0
    assert r2 == pytest.approx(2 * r1)


def test_hold_orientation_mirrors_about_x_c():
    setup = AnalyticCellModel(10, 5, 1, 2)
    hold = AnalyticCellModel(10, 5, 1, 2, fail_below=False)
    assert hold.delay_at(5 - 3) == setup.delay_at(5 + 3)
    assert hold.evaluate(6).failed
    assert hold.true_root() == pytest.approx(10 - setup.true_root())


def test_tail_makes_large_skews_non_monotone():
    m = AnalyticCellModel(10, 0, 1, 1, tail=0.01, x_tail=20)
    assert m.delay_at(40) > m.delay_at(20)


@given(models)
def test_ground_truth_closure(m):
    x = m.true_root()
    assert m.delay_at(x) == pytest.approx(1.1 * m.d0, rel=1e-9)


@given(models)
def test_delay_strictly_decreasing_on_search_side(m):
    xs = m.x_c + np.linspace(1e-6, 20 * m.lam, 2000)
    d = np.array([m.delay_at(x) for x in xs])
    assert np.all(np.diff(d) < 0)


@given(models, st.floats(0.2, 5.0), st.floats(-30, 30))
def test_counter_matches_search_calls(m, s0, offset):
    res = characterize(m, m.true_root() + offset, s0, "beira")
    assert res.oracle_calls == m.calls


def test_counter_is_thread_safe():
    m = AnalyticCellModel(10, 0, 1, 1)
    threads = [threading.Thread(target=lambda: [m.evaluate(5.0) for _ in range(500)]) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert m.calls == 4000


# -- PVT ---------------------------------------------------------------------

def test_corner_codes_and_table():
    assert [PvtCorner(p, 0.8, 25).code for p in ("TT", "FF", "SS")] == [0, 1, -1]
    with pytest.raises(ValueError):
        PvtCorner("XX", 0.8, 25)
    assert len(STANDARD_CORNERS) == 16 and len(set(STANDARD_CORNERS)) == 16
    assert PvtCorner("SS", 0.72, -40).label == "ss0p72vm40c"


def test_features_are_171_dimensional():
    s = PvtSample(PvtCorner("FF", 0.88, 125), np.zeros(168))
    f = s.features()
    assert f.shape == (171,)
    assert list(f[:3]) == [1, 0.88, 1.25]


def test_model_map_is_deterministic():
    u = np.random.default_rng(3).standard_normal(168)
    a = model_from_pvt(PvtSample(STANDARD_CORNERS[5], u.copy()), "dff", 7)
    b = model_from_pvt(PvtSample(STANDARD_CORNERS[5], u.copy()), "dff", 7)
    assert (a.d0, a.x_c, a.lam, a.alpha) == (b.d0, b.x_c, b.lam, b.alpha)


@pytest.mark.parametrize("topology", ["dff", "latch"])
def test_nominal_corner_gives_base_parameters(topology):
    m = model_from_pvt(PvtSample(NOMINAL_CORNER, np.zeros(168)), topology, 0)
    assert dict(d0=m.d0, x_c=m.x_c, lam=m.lam, alpha=m.alpha) == BASE_PARAMS[topology]


def test_slow_process_is_slower_than_fast():
    for v, t in [(0.8, 25), (0.88, 0), (0.72, 125)]:
        ss = model_from_pvt(PvtSample(PvtCorner("SS", v, t), np.zeros(168)), "dff", 0)
        ff = model_from_pvt(PvtSample(PvtCorner("FF", v, t), np.zeros(168)), "dff", 0)
        assert ss.d0 > ff.d0


def test_spreads_match_the_intended_scale():
    rng = np.random.default_rng(0)
    local = rng.standard_normal((200, 168))
    per_corner = []
    for c in STANDARD_CORNERS:
        roots = np.array([model_from_pvt(PvtSample(c, u), "dff", 0).true_root() for u in local])
        per_corner.append(roots)
        # local variation: roughly +-20% about the corner median
        spread = (np.percentile(roots, 97.5) - np.percentile(roots, 2.5)) / (2 * np.median(roots))
        assert 0.05 < spread < 0.35
    medians = [np.median(r) for r in per_corner]
    assert 2.0 < max(medians) / min(medians) < 4.5


# -- external adapter ----------------------------------------------------------

PY = sys.executable


def test_external_echo_delay():
    o = external_adapter(f"{PY} -c \"print('delay= 12.5')\" {{skew}}", "delay=,FAIL", 10.0)
    out = o.evaluate(3.0)
    assert out.delay == 12.5 and o.calls == 1


def test_external_failure_token():
    o = ExternalOracle(f"{PY} -c \"print('FAIL')\" {{skew}}")
    assert o.evaluate(1.0).failed


def test_external_nonzero_exit():
    o = ExternalOracle(f"{PY} -c \"import sys; sys.exit(3)\" {{skew}}")
    with pytest.raises(AdapterFailure):
        o.evaluate(1.0)


def test_external_unparseable_output():
    o = ExternalOracle(f"{PY} -c \"print('hello')\" {{skew}}")
    with pytest.raises(AdapterFailure):
        o.evaluate(1.0)


def test_external_passes_skew_and_searches():
    # a tiny "simulator": delay = 1 + exp(-(x - 2)) for x > 2
    script = "import math,sys; x=float(sys.argv[1]); print('FAIL' if x<=2 else 'delay=%r' % (1+math.exp(-(x-2))))"
    o = ExternalOracle(f"{PY} -c \"{script}\" {{skew}}", nominal_delay=1.0)
    res = characterize(o, 5.0, 1.0, "beira")
    assert abs(res.root - (2 + math.log(10))) <= 0.01
    assert res.oracle_calls == o.calls


def test_external_template_needs_placeholder():
    with pytest.raises(ValueError):
        ExternalOracle("echo 1")
