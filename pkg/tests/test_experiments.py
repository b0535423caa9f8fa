import numpy as np
import pytest

from bubbleflow import evolution as Ev
from bubbleflow import experiments as X
from bubbleflow.ansatz import build_U2
from bubbleflow.params import AnsatzParams, ConfigError
from bubbleflow.profiles import C3


@pytest.fixture(scope="module")
def p3():
    return AnsatzParams(gamma=3.0)


@pytest.fixture(scope="module")
def bisection(p3):
    return X.threshold_bisection(p3)


def test_outcome_labels():
    log = Ev.EvolutionLog()
    for reason, label in [("decayed", X.DECAY), ("blow-up", X.BLOWUP), ("dt-underflow", X.BLOWUP),
                          ("horizon", X.UNDECIDED), ("max-steps", X.UNDECIDED)]:
        log.reason = reason
        assert X.outcome_of(log) == label


def test_grid_spec_resolves_core(p3):
    g = X.GridSpec().build(p3, 1e7)
    mu = float(p3.mu0(p3.t0)[0])
    assert g.r[0] <= 1e-3 * mu
    assert g.r_max == pytest.approx(50 * np.sqrt(1e7))


def test_initial_field_is_bubble_height(p3):
    ans = build_U2(p3)
    g = X.GridSpec().build(p3, 1e7)
    u0 = X.initial_field(ans, g)
    mu = float(p3.mu0(p3.t0)[0])
    assert u0.values.max() == pytest.approx(C3 * mu ** -0.5, rel=1e-3)
    assert u0.t == p3.t0


def test_dichotomy_ends(bisection):
    lo, hi = bisection.runs[:2]
    assert (lo.scale, lo.outcome) == (0.5, X.DECAY)
    assert (hi.scale, hi.outcome) == (1.5, X.BLOWUP)
    assert hi.sup_end > Ev.BLOWUP_LEVEL and lo.sup_end < Ev.DECAY_FLOOR


def test_bisection_bracket(bisection):
    assert bisection.bracketed
    assert bisection.width <= 0.1
    assert len(bisection.runs) <= 8
    # ordering: every decaying scale lies below every blowing-up scale
    dec = [r.scale for r in bisection.runs if r.outcome == X.DECAY]
    bl = [r.scale for r in bisection.runs if r.outcome == X.BLOWUP]
    assert max(dec) < min(bl)
    assert bisection.lo == max(dec) and bisection.hi == min(bl)


def test_bracket_stable_under_refinement(p3, bisection):
    # the midpoint of the coarse bracket keeps its label on a doubled grid
    mid = 0.5 * (bisection.lo + bisection.hi)
    coarse = X.threshold_bisection(p3, lo=bisection.lo, hi=bisection.hi, width=1.0)
    fine = X.threshold_bisection(p3, lo=bisection.lo, hi=bisection.hi, width=1.0,
                                 grid=X.GridSpec(n=2400))
    assert fine.bracketed and coarse.bracketed
    labels = []
    for spec in (X.GridSpec(), X.GridSpec(n=2400)):
        ans = build_U2(p3)
        u0 = X.initial_field(ans, spec.build(p3, 1e7))
        labels.append(X._run_scaled((u0, mid, 1e7, Ev.StepControls(rtol=1e-5))).outcome)
    assert labels[0] == labels[1]


def test_bisection_stops_without_bracket(p3):
    res = X.threshold_bisection(p3, lo=1.2, hi=1.5)
    assert not res.bracketed
    assert len(res.runs) == 2


def test_bisection_rejects_bad_bracket(p3):
    with pytest.raises(ConfigError):
        X.threshold_bisection(p3, lo=1.5, hi=0.5)
    with pytest.raises(ConfigError):
        X.threshold_bisection(p3, max_runs=1)


def test_tracking_starts_on_the_bubble(p3):
    tr = X.track_ansatz(p3)
    assert tr.deviation[0] < 1e-4
    assert tr.t[0] == p3.t0


def test_rate_table():
    rows = {r.gamma: r for r in X.rate_table()}
    assert rows[3.0].error < 1e-6 and not rows[3.0].fit.log_correction
    assert rows[1.5].error < 1e-6 and not rows[1.5].fit.log_correction
    assert rows[2.0].fit.log_correction
    assert rows[2.0].fit.log_power == pytest.approx(-1.0, abs=1e-8)


@pytest.mark.parametrize("gamma", [1.2, 1.5, 1.8, 2.5, 3.0, 4.0])
def test_expected_exponent_matches_scale_law(gamma):
    row = X.rate_table(gammas=(gamma,))[0]
    assert row.error < 1e-6
