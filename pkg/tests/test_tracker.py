import numpy as np
import pytest

from mtnetkit.config import ConfigError, RunConfig
from mtnetkit.tracker import (Action, Mode, UpdateConfig, UpdateState, hann2d, replay, score_proposals, select_best,
                              update_step)
from mtnetkit.verify import reference_actions, statecheck

K, R, X = Action.KEEP, Action.REPLACE, Action.RESTORE


def test_hann_window():
    w = hann2d(32).reshape(32, 32)
    assert np.array_equal(w, w.T) and np.array_equal(w, w[::-1, ::-1])
    assert int(np.argmax(w)) == 15 * 32 + 15
    assert w.min() > 0 and w.max() < 1
    assert int(np.argmax(hann2d(5))) == 12


def test_score_blend_and_selection():
    p_cls = np.full(1024, 0.5)
    p_loc = np.full(1024, 0.5)
    p_cls[0] = 0.99
    s = score_proposals(p_cls, p_loc, 0.0)
    j, _, conf = select_best(s, p_cls, p_loc, np.zeros((1024, 4)))
    assert j == 0 and conf == pytest.approx(0.495)
    # pure window: centre wins, confidence stays unpenalized
    j, _, conf = select_best(score_proposals(p_cls, p_loc, 1.0), p_cls, p_loc, np.zeros((1024, 4)))
    assert j == 495 and conf == 0.25
    with pytest.raises(ValueError):
        score_proposals(p_cls, p_loc, 1.5)
    with pytest.raises(ValueError):
        score_proposals(np.ones(10), np.ones(10), 0.5)


def test_update_examples():
    cfg = UpdateConfig(M=3, N=2)
    assert replay([0.95, 0.95, 0.95], cfg) == [K, K, R]
    assert replay([0.95, 0.8, 0.95, 0.95], cfg) == [K, K, K, K]
    assert replay([0.5, 0.8, 0.5], cfg) == [K, K, X]
    assert replay([0.5, 0.95, 0.95, 0.95, 0.5], cfg) == [K, K, K, R, K]


def test_update_counters():
    cfg = UpdateConfig(M=5, N=3)
    st, _ = update_step(UpdateState(), 0.95, cfg, frame=1)
    assert st.mode is Mode.STEADY and st.steady_run == 1
    st, _ = update_step(st, 0.5, cfg, frame=2)
    assert st.mode is Mode.UNSTABLE and st.steady_run == 0 and st.unstable_acc == 1
    st, _ = update_step(st, 0.8, cfg, frame=3)
    assert st.mode is Mode.TRANSIENT and st.unstable_acc == 1
    with pytest.raises(ValueError):
        update_step(st, 1.5, cfg)


def test_replace_records_frame_and_restore_resets():
    st, a = update_step(UpdateState(), 0.95, UpdateConfig(M=1), frame=7)
    assert a is R and st.active_template == 7
    st, a = update_step(st, 0.1, UpdateConfig(N=1), frame=8)
    assert a is X and st.active_template == "initial"


def test_degenerate_stress_config_replaces_every_frame():
    cfg = UpdateConfig(M=1, hi=0.0, lo=0.0)
    assert replay([0.3, 0.01, 0.99, 0.5], cfg) == [R] * 4


def test_n_zero_acts_like_one():
    assert replay([0.5], UpdateConfig(N=0)) == [X]


def test_update_config_validation():
    for bad in ({"hi": 0.5, "lo": 0.7}, {"M": 0}, {"N": -1}, {"hi": 1.2}):
        with pytest.raises(ValueError):
            UpdateConfig(**bad)
    for M, N in ((50, 2), (70, 2)):
        assert RunConfig.from_dict({"update": {"M": M, "N": N}}).update == UpdateConfig(M=M, N=N)
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"update": {"M": 0}})


def test_reference_examples():
    assert reference_actions([0.95, 0.95], 2, 1) == [K, R]
    assert reference_actions([0.5, 0.8, 0.5], 3, 2) == [K, K, X]


def test_statecheck_small_grid():
    rep = statecheck(length=5, grid=((1, 1), (2, 3)))
    assert rep.passed and rep.total == 2 * 3 ** 5


def test_statecheck_catches_off_by_one_reference():
    def mutated(confs, M, N, hi=0.9, lo=0.7):
        return reference_actions(confs, M, N + 1, hi, lo)

    rep = statecheck(reference=mutated, length=4)
    assert not rep.passed
    trace, M, N, exp, got = rep.counterexample
    # shortest: a single low frame with N = 1
    assert len(trace) == 1 and N == 1 and got == [X]
    assert "counterexample" in "\n".join(rep.lines())
