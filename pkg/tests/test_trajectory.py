import io
import math

import numpy as np
import pytest

from shelving import engine
from shelving.ensemble import oracle_mean_dark, summarize
from shelving.errors import BudgetExceeded, DepletedField
from shelving.model import ChannelKind, Phase, PhotonKind
from shelving.trajectory import CSV_HEADER, EmissionRecord, classify_periods, photon_kinds, run_trajectory


def _synthetic(p, gaps, t_end, codes=None):
    times = np.cumsum(np.asarray(gaps, dtype=float))
    codes = np.zeros(len(times), dtype=np.int8) if codes is None else np.asarray(codes, dtype=np.int8)
    return EmissionRecord(
        times=times,
        channels=codes,
        inflow=np.ones(len(times)),
        dark=np.zeros(len(times), dtype=bool),
        t_end=t_end,
        master_seed=0,
        trajectory_index=0,
        params=p,
        final_counts=(p.strong_photons - len(times), p.weak_photons),
    )


def test_too_short_horizon_gives_empty_record(params):
    r = run_trajectory(params, 0, 0, 1e-9 / params.strong_decay)
    assert len(r) == 0 and r.final_counts == r.initial_counts
    assert r.to_csv() == ",".join(CSV_HEADER) + "\n"
    (only,) = classify_periods(r)
    assert only.kind is Phase.FLUORESCENT and only.censored and only.photon_count == 0


def test_rejects_bad_horizon(params):
    with pytest.raises(ValueError):
        run_trajectory(params, 0, 0, 0.0)


def test_bare_mean_first_event(bare):
    first = np.array([run_trajectory(bare, 9, i, 200.0).times[0] for i in range(2000)])
    mean, se = first.mean(), first.std(ddof=1) / math.sqrt(first.size)
    assert abs(mean - 1 / (2 * bare.strong_decay)) < 3 * se


def test_bare_record_has_no_dark_periods(bare):
    r = run_trajectory(bare, 1, 0, 20_000.0)
    assert set(photon_kinds(r)) == {PhotonKind.STRONG_GAMMA}
    assert not any(q.kind is Phase.DARK for q in classify_periods(r))


def test_default_record_goes_dark(params):
    r = run_trajectory(params, 0, 0, 50 / params.weak_decay)
    periods = classify_periods(r)
    assert sum(q.kind is Phase.DARK for q in periods) >= 1


def test_single_long_gap_is_one_dark_period(params):
    beta = params.strong_decay
    r = _synthetic(params, [0.1 / beta, 0.1 / beta, 500 / beta], t_end=501 / beta)
    periods = classify_periods(r, gap_factor=20)
    assert [q.kind for q in periods] == [Phase.FLUORESCENT, Phase.DARK, Phase.FLUORESCENT]
    bright, dark, tail = periods
    assert bright.photon_count == 2 and not bright.censored
    assert dark.t_start == pytest.approx(0.2 / beta) and dark.t_end == pytest.approx(500.2 / beta)
    assert tail.censored and tail.photon_count == 1


def test_leading_and_trailing_silence(params):
    beta = params.strong_decay
    r = _synthetic(params, [100 / beta, 1 / beta], t_end=200 / beta)
    kinds = [(q.kind, q.censored) for q in classify_periods(r)]
    assert kinds == [(Phase.DARK, False), (Phase.FLUORESCENT, False), (Phase.DARK, True)]


def test_periods_alternate_and_tile(params):
    r = run_trajectory(params, 3, 0, 50_000.0)
    periods = classify_periods(r)
    assert periods[0].t_start == 0 and periods[-1].t_end == r.t_end
    for a, b in zip(periods, periods[1:]):
        assert a.kind is not b.kind and a.t_end == b.t_start
    assert sum(q.photon_count for q in periods) == len(r)
    assert all(q.censored == (q is periods[-1]) for q in periods)


def test_no_strong_events_inside_dark_periods(params):
    r = run_trajectory(params, 4, 0, 50_000.0)
    for q in classify_periods(r):
        if q.kind is Phase.DARK:
            inside = (r.times > q.t_start) & (r.times < q.t_end)
            assert not inside.any()


def test_dark_mean_matches_oracle(params):
    dark = np.concatenate(
        [summarize(run_trajectory(params, 21, i, 50_000.0)).dark_durations for i in range(30)]
    )
    assert dark.size > 500
    oracle = oracle_mean_dark(params, 20 / params.strong_decay)
    assert abs(dark.mean() - oracle) <= 0.15 * oracle


def test_same_seed_same_bytes(params):
    a = run_trajectory(params, 42, 7, 20_000.0).to_csv()
    b = run_trajectory(params, 42, 7, 20_000.0).to_csv()
    assert a == b
    assert a != run_trajectory(params, 43, 7, 20_000.0).to_csv()


def test_csv_layout(params):
    r = run_trajectory(params, 0, 0, 2000.0)
    buf = io.StringIO()
    r.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "time,photon_kind,channel,cycle_index"
    for i, line in enumerate(lines[1:]):
        t, kind, label, cycle = line.split(",")
        assert float(t) == r.times[i] and int(cycle) == i
        assert ChannelKind(int(r.channels[i])).label == label
        assert kind in ("gamma", "gamma_prime")


def test_event_view(params):
    r = run_trajectory(params, 0, 0, 5000.0)
    events = r.events
    assert [e.cycle_index for e in events] == list(range(len(r)))
    assert all(not e.channel.is_phantom for e in events)
    assert all(e.kind is e.channel.kind.photon for e in events)


def test_depletion_aborts(bare):
    with pytest.raises(DepletedField):
        run_trajectory(bare.replace(strong_photons=5), 0, 0, 1000.0)


def test_event_budget(bare):
    with pytest.raises(BudgetExceeded):
        run_trajectory(bare, 0, 0, 1e5, max_events=100)


def test_gap_factor_must_exceed_one(params):
    r = run_trajectory(params, 0, 0, 100.0)
    with pytest.raises(ValueError):
        classify_periods(r, gap_factor=1.0)


def test_rng_is_keyed_by_index(params):
    a = run_trajectory(params, 0, 0, 1000.0).times
    b = run_trajectory(params, 0, 1, 1000.0).times
    assert not np.array_equal(a, b)
    assert np.array_equal(engine.trajectory_rng(0, 1).random(3), engine.trajectory_rng(0, 1).random(3))
