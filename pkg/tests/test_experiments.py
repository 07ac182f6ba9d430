import math

import numpy as np
import pytest

from emcov.config import parse_scenario
from emcov.experiments import (
    Table,
    beamform_sweep,
    detection_sweep,
    null_depths,
    pd_crossing,
    run_trials,
    with_missingness,
)


def square(x):
    return x * x


def test_run_trials_keeps_order():
    assert run_trials(square, range(7)) == [0, 1, 4, 9, 16, 25, 36]
    assert run_trials(square, range(7), threads=2) == [0, 1, 4, 9, 16, 25, 36]


def test_table_formatting():
    t = Table(("a", "b", "c"), [dict(a=1, b=0.5, c="x"), dict(a=2, b=math.nan, c="y")])
    assert t.to_csv() == "a,b,c\n1,0.500000,x\n2,nan,y\n"
    assert t.where(c="y") == [t.rows[1]]


def test_pd_crossing_interpolates():
    assert pd_crossing([10, 12, 14], [0.2, 0.8, 1.0]) == pytest.approx(13.0)
    assert pd_crossing([10, 12], [0.95, 1.0]) == 10
    assert math.isnan(pd_crossing([10, 12], [0.1, 0.5]))


def test_null_depths_finds_interior_minimum():
    thetas = np.linspace(-90, 90, 721)
    gain = -40 * np.exp(-((thetas - 30) ** 2) / 0.5)
    (depth, where, interior), = null_depths(thetas, gain, [30.2])
    assert depth == pytest.approx(-40)
    assert where == 30 and interior
    (_, _, interior), = null_depths(thetas, thetas, [0.0])
    assert not interior


def scenario(**kw):
    doc = {
        "n_elements": 6,
        "jammers": [{"doa_deg": 40, "jnr_db": 20}],
        "sources": {"clustered": 2},
        "missingness": {"kind": "bernoulli", "p_m": 0.2},
        "snapshots": 30,
        "trials": 4,
        "seed": 2,
        "em": {"eps_likelihood": 1e-4},
        "beamform": {"k_grid": [12]},
        "detect": {"asnr_db": [0, 30], "rules": ["mdl"], "k1": 3},
    }
    doc.update(kw)
    return parse_scenario(doc)


def test_beamform_sweep_rows_and_pairing():
    t = beamform_sweep(scenario())
    assert len(t.rows) == 6
    by = {r["method"]: r["avg_si_db"] for r in t.rows}
    assert by["clairvoyant"] == pytest.approx(0.0, abs=1e-12)
    assert all(v <= 1e-9 for v in by.values())
    # paired design: the same trials with fewer methods give the same numbers
    sc = scenario(beamform={"k_grid": [12], "methods": ["EM_FML"]})
    assert beamform_sweep(sc).rows[0]["avg_si_db"] == by["EM_FML"]


def test_detection_sweep_shapes_and_extremes():
    t = detection_sweep(scenario())
    assert len(t.rows) == 2 * 4
    high = {r["method"]: r["pd"] for r in t.where(asnr_db=30.0)}
    assert high["complete"] == 1.0 and high["em"] == 1.0
    assert all(r["excluded_trials"] == 0 for r in t.rows)


def test_detection_sweep_guards():
    with pytest.raises(ValueError, match="snapshots"):
        detection_sweep(scenario(snapshots=4))
    with pytest.raises(ValueError, match="sources"):
        detection_sweep(scenario(sources=None))


def test_rank_deficient_draws_are_excluded():
    # with p_m = 0.5 and K = N, a column is often missing in every snapshot
    t = detection_sweep(scenario(snapshots=6, missingness={"kind": "bernoulli", "p_m": 0.5},
                                 trials=6, detect={"asnr_db": [20], "rules": ["aic"], "k1": 2,
                                                   "methods": ["zero_fill", "complete"]}))
    assert t.rows[0]["excluded_trials"] > 0
    assert t.rows[0]["trials"] == 6


def test_with_missingness():
    sc = with_missingness(scenario(), 0.3)
    assert sc.p_m == 0.3
