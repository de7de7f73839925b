import filecmp
from dataclasses import replace

import numpy as np
import pytest

from incomenet.data_model import BINARY_SCHEMA, FIVE_CLASS_SCHEMA
from incomenet.errors import ConfigError
from incomenet.ingestion import parse_bank, parse_cdr
from incomenet.synthgen import SynthConfig, calibrate_homophily, generate, measured_homophily

SMALL = SynthConfig(n_users=800, seed=3)


def test_full_homophily_has_no_cross_edges():
    d = generate(replace(SMALL, homophily=1.0), BINARY_SCHEMA)
    assert np.all(d.category[d.ev_src] == d.category[d.ev_dst])


def test_zero_homophily_mixes_uniformly():
    d = generate(replace(SMALL, n_users=4000, homophily=0.0), FIVE_CLASS_SCHEMA)
    pi = np.bincount(d.category, minlength=6)[1:] / d.ids.size
    g = d.to_graph()
    same = np.mean(d.category[g.src] == d.category[g.dst])
    assert same == pytest.approx(np.sum(pi**2), abs=0.05)
    assert measured_homophily(g) == pytest.approx(0.0, abs=0.05)


def test_truth_matches_emitted_incomes():
    d = generate(SMALL, FIVE_CLASS_SCHEMA)
    lab = d.labeled
    assert np.array_equal(FIVE_CLASS_SCHEMA.categorize_array(d.avg_income()[lab]), d.category[lab])
    assert np.array_equal(FIVE_CLASS_SCHEMA.categorize_array(d.income), d.category)
    # jitter stays within the clamp
    rel = np.abs(d.monthly[lab] / d.income[lab, None] - 1)
    assert rel.max() <= 0.1 + 1e-3


def test_shape_of_generated_data():
    d = generate(SMALL, BINARY_SCHEMA)
    assert d.labeled.sum() == 400
    assert list(d.ids) == sorted(d.ids)
    assert np.all(d.ev_src != d.ev_dst)
    assert np.all(np.diff(d.ev_time) >= 0)
    assert np.all(d.ev_duration[d.ev_sms] == 0)
    assert np.mean(d.ev_sms) == pytest.approx(SMALL.sms_fraction, abs=0.02)


def test_files_round_trip_and_are_deterministic(tmp_path):
    d = generate(SMALL, BINARY_SCHEMA)
    paths = d.write(tmp_path / "a")
    generate(SMALL, BINARY_SCHEMA).write(tmp_path / "b")
    for name in ("cdr.csv", "bank.csv", "truth.csv"):
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False)
    with open(paths["cdr"]) as fh:
        recs, rep = parse_cdr(fh)
    assert rep.n_rejected == 0 and len(recs) == d.n_events
    with open(paths["bank"]) as fh:
        clients, rep = parse_bank(fh)
    assert rep.n_rejected == 0 and len(clients) == d.labeled.sum()
    got = {c.phone: c.avg_income for c in clients}
    expected = dict(zip(d.ids[d.labeled], d.avg_income()[d.labeled]))
    assert got == pytest.approx(expected, abs=1e-9)


def test_different_seeds_differ():
    a = generate(SMALL, BINARY_SCHEMA)
    b = generate(replace(SMALL, seed=4), BINARY_SCHEMA)
    assert not np.array_equal(a.income, b.income)


def test_config_errors():
    with pytest.raises(ConfigError):
        generate(SynthConfig(n_users=10, mean_degree=20), BINARY_SCHEMA)
    with pytest.raises(ConfigError):
        SynthConfig(homophily=1.5).validate()
    with pytest.raises(ConfigError):
        SynthConfig(k=5).validate(BINARY_SCHEMA)


def test_homophily_increases_with_h():
    rs = [measured_homophily(generate(replace(SMALL, n_users=3000, homophily=h), BINARY_SCHEMA).to_graph()) for h in (0.2, 0.5, 0.8)]
    assert rs == sorted(rs)


def test_calibration_hits_target():
    h, r = calibrate_homophily(replace(SMALL, n_users=3000), BINARY_SCHEMA, target=0.3, tol=0.01)
    assert abs(r - 0.3) <= 0.01
    assert 0 < h < 1
