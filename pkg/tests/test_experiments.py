import math
from dataclasses import replace

import pytest

from passive_tfqkd.errors import ConfigurationError
from passive_tfqkd.experiments import (ExperimentConfig, GridRange, OptimizerConfig, PointEvaluator,
                                       SchemeParams, csv_header, dump_config, evaluate_point,
                                       format_number, optimize_point, parse_config, read_sweep,
                                       run_sweep)
from passive_tfqkd.keyrate import plob_bound

# first full runs of this implementation, default configuration
INFINITE_0KM_MU005_RATE = 0.004008538236564634
# (rate, mu_laser, t1, t2, t3)
PASSIVE4_100KM_OPTIMUM = (0.00032494567112491176, 0.06142857142857143, 0.6714285714285714,
                          0.5785714285714285, 0.75)


def tiny(**changes):
    opt = OptimizerConfig(mu_laser=GridRange(0.1, 0.3, 3), t1=GridRange(0.5, 0.7, 2),
                          t2=GridRange(0.5, 0.7, 2), cascade_t=GridRange(0.7, 0.7, 1),
                          mu_code=GridRange(0.02, 0.06, 3), decoy_max=GridRange(0.1, 0.2, 2))
    return replace(ExperimentConfig(optimizer=opt), **changes)


# -- configuration ------------------------------------------------------------

def test_defaults_are_reference_parameters():
    cfg = ExperimentConfig()
    ch = cfg.channel
    assert (ch.charlie_det.eta, ch.charlie_det.dark) == (0.2, 1e-7)
    assert (ch.loss_db_per_km, ch.f_ec, ch.e_d) == (0.2, 1.15, 0.03)
    assert (cfg.source_det.eta, cfg.source_det.dark) == (0.2, 1e-7)
    assert cfg.distances_km[0] == 0.0 and cfg.distances_km[-1] == 400.0
    assert len(cfg.distances_km) == 21
    opt = cfg.optimizer
    assert (opt.mu_laser.lo, opt.mu_laser.hi, opt.mu_laser.points) == (0.02, 0.6, 15)
    assert (opt.t1.points, opt.t2.points, opt.cascade_t.points) == (8, 8, 5)


def test_config_round_trip():
    text = """
    # comment line
    channel.loss_db_per_km = 0.18
    channel.e_d = 0.02
    sweep.schemes = passive4, infinite
    sweep.distances_km = 0:100:50
    optimizer.mu_laser = 0.1:0.4:4
    optimizer.cascade_t = 0.6
    output.precision = 8
    lp.anchor8 = n0,n1,n2
    """
    cfg = parse_config(text)
    assert cfg.channel.loss_db_per_km == 0.18
    assert cfg.schemes == ("passive4", "infinite")
    assert cfg.distances_km == (0.0, 50.0, 100.0)
    assert cfg.optimizer.mu_laser == GridRange(0.1, 0.4, 4)
    assert cfg.optimizer.cascade_t == GridRange(0.6, 0.6, 1)
    assert parse_config(dump_config(cfg)) == cfg
    assert parse_config(dump_config(ExperimentConfig())) == ExperimentConfig()


@pytest.mark.parametrize("text", [
    "channel.colour = red",
    "sweep.schemes = passive5",
    "optimizer.cascade_t = 0.4:0.9:3",
    "optimizer.cascade_t = 0.6:1.0:3",
    "optimizer.t1 = 0.9:0.3:4",
    "optimizer.t1 = 0.3:0.9",
    "channel.e_d = lots",
    "sweep.distances_km = 0:100:0",
    "sweep.distances_km = -20, 0",
    "output.precision = 0",
    "run.threads = 0",
    "source.convention = quantum",
    "lp.gains4 = some",
    "no equals sign",
    "channel.e_d = 0.01\nchannel.e_d = 0.02",
])
def test_bad_config_rejected(text):
    with pytest.raises(ConfigurationError):
        parse_config(text)


def test_empty_distance_list():
    assert parse_config("sweep.distances_km =").distances_km == ()


# -- single points ------------------------------------------------------------

def test_plob_reports_only_the_bound():
    cfg = ExperimentConfig()
    rep = evaluate_point(cfg, "plob", 100.0, SchemeParams())
    assert rep.rate == plob_bound(cfg.channel.at(100.0).eta_total)
    assert rep.caps is None and rep.yields is None
    assert math.isnan(rep.i_ae) and math.isnan(rep.q_mu)


def test_infinite_at_zero_distance():
    rep = evaluate_point(ExperimentConfig(), "infinite", 0.0, SchemeParams(mu_code=0.05))
    assert rep.rate > 0
    assert rep.rate == pytest.approx(INFINITE_0KM_MU005_RATE, rel=1e-9)
    assert 0.0 <= rep.i_ae <= 1.0 and rep.rate <= rep.q_mu


@pytest.mark.parametrize("scheme,params", [
    ("passive2", SchemeParams(mu_laser=0.0, t1=0.5, t2=0.5)),
    ("passive4", SchemeParams(mu_laser=0.0, t1=0.5, t2=0.5, cascade_ts=(0.7,))),
    ("passive8", SchemeParams(mu_laser=0.0, t1=0.5, t2=0.5, cascade_ts=(0.7, 0.6))),
    ("active2", SchemeParams(mu_code=0.0, decoys=(0.0, 0.1))),
    ("infinite", SchemeParams(mu_code=0.0)),
])
def test_no_signal_gives_no_key(scheme, params):
    rep = evaluate_point(ExperimentConfig(), scheme, 50.0, params)
    assert rep.rate <= 0.0


def test_evaluation_is_deterministic():
    params = SchemeParams(mu_laser=0.2, t1=0.5, t2=0.5, cascade_ts=(0.7,))
    a = evaluate_point(ExperimentConfig(), "passive4", 120.0, params)
    b = evaluate_point(ExperimentConfig(), "passive4", 120.0, params)
    assert a.rate == b.rate and a.i_ae == b.i_ae


def test_report_invariants():
    ev = PointEvaluator(ExperimentConfig())
    for dist in (0.0, 100.0, 200.0):
        rep = ev.evaluate("passive4", dist, SchemeParams(mu_laser=0.2, t1=0.5, t2=0.5,
                                                         cascade_ts=(0.7,)))
        assert 0.0 <= rep.i_ae <= 1.0
        assert rep.rate <= rep.q_mu
        assert rep.lp_gap_y11 >= -1e-12


# -- optimization -------------------------------------------------------------

def test_single_point_ranges_return_that_point():
    opt = OptimizerConfig(mu_laser=GridRange(0.25, 0.25, 1), t1=GridRange(0.6, 0.6, 1),
                          t2=GridRange(0.55, 0.55, 1), cascade_t=GridRange(0.75, 0.75, 1))
    cfg = ExperimentConfig(optimizer=opt)
    res = optimize_point(cfg, "passive4", 60.0)
    assert (res.params.mu_laser, res.params.t1, res.params.t2) == (0.25, 0.6, 0.55)
    assert res.params.cascade_ts == (0.75,)
    assert res.evaluations == 1
    direct = evaluate_point(cfg, "passive4", 60.0, res.params)
    assert res.report.rate == direct.rate


def test_result_is_coordinatewise_optimal():
    cfg = tiny()
    res = optimize_point(cfg, "passive2", 40.0)
    p = res.params
    ev = PointEvaluator(cfg)
    base = {"mu_laser": p.mu_laser, "t1": p.t1, "t2": p.t2}
    for name, grid in (("mu_laser", cfg.optimizer.mu_laser), ("t1", cfg.optimizer.t1),
                       ("t2", cfg.optimizer.t2)):
        for v in grid.values:
            trial = dict(base, **{name: float(v)})
            rate = ev.evaluate("passive2", 40.0, SchemeParams(**trial)).rate
            assert rate <= res.report.rate


def test_refinement_never_worse_than_grid():
    cfg = tiny()
    res = optimize_point(cfg, "active2", 60.0)
    ev = PointEvaluator(cfg)
    grid_best = max(
        ev.evaluate("active2", 60.0, SchemeParams(mu_code=float(m), decoys=(0.0, float(v)))).rate
        for m in cfg.optimizer.mu_code.values for v in cfg.optimizer.decoy_max.values)
    assert res.report.rate >= grid_best


def test_all_negative_flag():
    res = optimize_point(tiny(), "passive2", 300.0)
    assert res.report.rate <= 0
    assert res.all_negative


def test_passive4_optimum_at_100km():
    res = optimize_point(ExperimentConfig(), "passive4", 100.0)
    rate, mu_laser, t1, t2, t3 = PASSIVE4_100KM_OPTIMUM
    assert res.report.rate == pytest.approx(rate, rel=1e-9)
    assert res.params.mu_laser == pytest.approx(mu_laser, abs=1e-12)
    assert (res.params.t1, res.params.t2) == pytest.approx((t1, t2), abs=1e-12)
    assert res.params.cascade_ts == pytest.approx((t3,), abs=1e-12)


# -- sweeps -------------------------------------------------------------------

def test_plob_sweep():
    cfg = parse_config("sweep.schemes = plob\nsweep.distances_km = 0:100:50")
    rows = read_sweep(run_sweep(cfg))
    assert [r["distance_km"] for r in rows] == ["0", "50", "100"]
    rates = [float(r["rate"]) for r in rows]
    assert rates[0] > rates[1] > rates[2] > 0


def test_empty_sweep_is_header_only():
    cfg = parse_config("sweep.schemes = plob, infinite\nsweep.distances_km =")
    text = run_sweep(cfg)
    assert text == ",".join(csv_header(cfg)) + "\n"


def test_sweep_order_and_format(tmp_path):
    cfg = replace(tiny(), schemes=("infinite", "plob"), distances_km=(100.0, 0.0, 50.0))
    out = tmp_path / "sweep.csv"
    text = run_sweep(cfg, str(out))
    assert out.read_text() == text
    rows = read_sweep(text)
    assert [(r["scheme"], r["distance_km"]) for r in rows] == [
        ("infinite", "0"), ("infinite", "50"), ("infinite", "100"),
        ("plob", "0"), ("plob", "50"), ("plob", "100")]
    expected = evaluate_point(cfg, "plob", 50.0, SchemeParams()).rate
    assert rows[4]["rate"] == f"{expected:.10g}"
    assert list(rows[0]) == csv_header(cfg)


def test_sweep_repeats_byte_identically_and_threads_agree():
    cfg = replace(tiny(), schemes=("passive2", "active2", "infinite"), distances_km=(0.0, 80.0))
    one = run_sweep(cfg)
    assert run_sweep(cfg) == one
    assert run_sweep(replace(cfg, threads=3)) == one


def test_rate_floor_applies_only_to_output():
    cfg = replace(tiny(), schemes=("passive2",), distances_km=(300.0,), rate_floor=1e-12)
    row = read_sweep(run_sweep(cfg))[0]
    assert float(row["rate"]) == 1e-12
    assert row["log10_rate"] == ""
    assert row["flag"] == "all_negative"


def test_unwritable_output_path(tmp_path):
    cfg = parse_config("sweep.schemes = plob\nsweep.distances_km = 0")
    with pytest.raises(OSError):
        run_sweep(cfg, str(tmp_path / "missing" / "out.csv"))


def test_format_number():
    assert format_number(1.0 / 3.0, 10) == "0.3333333333"
    assert format_number(math.nan, 10) == ""
    assert format_number(-math.inf, 10) == "-inf"
