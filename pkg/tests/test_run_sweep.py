import numpy as np

from experiment_data import PlantedInstanceConfig, ball_draws, plant_polyhedron
from run_sweep import HELD_OUT_OFFSET, generate_report, held_out_sample, run_sweep, summarize


def test_held_out_labels_follow_truth():
    cfg = PlantedInstanceConfig(t=2, gamma=0.2, rho=0.05, m=20, d=2, seed=4)
    _, truth = plant_polyhedron(cfg)
    x, y = held_out_sample(cfg, truth, 100)
    assert x.shape == (100, 2)
    assert set(np.unique(y)) <= {-1, 1}
    assert np.linalg.norm(x, axis=1).max() <= 1.0
    assert np.array_equal(x, ball_draws(np.random.default_rng(4 + HELD_OUT_OFFSET), 100, 2))


def test_lp_sweep_table():
    df = run_sweep(range(3), t=1, gamma=0.2, rho=0.05, m=30, d=2, mode='lp', held_out=200)
    assert len(df) == 3
    assert df['outcome'].tolist() == ['feasible'] * 3
    assert (df['train_error'] == 0.0).all()
    assert df['held_out_error'].between(0.0, 1.0).all()


def test_proper_sweep_summary(capsys):
    df = run_sweep(range(2), t=2, gamma=0.2, rho=0.05, m=20, d=2, mode='proper', held_out=200)
    summary = summarize(df)
    assert summary['runs'] == 2
    assert summary['found_rate'] == 1.0
    assert summary['max_halfspaces'] <= 2
    assert summary['max_train_error'] == 0.0
    generate_report(summary, {'mode': 'proper', 't': 2})
    out = capsys.readouterr().out
    assert "Planted Polyhedron Sweep Report" in out
    assert "polyhedron" in out
