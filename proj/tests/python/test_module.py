"""Smoke tests for the Python extension module."""

import json

import numpy as np
import pytest

pc = pytest.importorskip("phenoclust")


def test_quantile_codes_and_round_trip():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(60, 4))
    qmap = pc.fit_quantiles(x)
    assert qmap.n_samples == 60
    coded = qmap.apply(x)
    assert coded.shape == x.shape
    assert set(np.round(coded.ravel() * 6, 9)) <= set(float(k) for k in range(7))
    again = pc.QuantileMap.from_json(qmap.to_json())
    assert np.array_equal(again.apply(x), coded)


def test_extract_features_from_a_sphere():
    grid = np.indices((16, 16, 16)) - 7.5
    mask = (np.sum(grid ** 2, axis=0) < 36).astype(np.uint8)
    volume = 100.0 + 5.0 * grid[0] + mask * 40.0
    feats = pc.extract_features(volume, mask, spacing=(1.0, 1.0, 1.0), resample=False)
    assert list(feats) == pc.feature_names()
    assert feats["shape_elongation"] == pytest.approx(1.0, abs=0.05)
    with pytest.raises(ValueError):
        pc.extract_features(volume, mask[:-1])


def test_autoencoder_and_mixture():
    data = np.random.default_rng(1).integers(0, 7, size=(40, 28)) / 6.0
    ae = pc.train_autoencoder(data, epochs=5, seed=2)
    assert ae.sizes == pc.default_layer_sizes(28)
    assert len(ae.loss_history) == 5
    z = ae.encode(data)
    assert z.shape == (40, 3)
    assert ae.decode(z).shape == data.shape

    rng = np.random.default_rng(3)
    pts = np.vstack([rng.normal(size=(150, 2)), rng.normal(size=(150, 2)) + 12.0])
    mix = pc.fit_mixture(pts, k_max=6, seed=0)
    assert mix.components == 2
    assert sum(mix.weights) == pytest.approx(1.0)
    labels, resp = mix.predict(pts)
    assert resp.shape == (300, 2)
    assert len(set(labels[:150])) == 1 and labels[0] != labels[-1]
    assert mix.trace and mix.trace[0]["sweep"] == 0


def test_degenerate_mixture_raises_numeric_error():
    with pytest.raises(pc.NumericError):
        pc.fit_mixture(np.full((30, 3), 0.5))


def test_survival_statistics():
    co = pc.synthetic_cohort(seed=0)
    time, event, labels = co["time"], co["event"], co["labels"]
    assert len(time) == 108

    km = pc.kaplan_meier(time, event)
    assert np.all(np.diff(km["survival"]) <= 0)

    lr = pc.log_rank(time, event, labels)
    assert lr["df"] == 2
    assert lr["p"] < 0.05

    x = np.array([[1.0 if l == 2 else 0.0] for l in labels])
    cox = pc.cox_fit(time, event, x)
    assert cox["hazard_ratio"][0] > 1.0

    c = pc.concordance_index(x[:, 0], time, event)
    assert 0.5 < c["c"] <= 1.0


def test_run_pipeline(tmp_path):
    co = pc.synthetic_cohort(seed=4)
    with open(tmp_path / "features.csv", "w") as fh:
        fh.write(",".join(["patient_id", *co["columns"]]) + "\n")
        for pid, row in zip(co["ids"], co["features"]):
            fh.write(",".join([pid, *(repr(float(v)) for v in row)]) + "\n")
    with open(tmp_path / "survival.csv", "w") as fh:
        fh.write("patient_id,time_months,event\n")
        for pid, t, e in zip(co["ids"], co["time"], co["event"]):
            fh.write(f"{pid},{t!r},{e}\n")
    cfg = {
        "format": "phenoclust-config",
        "version": 1,
        "seed": 4,
        "input": {"mode": "features", "features": "features.csv"},
        "survival": "survival.csv",
        "out_dir": "run",
    }
    (tmp_path / "config.json").write_text(json.dumps(cfg))

    lines = []
    out = pc.run_pipeline(str(tmp_path / "config.json"), log=lines.append)
    assert sum(out["sizes"]) == 108
    assert out["components"] == len(out["sizes"])
    assert lines == out["log"]
    report = json.loads((tmp_path / "run" / "report.json").read_text())
    assert report["cluster_sizes"] == out["sizes"]
