import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "..", "python"))

import picket


def test_synthetic_outlier_pipeline():
    data = picket.synth_gaussian_linear(t=5, r=2, n=200, seed=1)
    assert data.n == 200
    assert data.t == 5

    noisy = picket.corrupt(data, kind="random", level="medium", row_fraction=0.2, seed=1)
    truth = noisy.corrupted_rows
    assert sum(truth) == 40

    net = picket.PicketNet(noisy, config_json="", seed=1)
    scores = net.train_scores(noisy)
    assert len(scores) == 200
    assert picket.auroc(scores, truth) > 0.7

    low, high = picket.thresholds_by_fpr(scores, 0.1)
    kept = picket.kept_indices(scores, low, high)
    assert 0 < len(kept) < 200


def test_loss_vector_and_checkpoint(tmp_path):
    data = picket.synth_gaussian_linear(t=4, r=2, n=60, seed=3)
    net = picket.PicketNet(data, seed=3)
    net.train_scores(data)
    row = data.row(0)
    losses = net.loss_vector(row, eval_seed=7)
    assert len(losses) == 4

    path = str(tmp_path / "net.pckt")
    net.save(path)
    again = picket.PicketNet.load(path)
    assert again.loss_vector(row, eval_seed=7) == losses


def test_downstream_and_guard(tmp_path):
    data = picket.synth_labeled_task(t=3, r=2, n=120, seed=5)
    model = picket.DownstreamModel.fit(data, family="lr", seed=5)
    assert model.accuracy(data) > 0.8
    assert model.predict(data.row(0)) in (0, 1)

    adv = picket.attack_row(model, data.row(0), data.labels[0], kind="fgsm", epsilon=0.2)
    assert len(adv) == 3

    bundle = picket.GuardBundle.build(data, family="lr", seed=5)
    decision = bundle.guard(data.row(0))
    assert set(decision) == {"prediction", "flagged", "score", "losses"}
    assert 0.0 <= decision["score"] <= 1.0

    path = str(tmp_path / "bundle.pckt")
    bundle.save(path)
    again = picket.GuardBundle.load(path)
    assert again.guard(data.row(0)) == decision


def test_csv_round_trip():
    schema = json.dumps(
        {
            "columns": [
                {"name": "x", "kind": "numeric"},
                {"name": "c", "kind": "categorical"},
            ]
        }
    )
    data = picket.Dataset.from_csv_text("x,c\n1.5,a\n,b\n2.25,a\n", schema)
    assert data.columns == ["x", "c"]
    assert data.row(1)[0] is None
    again = picket.Dataset.from_csv_text(data.to_csv_text(), schema)
    assert again.to_csv_text() == data.to_csv_text()


def test_experiment_report():
    spec = {
        "synth_t": 4,
        "synth_r": 2,
        "synth_n": 120,
        "seeds": [1, 2],
        "net": json.loads(picket.PicketNet(picket.synth_gaussian_linear(2, 1, 4, 1)).config_json),
    }
    spec["net"]["warm_epochs"] = 2
    spec["net"]["record_epochs"] = 2
    report = json.loads(picket.run_experiment("outlier", json.dumps(spec)))
    assert report["experiment"] == "outlier"
    assert len(report["per_seed"]) == 2
    assert 0.0 <= report["mean"]["auroc"] <= 1.0
