import json

import numpy as np
import pytest

import ffc_toolkit as fk


def test_dft2_matches_numpy():
    rng = np.random.default_rng(0)
    for shape in [(8, 8), (5, 7), (16, 3)]:
        g = rng.standard_normal(shape)
        np.testing.assert_allclose(fk.dft2(g), np.fft.fft2(g), atol=1e-10)
        np.testing.assert_allclose(fk.idft2(np.fft.fft2(g)), g, atol=1e-12)


def test_idft2_rejects_asymmetric_spectrum():
    s = np.zeros((4, 4), dtype=complex)
    s[1, 1] = 1.0
    with pytest.raises(ArithmeticError):
        fk.idft2(s)


def test_conjugate_pair():
    assert fk.conjugate_pair(1, 3, 8, 8) == (7, 5)
    assert fk.conjugate_pair(4, 0, 8, 8) == (4, 0)


@pytest.fixture(scope="module")
def planted():
    images, labels, freqs = fk.planted_dataset(seed=7, size=16, per_class=40)
    model = fk.train(images[:120], labels[:120], hidden=[64], epochs=20, seed=7)
    return images, labels, freqs, model


def test_planted_model_learns(planted):
    images, labels, _, model = planted
    preds = [model.predict(x) for x in images[120:]]
    assert np.mean(np.array(preds) == np.array(labels[120:])) > 0.9
    assert model.input_shape == [1, 16, 16]
    assert model.classes == 4


def test_ffc_finds_planted_frequencies(planted):
    images, labels, freqs, model = planted
    x = images[130]
    r = fk.ffc(model, x, lr=1.0, iterations=50)
    assert r["scores"].shape == (1, 16, 16)
    assert r["final_loss"] < r["losses"][0]
    top = np.argsort(r["scores"].ravel())[::-1][:12]
    top_pairs = {min((i // 16, i % 16), fk.conjugate_pair(i // 16, i % 16, 16, 16)) for i in top}
    hits = sum(tuple(f) in top_pairs for f in freqs[labels[130]])
    assert hits >= 2


def test_expected_denominator_is_nonpositive(planted):
    images, _, _, model = planted
    r = fk.ffc(model, images[0], lr=1.0, iterations=5, denominator="expected")
    assert r["scores"].max() <= 1e-12


def test_game_separates_ffc_from_random(planted):
    images, _, _, model = planted
    xs = images[120:140]
    ffc_maps = np.stack([fk.ffc(model, x, lr=1.0, iterations=20)["scores"] for x in xs])
    rand_maps = np.stack([fk.baseline_scores("random", x, seed=i) for i, x in enumerate(xs)])
    g_ffc = fk.deletion_game(model, xs, ffc_maps)
    g_rand = fk.deletion_game(model, xs, rand_maps)
    assert g_ffc["auc"] > g_rand["auc"] + 10
    assert len(g_ffc["least_first"]["mean"]) == 20
    rates, _ = fk.maintain_rate(model, xs, ffc_maps, [0.1, 1.0])
    assert rates[1] == 1.0


def test_integrated_gradients_completeness(planted):
    images, _, _, model = planted
    x = images[3]
    t = model.predict(x)
    ig = fk.integrated_gradients(model, x, t, steps=256)
    gap = model.logits(x)[t] - model.logits(np.zeros_like(x))[t]
    assert abs(ig.sum() - gap) <= 0.01 * abs(gap)


def test_statistics():
    assert fk.excess_kurtosis([0, 0, 0, 10]) == pytest.approx(7 / 3 - 3)
    assert fk.excess_kurtosis([1, 1, 1]) is None
    assert fk.spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert fk.binarize_high_score(np.array([[1.0, 2.0], [3.0, 4.0]])) == [0, 0, 1, 1]


def test_errors_map_to_python_exceptions(planted):
    images, _, _, model = planted
    with pytest.raises(ValueError):
        fk.ffc(model, images[0], iterations=0)
    with pytest.raises(ValueError):
        fk.baseline_scores("nonsense", images[0])
    with pytest.raises(OSError):
        fk.Model.load("/nonexistent/model.ckpt")


def test_model_round_trip(planted, tmp_path):
    images, _, _, model = planted
    model.save(tmp_path / "m.ckpt")
    back = fk.Model.load(tmp_path / "m.ckpt")
    np.testing.assert_array_equal(back.logits(images[5]), model.logits(images[5]))


def test_cli_in_process(tmp_path):
    code, out, _ = fk.run_cli(["dataset-gen", "--out", str(tmp_path), "--size", "8", "--classes", "2",
                                "--frequencies", "1", "--train-per-class", "5", "--eval-per-class", "2"])
    assert code == 0
    assert "wrote 10 train" in out
    report = json.loads((tmp_path / "planted.json").read_text())
    assert report["command"] == "dataset-gen"
    assert len(report["payload"]["planted"]) == 2
    code, _, err = fk.run_cli(["train", "--out", str(tmp_path), "--data", str(tmp_path / "missing.idx")])
    assert code == 2
    assert "missing.idx" in err
