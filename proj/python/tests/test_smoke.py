import numpy as np
import pytest

import burnscar


def test_index_names_cover_fifteen_indices():
    names = burnscar.index_names()
    assert len(names) == 15
    assert "NBR" in names and "RDNBR" in names


def test_ndvi_on_a_single_pixel():
    cube = np.full((10, 1, 1), 0.1, dtype=np.float32)
    cube[2] = 0.1  # B04
    cube[7] = 0.5  # B8A
    out = burnscar.compute_index("ndvi", cube)
    assert out.shape == (1, 1)
    assert out[0, 0] == pytest.approx(0.4 / 0.6, rel=1e-6)


def test_named_bands_and_missing_band():
    cube = np.ones((2, 3, 4), dtype=np.float32)
    out = burnscar.compute_index("NBR", cube, bands=["B8A", "B12"])
    assert out.shape == (3, 4)
    np.testing.assert_allclose(out, 0.0)
    with pytest.raises(burnscar.DataError):
        burnscar.compute_index("NBR", cube, bands=["B8A", "B11"])


def test_metrics_hand_case():
    m = burnscar.class_metrics(3, 1, 2)
    assert m["precision"] == pytest.approx(0.75)
    assert m["recall"] == pytest.approx(0.6)
    assert m["f1"] == pytest.approx(2 / 3)
    assert m["iou"] == pytest.approx(0.5)


def test_compute_metrics_perfect_masks():
    truth = np.array([[0, 1], [1, 0]], dtype=np.uint8)
    report = burnscar.compute_metrics(truth, truth)
    assert report["burnt_f1"] == 1.0
    assert report["mean_iou"] == 1.0


def test_threshold_on_synthetic_data():
    samples = burnscar.synthetic_dataset(3, train=6, val=0, test=2, patch_size=32)
    assert [s.split for s in samples].count("train") == 6
    assert samples[0].pre.shape == (10, 32, 32)
    assert samples[0].truth.dtype == np.uint8
    train = [s for s in samples if s.split == "train"]
    test = [s for s in samples if s.split == "test"]
    threshold, train_f1 = burnscar.fit_threshold("NBR", train)
    assert train_f1 >= 0.99
    assert burnscar.evaluate_threshold("NBR", test, threshold)["burnt_f1"] >= 0.99


def test_parameter_counts():
    assert burnscar.bamcd_parameter_count() == 1016173
    assert burnscar.bamcd_parameter_count("mini", {"sharing": "pseudo_siamese"}) == 1016173 + 308544
    with pytest.raises(burnscar.ConfigError):
        burnscar.bamcd_parameter_count("mini", {"no_such_key": "1"})


def test_run_commands(tmp_path):
    config = "seed = 2\nsynth.events = 10\nsynth.patch_size = 32\n"
    assert burnscar.run("synth", config, tmp_path / "data") == 10
    config += f"manifest = {tmp_path / 'data' / 'manifest.csv'}\nmethod = dnbr\n"
    rows = burnscar.run("index-eval", config, tmp_path / "index")
    assert [r["repeat"] for r in rows] == ["0", "mean", "std"]
    assert rows[1]["method"] == "dNBR"
    assert (tmp_path / "index" / "report.csv").exists()
    with pytest.raises(burnscar.ConfigError):
        burnscar.run("synth", "bogus = 1\n", tmp_path / "x")
