import json

import pytest

from evfuse import dataset_io
from evfuse.cli import main


CALIB_OVERRIDES = [
    "--set", "knn.history=5",
    "--set", "noise_filter.min_events=6",
    "--set", "noise_filter.r_x=3",
    "--set", "noise_filter.r_y=3",
    "--set", "calibration.dbscan_eb.eps=15",
    "--set", "calibration.dbscan_eb.min_samples=4",
    "--set", "calibration.dbscan_rgb.min_samples=4",
]


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("seq")
    assert main(["synth", "--out", str(out), "--seed", "7"]) == 0
    return out


@pytest.fixture(scope="module")
def calib_dir(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("calib")
    rc = main(["calibrate", "--manifest", str(synth_dir / "manifest.json"),
               "--out", str(out), "--no-overlay", *CALIB_OVERRIDES])
    assert rc == 0
    return out


class TestSynth:
    def test_outputs_loadable(self, synth_dir):
        manifest = dataset_io.load_manifest(synth_dir / "manifest.json")
        assert len(manifest.frames) == 10
        events = dataset_io.load_events(manifest.resolve(manifest.events))
        assert len(events) > 100
        assert (synth_dir / "run.json").exists()

    def test_seed_repetition_identical(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        assert main(["synth", "--out", str(a), "--seed", "9"]) == 0
        assert main(["synth", "--out", str(b), "--seed", "9"]) == 0
        for pa in sorted(a.rglob("*")):
            if pa.is_file():
                assert pa.read_bytes() == (b / pa.relative_to(a)).read_bytes()

    def test_scene_config_file(self, tmp_path):
        scene = {
            "seed": 4,
            "ground_truth": [2.0, 0.0, 5.0, 0.0, 2.0, 5.0, 0.0, 0.0, 1.0],
            "objects": [{"shape": "ellipse", "size": [80.0, 60.0],
                         "velocity": [5.0, -3.0], "intensity": 200,
                         "start": [300.0, 260.0], "texture_amplitude": 10.0}],
            "rgb_resolution": [640, 400],
            "eb_resolution": [320, 200],
            "frames": 4,
        }
        cfg_path = tmp_path / "scene.json"
        cfg_path.write_text(json.dumps(scene))
        out = tmp_path / "seq"
        assert main(["synth", "--scene", str(cfg_path), "--out", str(out)]) == 0
        manifest = dataset_io.load_manifest(out / "manifest.json")
        assert manifest.rgb_resolution == (640, 400)


class TestCalibrate:
    def test_outputs(self, calib_dir):
        t, meta = dataset_io.load_calibration(calib_dir / "calibration.json")
        assert abs(t.m[0, 0] - 3.0) < 0.15
        assert meta["source_resolution"] == [320, 200]
        csv_text = (calib_dir / "diagnostics.csv").read_text()
        assert csv_text.count("\n") == 11  # header + one row per frame
        assert (calib_dir / "run.json").exists()
        assert (calib_dir / "transforms").is_dir()

    def test_missing_manifest_nonzero(self, tmp_path):
        out = tmp_path / "out"
        rc = main(["calibrate", "--manifest", str(tmp_path / "nope.json"),
                   "--out", str(out)])
        assert rc == 1
        err = json.loads((out / "error.json").read_text())
        assert "message" in err

    def test_overlay_written(self, synth_dir, tmp_path):
        out = tmp_path / "calib"
        rc = main(["calibrate", "--manifest", str(synth_dir / "manifest.json"),
                   "--out", str(out), "--overlay", *CALIB_OVERRIDES])
        assert rc == 0
        overlays = list((out / "overlay").glob("*.png"))
        assert overlays

    def test_with_segmentation_masks(self, synth_dir, tmp_path):
        # instance masks from the ground-truth boxes feed the motion gating
        import dataclasses
        import numpy as np
        from evfuse.rgbmotion import SegMask
        manifest = dataset_io.load_manifest(synth_dir / "manifest.json")
        labels = dataset_io.load_labels_openlabel(synth_dir / "labels_rgb.json")
        w, h = manifest.rgb_resolution
        masks = {}
        for k, dets in labels.items():
            frame_masks = []
            for d in dets:
                m = np.zeros((h, w), dtype=np.uint8)
                r = d.rect()
                m[int(r.y0):int(r.y1), int(r.x0):int(r.x1)] = 255
                frame_masks.append(SegMask(mask=m, class_id=d.class_id))
            masks[k] = frame_masks
        dataset_io.save_segmentation_rle(masks, synth_dir / "masks.json")
        seg_manifest = dataclasses.replace(manifest, masks="masks.json")
        dataset_io.save_manifest(seg_manifest, synth_dir / "seg_manifest.json")
        out = tmp_path / "calib"
        rc = main(["calibrate", "--manifest", str(synth_dir / "seg_manifest.json"),
                   "--out", str(out), "--no-overlay", *CALIB_OVERRIDES])
        assert rc == 0
        t, _ = dataset_io.load_calibration(out / "calibration.json")
        assert abs(t.m[0, 0] - 3.0) < 0.15

    def test_without_ground_truth_reports_na(self, synth_dir, tmp_path):
        # strip the correspondence file: transforms still emitted, error n/a
        import dataclasses
        manifest = dataset_io.load_manifest(synth_dir / "manifest.json")
        bare = dataclasses.replace(manifest, correspondences=None)
        bare_path = synth_dir / "bare_manifest.json"  # keep relative paths valid
        dataset_io.save_manifest(bare, bare_path)
        out = tmp_path / "calib"
        rc = main(["calibrate", "--manifest", str(bare_path),
                   "--out", str(out), "--no-overlay", *CALIB_OVERRIDES])
        assert rc == 0
        csv_text = (out / "diagnostics.csv").read_text()
        assert ",n/a" in csv_text
        assert (out / "calibration.json").exists()


class TestFuse:
    def test_slf(self, synth_dir, calib_dir, tmp_path):
        out = tmp_path / "fused"
        rc = main(["fuse", "--manifest", str(synth_dir / "manifest.json"),
                   "--calibration", str(calib_dir / "calibration.json"),
                   "--mode", "slf", "--out", str(out), "--no-overlay",
                   "--set", "knn.history=5"])
        assert rc == 0
        fused = json.loads((out / "fused.json").read_text())
        assert len(fused) == 10
        last = fused[-1]
        assert [o["provenance"] for o in last["objects"]] == ["both"]

    def test_stlf_track_ids(self, synth_dir, calib_dir, tmp_path):
        out = tmp_path / "fused"
        rc = main(["fuse", "--manifest", str(synth_dir / "manifest.json"),
                   "--calibration", str(calib_dir / "calibration.json"),
                   "--mode", "stlf", "--out", str(out), "--overlay",
                   "--set", "knn.history=5"])
        assert rc == 0
        fused = json.loads((out / "fused.json").read_text())
        ids = {o["track_id"] for fr in fused[1:] for o in fr["objects"]}
        assert len(ids) == 1
        assert list((out / "overlay").glob("*.png"))

    def test_early(self, synth_dir, calib_dir, tmp_path):
        out = tmp_path / "early"
        rc = main(["fuse", "--manifest", str(synth_dir / "manifest.json"),
                   "--calibration", str(calib_dir / "calibration.json"),
                   "--mode", "early", "--out", str(out)])
        assert rc == 0
        blended = sorted((out / "blended").glob("*.png"))
        assert len(blended) == 10
        img = dataset_io.load_image_png(blended[5])
        assert img.shape == (600, 960, 3)

    def test_unknown_frame_index_rejected(self, synth_dir, calib_dir, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps([{"frame_index": 99, "detections": []}]))
        out = tmp_path / "fused"
        rc = main(["fuse", "--manifest", str(synth_dir / "manifest.json"),
                   "--calibration", str(calib_dir / "calibration.json"),
                   "--mode", "slf", "--out", str(out),
                   "--detections-rgb", str(bad),
                   "--detections-eb", str(synth_dir / "detections_eb.json")])
        assert rc == 1


class TestEval:
    def test_perfect_detections_map_one(self, synth_dir, tmp_path):
        out = tmp_path / "metrics"
        rc = main(["eval", "--detections", str(synth_dir / "detections_rgb.json"),
                   "--labels", str(synth_dir / "labels_rgb.json"),
                   "--out", str(out)])
        assert rc == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["all"]["map"] == pytest.approx(1.0)
        assert (out / "metrics.csv").exists()
        assert (out / "pr_curves.csv").exists()

    def test_subset_tag_from_manifest(self, synth_dir, tmp_path):
        out = tmp_path / "metrics"
        rc = main(["eval", "--detections", str(synth_dir / "detections_rgb.json"),
                   "--labels", str(synth_dir / "labels_rgb.json"),
                   "--manifest", str(synth_dir / "manifest.json"),
                   "--out", str(out)])
        assert rc == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert "day" in metrics

    def test_multiple_subsets_reported_separately(self, synth_dir, tmp_path):
        # a second copy of the sequence tagged as a night subset
        manifest = dataset_io.load_manifest(synth_dir / "manifest.json")
        night = tmp_path / "night"
        night.mkdir()
        import dataclasses
        night_manifest = dataclasses.replace(manifest, illumination="n1",
                                             base_dir=night)
        dataset_io.save_manifest(night_manifest, night / "manifest.json")
        out = tmp_path / "metrics"
        rc = main(["eval",
                   "--detections", str(synth_dir / "detections_rgb.json"),
                   "--labels", str(synth_dir / "labels_rgb.json"),
                   "--manifest", str(synth_dir / "manifest.json"),
                   "--detections", str(synth_dir / "detections_rgb.json"),
                   "--labels", str(synth_dir / "labels_rgb.json"),
                   "--manifest", str(night / "manifest.json"),
                   "--out", str(out)])
        assert rc == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert set(metrics) == {"day", "n1"}
        assert metrics["day"]["map"] == pytest.approx(1.0)
        assert metrics["n1"]["map"] == pytest.approx(1.0)
        csv_text = (out / "metrics.csv").read_text()
        assert "day,car" in csv_text and "n1,car" in csv_text

    def test_disjoint_frames_error(self, synth_dir, tmp_path):
        shifted = tmp_path / "shifted.json"
        dets = dataset_io.load_detections(synth_dir / "detections_rgb.json")
        dataset_io.save_detections({k + 500: v for k, v in dets.items()}, shifted)
        out = tmp_path / "metrics"
        rc = main(["eval", "--detections", str(shifted),
                   "--labels", str(synth_dir / "labels_rgb.json"),
                   "--out", str(out)])
        assert rc == 1


class TestPseudoLabel:
    def test_label_files_written(self, synth_dir, calib_dir, tmp_path):
        out = tmp_path / "pl"
        rc = main(["pseudo-label", "--manifest", str(synth_dir / "manifest.json"),
                   "--calibration", str(calib_dir / "calibration.json"),
                   "--out", str(out)])
        assert rc == 0
        rgb = dataset_io.load_labels_openlabel(out / "pseudo_labels_rgb.json")
        eb = dataset_io.load_labels_openlabel(out / "pseudo_labels_eb.json")
        # the synthetic object is confident and moving from frame 1 on
        assert all(len(rgb[k]) == 1 for k in rgb)
        assert all(len(eb[k]) == 1 for k in list(eb)[1:])
        assert all(d.moving for k in list(rgb)[1:] for d in rgb[k])

    def test_low_confidence_excluded(self, synth_dir, calib_dir, tmp_path):
        dets = dataset_io.load_detections(synth_dir / "detections_rgb.json")
        import dataclasses
        weak = {k: [dataclasses.replace(d, confidence=0.79) for d in v]
                for k, v in dets.items()}
        weak_path = tmp_path / "weak.json"
        dataset_io.save_detections(weak, weak_path)
        out = tmp_path / "pl"
        rc = main(["pseudo-label", "--manifest", str(synth_dir / "manifest.json"),
                   "--calibration", str(calib_dir / "calibration.json"),
                   "--detections-rgb", str(weak_path), "--out", str(out)])
        assert rc == 0
        rgb = dataset_io.load_labels_openlabel(out / "pseudo_labels_rgb.json")
        assert all(len(v) == 0 for v in rgb.values())


class TestFilterEvents:
    def test_standalone_filter(self, tmp_path):
        from evfuse.core import Event
        events = [Event(5, 5, 100 + i, 1) for i in range(40)]
        events.append(Event(200, 100, 5000, -1))
        path = tmp_path / "events.csv"
        dataset_io.save_events(events, path)
        out = tmp_path / "kept.csv"
        rc = main(["filter-events", "--events", str(path), "--out", str(out),
                   "--rx", "2", "--ry", "2", "--rt", "10000",
                   "--min-events", "30"])
        assert rc == 0
        kept = dataset_io.load_events(out)
        assert len(kept) == 11  # backward window: the last 11 of the burst
        assert all(e.x == 5 for e in kept)
