# Copyright 2026 The GTNB Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import json
import math

import numpy as np
import pytest

import gtnb


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    manifest = gtnb.make_synthetic_corpus(str(root), seed=7, clips_per_genre=2, test_per_genre=1)
    return root, manifest


def test_constants():
    assert len(gtnb.GENRES) == 10
    assert gtnb.GENRES[0] == "gBR"
    assert gtnb.POSE_WIDTH == 72
    assert gtnb.MUSIC_WIDTH == 438


def test_features_of_synthetic_clip(corpus):
    root, _ = corpus
    samples = gtnb.load_audio(str(root / "audio" / "gBR_00.wav"))
    assert samples.dtype == np.float32
    assert samples.shape == (61440,)
    feats = gtnb.extract_features(samples)
    assert feats["mel"].shape == (240, 80)
    assert feats["music"].shape == (240, 438)
    assert feats["energy"].shape == (240, 1)
    assert feats["frame_rate"] == 60.0
    assert np.isfinite(feats["music"]).all()


def test_metric_oracles():
    a = np.array([[-1.0], [0.0], [1.0]])
    assert gtnb.fid(a, a + 3.0) == pytest.approx(9.0, abs=1e-6)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, size=(12, 5))
    brute = np.mean([np.linalg.norm(pts[i] - pts[j]) for i in range(12) for j in range(i + 1, 12)])
    assert gtnb.diversity(pts) == pytest.approx(brute, rel=1e-12)
    assert gtnb.beat_align_score([10], [13], 3.0) == pytest.approx(math.exp(-0.5), abs=1e-9)
    with pytest.raises(gtnb.EmptyInputError):
        gtnb.diversity(pts[:1])


def test_pose_round_trip_and_features(corpus, tmp_path):
    root, _ = corpus
    pose = gtnb.read_pose_csv(str(root / "pose" / "gPO_00.csv"))
    assert pose.shape == (240, 72)
    out = tmp_path / "copy.csv"
    gtnb.write_pose_csv(str(out), pose)
    np.testing.assert_array_equal(gtnb.read_pose_csv(str(out)), pose)
    kin = np.array(gtnb.kinetic_features(pose))
    geo = np.array(gtnb.geometric_features(pose))
    assert kin.shape == (72,) and (kin >= 0).all()
    assert geo.shape == (32,) and ((geo >= 0) & (geo <= 1)).all()
    with pytest.raises(gtnb.ShapeError):
        gtnb.kinetic_features(pose[:, :70])


def test_cli_pipeline(corpus, tmp_path):
    _, manifest = corpus
    gtn = str(tmp_path / "gtn.ckpt")
    code, _, log = gtnb.cli(["pretrain-gtn", "--manifest", manifest, "--out", gtn, "--epochs", "1",
                             "--gtn.channels", "4,4", "--gtn.width", "8", "--seed", "2"])
    assert code == 0, log
    events = [json.loads(line) for line in log.splitlines()]
    assert events[-1]["event"] == "done"
    ckpt = gtnb.load_checkpoint(gtn)
    assert ckpt["stage"] == "gtn-pretrain"
    assert ckpt["epoch"] == 1
    assert ckpt["metadata"]["gtn.width"] == "8"
    assert any(k.startswith("gtn.") for k in ckpt["tensors"])

    code, out, _ = gtnb.cli(["--help"])
    assert code == 0 and "pretrain-gtn" in out
    assert gtnb.cli(["no-such-command"])[0] == 1


def test_evaluate_suite(corpus, tmp_path):
    root, _ = corpus
    report = gtnb.evaluate_suite(str(root / "pose"), str(root / "pose"), str(tmp_path / "r.json"))
    assert report["clips"] == 20
    assert report["fid_k"] == pytest.approx(0.0, abs=1e-6)
    assert set(json.loads((tmp_path / "r.json").read_text())) >= {"fid_k", "fid_g", "div_k", "div_g", "bas"}
