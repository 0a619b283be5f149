# Copyright 2026 The DAM Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
# http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
import math

import numpy as np
import pytest

import pydam


def test_synthetic_face_is_seeded():
    a = pydam.generate_face(3)
    b = pydam.generate_face(3)
    assert a.shape.shape == (2 * pydam.NUM_LANDMARKS,)
    assert a.image.shape == (64, 64)
    np.testing.assert_array_equal(a.image, b.image)
    assert a.label in (0, 1)


def test_warp_render_round_trip():
    face = pydam.generate_face(1)
    frame = pydam.build_reference_frame([face.shape], 40, 40)
    assert frame.width == 40 and frame.num_points == 68
    tex, valid = pydam.warp_to_texture(face.image, face.shape, frame)
    assert tex.shape == (frame.num_pixels,)
    assert all(valid)
    # constant textures render and warp back unchanged away from the border
    flat = np.full(frame.num_pixels, 77.0)
    img = pydam.render_texture(flat, face.shape, frame, 64, 64, 77.0)
    back, _ = pydam.warp_to_texture(img, face.shape, frame)
    np.testing.assert_allclose(back, flat, atol=1e-9)


def test_metrics():
    a = np.arange(10.0)
    assert pydam.rmse(a, a + 255.0) == pytest.approx(255.0)
    assert pydam.psnr(a, a) == math.inf
    assert pydam.normalized_error(np.array([0, 0, 4, 0, 0, 9.0]), np.array([0, 0, 4, 0, 0, 9.0])) == 0.0
    with pytest.raises(pydam.DamError):
        pydam.rmse(a, a[:3])


def test_sparse_code_orthonormal():
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.normal(size=(12, 5)))
    x = rng.normal(size=12)
    np.testing.assert_allclose(pydam.sparse_code(x, q, 0.0), q.T @ x, atol=1e-9)


def test_cli_pipeline(tmp_path):
    data = tmp_path / "data"
    code, out, err = pydam.run_cli(["--help"])
    assert code == 0 and "synth" in out
    assert pydam.run_cli(["synth", "--bogus"])[0] == 2
    assert pydam.run_cli(["synth", "--seed", "2", "--train", "10", "--test", "2", "--out", str(data)])[0] == 0
    model = tmp_path / "pre.dam"
    code, _, err = pydam.run_cli([
        "pretrain", "--data", str(data / "manifest.csv"), "--out", str(model), "--frame-width", "24",
        "--frame-height", "24", "--shape-h1", "6", "--shape-h2", "4", "--texture-h1", "8", "--texture-h2", "4",
        "--joint", "3", "--epochs", "2", "--batch", "5"])
    assert code == 0, err
    archive = pydam.load_model(str(model))
    assert archive.frame.width == 24
    assert not archive.has_dictionaries
    face = pydam.generate_face(5)
    tex, _ = pydam.warp_to_texture(face.image, face.shape, archive.frame)
    rec = archive.reconstruct(face.shape, tex, sweeps=3, seed=4)
    np.testing.assert_array_equal(rec, archive.reconstruct(face.shape, tex, sweeps=3, seed=4))
    fit = archive.fit(face.image, face.shape, method="fc", iterations=2)
    assert fit["shape"].shape == face.shape.shape
    with pytest.raises(pydam.DamError):
        archive.fit(face.image, face.shape, method="dict")
