import numpy as np
import pytest
import torch

from partvae import data, metrics
from partvae.data import (CloudFormatError, LabeledCloud, denormalize,
                          load_cloud_file, load_clouds, normalize,
                          synth_toyshapes, write_cloud, write_xyz)


class TestXyzFormat:
    def test_plain_round_trip(self, tmp_path):
        pts = np.array([[0.0, 1.5, -2.25], [3.0, 4.0, 5.0]], dtype=np.float32)
        cloud = LabeledCloud(cloud=torch.from_numpy(pts), labels=None, category="x")
        path = tmp_path / "a.xyz"
        write_xyz(path, cloud)
        loaded = load_cloud_file(path)
        assert torch.allclose(loaded.cloud, cloud.cloud, atol=1e-6)
        assert loaded.labels is None

    def test_labeled_round_trip(self, tmp_path):
        pts = torch.tensor([[0.0, 0, 0], [1.0, 1, 1], [2.0, 2, 2]])
        labels = torch.tensor([0, 1, 2], dtype=torch.int64)
        path = tmp_path / "b.xyz"
        write_xyz(path, LabeledCloud(cloud=pts, labels=labels, category="x"))
        loaded = load_cloud_file(path)
        assert torch.equal(loaded.labels, labels)

    def test_resamples_to_exact_count(self, tmp_path):
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(5000, 3)).astype(np.float32)
        path = tmp_path / "big.xyz"
        np.savetxt(path, pts, fmt="%.6f")
        loaded = load_cloud_file(path, n_points=2048)
        assert loaded.cloud.shape == (2048, 3)

    def test_upsamples_with_replacement(self, tmp_path):
        path = tmp_path / "small.xyz"
        path.write_text("0 0 0\n1 1 1\n")
        loaded = load_cloud_file(path, n_points=10)
        assert loaded.cloud.shape == (10, 3)

    def test_resample_deterministic_by_content(self, tmp_path):
        rng = np.random.default_rng(1)
        pts = rng.normal(size=(300, 3)).astype(np.float32)
        pa = tmp_path / "one.xyz"
        pb = tmp_path / "two.xyz"
        np.savetxt(pa, pts, fmt="%.6f")
        np.savetxt(pb, pts, fmt="%.6f")
        a = load_cloud_file(pa, n_points=64)
        b = load_cloud_file(pb, n_points=64)
        # same bytes, different filename: identical resampling
        assert torch.equal(a.cloud, b.cloud)

    def test_malformed_line_reports_file_and_line(self, tmp_path):
        path = tmp_path / "bad.xyz"
        path.write_text("0 0 0\n1 2\n")
        with pytest.raises(CloudFormatError) as err:
            load_cloud_file(path)
        assert "bad.xyz" in str(err.value)
        assert "2" in str(err.value)

    def test_non_numeric_rejected(self, tmp_path):
        path = tmp_path / "bad2.xyz"
        path.write_text("0 0 zero\n")
        with pytest.raises(CloudFormatError):
            load_cloud_file(path)

    def test_inconsistent_label_column_rejected(self, tmp_path):
        path = tmp_path / "bad3.xyz"
        path.write_text("0 0 0 1\n1 1 1\n")
        with pytest.raises(CloudFormatError):
            load_cloud_file(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.xyz"
        path.write_text("")
        with pytest.raises(CloudFormatError):
            load_cloud_file(path)


class TestBinaryFormat:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(2)
        pts = torch.from_numpy(rng.normal(size=(100, 3)).astype(np.float32))
        labels = torch.from_numpy(rng.integers(0, 3, size=100).astype(np.int64))
        path = tmp_path / "c.pcb"
        write_cloud(path, LabeledCloud(cloud=pts, labels=labels, category="x"))
        loaded = load_cloud_file(path)
        assert torch.equal(loaded.cloud, pts)
        assert torch.equal(loaded.labels, labels)

    def test_unlabeled_round_trip(self, tmp_path):
        pts = torch.randn(50, 3)
        path = tmp_path / "d.pcb"
        write_cloud(path, LabeledCloud(cloud=pts, labels=None, category="x"))
        loaded = load_cloud_file(path)
        assert torch.equal(loaded.cloud, pts)
        assert loaded.labels is None

    def test_magic_checked(self, tmp_path):
        path = tmp_path / "e.pcb"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(CloudFormatError):
            load_cloud_file(path)

    def test_truncation_detected(self, tmp_path):
        pts = torch.randn(40, 3)
        path = tmp_path / "f.pcb"
        write_cloud(path, LabeledCloud(cloud=pts, labels=None, category="x"))
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(CloudFormatError):
            load_cloud_file(path)

    def test_label_overflow_rejected_at_write(self, tmp_path):
        pts = torch.randn(2, 3)
        labels = torch.tensor([0, 300], dtype=torch.int64)
        with pytest.raises(ValueError):
            write_cloud(tmp_path / "g.pcb",
                        LabeledCloud(cloud=pts, labels=labels, category="x"))


class TestLoadClouds:
    def test_directory_sorted_order(self, tmp_path):
        for name in ("b.xyz", "a.xyz", "c.xyz"):
            (tmp_path / name).write_text(f"{ord(name[0])} 0 0\n")
        clouds = load_clouds(tmp_path)
        xs = [float(c.cloud[0, 0]) for c in clouds]
        assert xs == [97.0, 98.0, 99.0]

    def test_missing_path(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_clouds(tmp_path / "nowhere")

    def test_single_file_path(self, tmp_path):
        path = tmp_path / "solo.xyz"
        path.write_text("1 2 3\n")
        clouds = load_clouds(path)
        assert len(clouds) == 1


class TestNormalize:
    def test_already_normalized_unchanged(self):
        pts = torch.tensor([[1.0, 0, 0], [-1.0, 0, 0], [0.0, 1, 0], [0.0, -1, 0]])
        out, center, scale = normalize(pts)
        assert torch.allclose(out, pts, atol=1e-9)
        assert torch.allclose(center, torch.zeros(3), atol=1e-9)
        assert scale == pytest.approx(1.0, abs=1e-9)

    def test_shifted_cloud_recentered(self):
        base = torch.tensor([[1.0, 0, 0], [-1.0, 0, 0]])
        shifted = base + torch.tensor([10.0, 0, 0])
        out, center, scale = normalize(shifted)
        assert torch.allclose(out, base, atol=1e-9)
        assert torch.allclose(center, torch.tensor([10.0, 0, 0]), atol=1e-9)

    def test_max_norm_is_one(self, rng):
        pts = torch.randn(200, 3, generator=rng) * 5 + 2
        out, _, _ = normalize(pts)
        assert float(out.norm(dim=1).max()) == pytest.approx(1.0, abs=1e-6)

    def test_round_trip(self, rng):
        pts = torch.randn(100, 3, generator=rng, dtype=torch.float64) * 3 + 1
        out, center, scale = normalize(pts)
        back = denormalize(out, center, scale)
        assert torch.allclose(back, pts, atol=1e-9)

    def test_degenerate_cloud_scale_one(self):
        pts = torch.full((5, 3), 2.0)
        out, center, scale = normalize(pts)
        assert scale == 1.0
        assert torch.allclose(out, torch.zeros(5, 3))
        assert torch.allclose(center, torch.full((3,), 2.0))


class TestToyShapes:
    def test_deterministic_across_runs(self):
        a = synth_toyshapes("toychair", 5, n_points=128, seed=9)
        b = synth_toyshapes("toychair", 5, n_points=128, seed=9)
        for ca, cb in zip(a, b):
            assert torch.equal(ca.cloud, cb.cloud)
            assert torch.equal(ca.labels, cb.labels)

    def test_seed_changes_shapes(self):
        a = synth_toyshapes("toychair", 1, n_points=128, seed=0)[0]
        b = synth_toyshapes("toychair", 1, n_points=128, seed=1)[0]
        assert not torch.equal(a.cloud, b.cloud)

    def test_toychair_has_three_label_groups(self):
        for cloud in synth_toyshapes("toychair", 10, n_points=256, seed=3):
            assert cloud.labels is not None
            assert set(cloud.labels.tolist()) == {0, 1, 2}

    def test_toytable_and_toyplane_label_groups(self):
        for cloud in synth_toyshapes("toytable", 4, n_points=256, seed=3):
            assert set(cloud.labels.tolist()) == {0, 1}
        for cloud in synth_toyshapes("toyplane", 4, n_points=256, seed=3):
            assert set(cloud.labels.tolist()) == {0, 1, 2}

    def test_normalized_and_finite(self):
        for cloud in synth_toyshapes("toychair", 8, n_points=200, seed=5):
            assert torch.isfinite(cloud.cloud).all()
            assert float(cloud.cloud.norm(dim=1).max()) == pytest.approx(1.0, abs=1e-5)

    def test_exact_point_count(self):
        for n in (64, 200, 256):
            clouds = synth_toyshapes("toyplane", 2, n_points=n, seed=1)
            assert all(c.cloud.shape == (n, 3) for c in clouds)

    def test_labels_are_disjoint_cover(self):
        cloud = synth_toyshapes("toychair", 1, n_points=256, seed=7)[0]
        counts = torch.bincount(cloud.labels, minlength=3)
        assert int(counts.sum()) == 256
        assert (counts > 0).all()

    def test_mcd_of_label_parts_against_itself_is_zero(self):
        cloud = synth_toyshapes("toychair", 1, n_points=256, seed=11)[0]
        parts = [cloud.cloud[cloud.labels == m].numpy() for m in range(3)]
        assert metrics.mcd(parts, parts) == pytest.approx(0.0, abs=1e-12)

    def test_unknown_category_rejected(self):
        with pytest.raises(ValueError):
            synth_toyshapes("toyboat", 1)

    def test_count_must_be_positive(self):
        with pytest.raises(ValueError):
            synth_toyshapes("toychair", 0)


class TestLabeledCloudValidation:
    def test_label_length_mismatch(self):
        with pytest.raises(ValueError):
            LabeledCloud(cloud=torch.randn(4, 3), labels=torch.tensor([0, 1]),
                         category="x")

    def test_bad_shape(self):
        with pytest.raises(ValueError):
            LabeledCloud(cloud=torch.randn(4, 2), labels=None, category="x")
