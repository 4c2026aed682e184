"""Binary formats, image decoding, one-class protocol, synthetic benchmark."""

import struct

import numpy as np
import pytest
from PIL import Image

from lrad import (
    ConfigError,
    DataFormatError,
    LabeledImages,
    SynthSpec,
    bilinear_resize,
    normalize,
    one_class_split,
    read_cifar10,
    read_idx,
    read_image_dir,
    synth_generate,
    write_cifar10_batch,
    write_idx,
)
from lrad.data import stripe_mean_shift


def idx_fixture(tmp_path, pixels, labels):
    n, h, w = pixels.shape
    images_path = tmp_path / "images.idx"
    labels_path = tmp_path / "labels.idx"
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", 0x00000803, n, h, w))
        fh.write(pixels.astype(np.uint8).tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", 0x00000801, n))
        fh.write(bytes(labels))
    return images_path, labels_path


class TestIdx:
    def test_known_bytes(self, tmp_path):
        pixels = np.array(
            [[[0, 255], [128, 64]], [[255, 0], [0, 255]]], dtype=np.uint8
        )
        images_path, labels_path = idx_fixture(tmp_path, pixels, [3, 7])
        data = read_idx(images_path, labels_path)
        assert data.images.shape == (2, 1, 2, 2)
        assert data.labels == [3, 7]
        np.testing.assert_allclose(
            data.images[0, 0], np.array([[0, 255], [128, 64]]) / 127.5 - 1.0, atol=1e-6
        )

    def test_bad_magic_names_offset(self, tmp_path):
        path = tmp_path / "bad.idx"
        path.write_bytes(struct.pack(">I", 0xDEADBEEF) + b"\x00" * 16)
        labels = tmp_path / "labels.idx"
        labels.write_bytes(struct.pack(">II", 0x00000801, 0))
        with pytest.raises(DataFormatError, match="magic 0xDEADBEEF at offset 0"):
            read_idx(path, labels)

    def test_truncated_pixels(self, tmp_path):
        path = tmp_path / "short.idx"
        path.write_bytes(struct.pack(">IIII", 0x00000803, 2, 4, 4) + b"\x00" * 10)
        labels = tmp_path / "labels.idx"
        labels.write_bytes(struct.pack(">II", 0x00000801, 2) + b"\x00\x01")
        with pytest.raises(DataFormatError, match="truncated"):
            read_idx(path, labels)

    def test_count_mismatch(self, tmp_path):
        images_path, _ = idx_fixture(tmp_path, np.zeros((2, 2, 2), dtype=np.uint8), [0, 1])
        labels_path = tmp_path / "three.idx"
        labels_path.write_bytes(struct.pack(">II", 0x00000801, 3) + b"\x00\x01\x02")
        with pytest.raises(DataFormatError, match="count mismatch"):
            read_idx(images_path, labels_path)

    def test_roundtrip_bitwise(self, tmp_path, rng):
        pixels = rng.integers(0, 256, (5, 1, 6, 6), dtype=np.uint8)
        original = LabeledImages(
            images=pixels.astype(np.float32) / 127.5 - 1.0,
            labels=[0, 1, 2, 1, 0],
            ids=[f"s{i}" for i in range(5)],
        )
        write_idx(original, tmp_path / "im.idx", tmp_path / "lb.idx")
        again = read_idx(tmp_path / "im.idx", tmp_path / "lb.idx")
        assert np.array_equal(original.images, again.images)
        assert original.labels == again.labels


class TestCifar10:
    def test_single_record_fixture(self, tmp_path, rng):
        pixels = rng.integers(0, 256, 3072, dtype=np.uint8)
        (tmp_path / "data_batch_1.bin").write_bytes(bytes([9]) + pixels.tobytes())
        data = read_cifar10(tmp_path)
        assert data.images.shape == (1, 3, 32, 32)
        assert data.labels == [9]
        np.testing.assert_allclose(
            data.images[0], pixels.reshape(3, 32, 32) / 127.5 - 1.0, atol=1e-6
        )

    def test_bad_length(self, tmp_path):
        (tmp_path / "data_batch_1.bin").write_bytes(b"\x00" * 3072)
        with pytest.raises(DataFormatError, match="not a multiple of 3073"):
            read_cifar10(tmp_path)

    def test_multi_batch_sorted_order(self, tmp_path, rng):
        for name, label in (("data_batch_2.bin", 2), ("data_batch_1.bin", 1)):
            record = bytes([label]) + bytes(3072)
            (tmp_path / name).write_bytes(record)
        data = read_cifar10(tmp_path)
        assert data.labels == [1, 2]

    def test_roundtrip_bitwise(self, tmp_path, rng):
        pixels = rng.integers(0, 256, (4, 3, 32, 32), dtype=np.uint8)
        original = LabeledImages(
            images=pixels.astype(np.float32) / 127.5 - 1.0,
            labels=[1, 2, 3, 4],
            ids=[f"c{i}" for i in range(4)],
        )
        write_cifar10_batch(original, tmp_path / "data_batch_1.bin")
        again = read_cifar10(tmp_path)
        assert np.array_equal(original.images, again.images)
        assert original.labels == again.labels


def write_pgm(path, array):
    h, w = array.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(array.astype(np.uint8).tobytes())


class TestImageDir:
    def test_labeled_subdirectories(self, tmp_path, rng):
        for sub, count in (("normal", 3), ("tumor", 2)):
            (tmp_path / sub).mkdir()
            for i in range(count):
                arr = rng.integers(0, 256, (16, 16), dtype=np.uint8)
                Image.fromarray(arr, mode="L").save(tmp_path / sub / f"{i}.png")
        data = read_image_dir(tmp_path, channels=1, target_size=16)
        assert len(data) == 5
        assert sorted(set(data.labels)) == [0, 1]
        assert data.labels == [0, 0, 0, 1, 1]

    def test_constant_pgm_resize(self, tmp_path):
        (tmp_path / "a").mkdir()
        write_pgm(tmp_path / "a" / "flat.pgm", np.full((64, 64), 200))
        data = read_image_dir(tmp_path, channels=1, target_size=32)
        expected = 200 / 127.5 - 1.0
        np.testing.assert_allclose(data.images, expected, rtol=1e-6)

    def test_checkerboard_bilinear_oracle(self):
        board = np.indices((4, 4)).sum(axis=0) % 2
        out = bilinear_resize(board[None].astype(np.float64), 8, 8)[0]

        def oracle(i, j):
            # textbook bilinear at half-pixel centers, evaluated per pixel
            y = min(max((i + 0.5) * 0.5 - 0.5, 0.0), 3.0)
            x = min(max((j + 0.5) * 0.5 - 0.5, 0.0), 3.0)
            y0, x0 = int(np.floor(y)), int(np.floor(x))
            y1, x1 = min(y0 + 1, 3), min(x0 + 1, 3)
            fy, fx = y - y0, x - x0
            top = board[y0, x0] * (1 - fx) + board[y0, x1] * fx
            bot = board[y1, x0] * (1 - fx) + board[y1, x1] * fx
            return top * (1 - fy) + bot * fy

        expect = np.array([[oracle(i, j) for j in range(8)] for i in range(8)])
        np.testing.assert_allclose(out, expect, atol=1e-12)
        # spot values derived by hand from the formula above
        assert out[0, 0] == pytest.approx(0.0)
        assert out[0, 1] == pytest.approx(0.25)
        assert out[1, 1] == pytest.approx(0.375)

    def test_undecodable_file_named(self, tmp_path):
        (tmp_path / "x").mkdir()
        bad = tmp_path / "x" / "broken.png"
        bad.write_bytes(b"not an image at all")
        with pytest.raises(DataFormatError, match="broken.png"):
            read_image_dir(tmp_path)

    def test_unlabeled_files_warn(self, tmp_path, rng):
        arr = rng.integers(0, 256, (8, 8), dtype=np.uint8)
        Image.fromarray(arr, mode="L").save(tmp_path / "loose.png")
        with pytest.warns(UserWarning, match="unlabeled"):
            data = read_image_dir(tmp_path, target_size=8)
        assert data.labels == [0]

    def test_rgb_channels(self, tmp_path, rng):
        (tmp_path / "c").mkdir()
        arr = rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)
        Image.fromarray(arr, mode="RGB").save(tmp_path / "c" / "rgb.png")
        data = read_image_dir(tmp_path, channels=3, target_size=8)
        assert data.images.shape == (1, 3, 8, 8)
        np.testing.assert_allclose(
            data.images[0], arr.transpose(2, 0, 1) / 127.5 - 1.0, atol=1e-6
        )

    def test_roundtrip_bitwise(self, tmp_path, rng):
        from lrad.data import write_image_dir

        pixels = rng.integers(0, 256, (6, 1, 16, 16), dtype=np.uint8)
        original = LabeledImages(
            images=pixels.astype(np.float32) / 127.5 - 1.0,
            labels=[0, 0, 1, 1, 2, 2],
            ids=[f"i{i}" for i in range(6)],
        )
        write_image_dir(original, tmp_path / "tree")
        again = read_image_dir(tmp_path / "tree", channels=1, target_size=16)
        assert np.array_equal(original.images, again.images)
        assert original.labels == again.labels


class TestOneClassSplit:
    def ten_class_data(self, rng, per_class=20):
        labels = list(range(10)) * per_class
        images = rng.uniform(-1, 1, (len(labels), 1, 8, 8)).astype(np.float32)
        return LabeledImages(images=images, labels=labels, ids=[str(i) for i in range(len(labels))])

    def test_held_class_is_anomaly(self, rng):
        data = self.ten_class_data(rng)
        split = one_class_split(data, held_class=0, train_fraction=0.8, seed=3)
        assert 0 not in split.train_normals.labels
        test_labels = np.asarray(split.test.labels)
        flags = np.asarray(split.test_anomaly_flags)
        assert np.array_equal(flags, test_labels == 0)

    def test_polarity_inverted(self, rng):
        data = self.ten_class_data(rng)
        split = one_class_split(
            data, held_class=0, polarity="class_is_normal", train_fraction=0.8, seed=3
        )
        assert set(split.train_normals.labels) == {0}
        flags = np.asarray(split.test_anomaly_flags)
        assert np.array_equal(flags, np.asarray(split.test.labels) != 0)

    def test_same_seed_identical(self, rng):
        data = self.ten_class_data(rng)
        a = one_class_split(data, held_class=4, train_fraction=0.7, seed=11)
        b = one_class_split(data, held_class=4, train_fraction=0.7, seed=11)
        assert a.train_normals.ids == b.train_normals.ids
        assert a.test.ids == b.test.ids
        assert np.array_equal(a.train_normals.images, b.train_normals.images)

    def test_partition_covers_exactly_once(self, rng):
        data = self.ten_class_data(rng)
        split = one_class_split(data, held_class=2, train_fraction=0.5, seed=5)
        combined = sorted(split.train_normals.ids + split.test.ids)
        assert combined == sorted(data.ids)

    def test_no_anomaly_ever_trains(self, rng):
        data = self.ten_class_data(rng, per_class=5)
        for seed in range(100):
            split = one_class_split(data, held_class=7, train_fraction=0.6, seed=seed)
            assert 7 not in split.train_normals.labels

    def test_absent_class_rejected(self, rng):
        data = self.ten_class_data(rng)
        with pytest.raises(ConfigError, match="absent"):
            one_class_split(data, held_class=12)


class TestNormalize:
    def test_zscore_standardizes_each_image(self, rng):
        images = rng.uniform(-1, 1, (6, 1, 8, 8)).astype(np.float32) * 3 + 0.7
        data = LabeledImages(images=images, labels=[0] * 6, ids=[str(i) for i in range(6)])
        out = normalize(data, "zscore").images.reshape(6, -1)
        assert np.abs(out.mean(axis=1)).max() <= 1e-5
        assert np.abs(out.std(axis=1) - 1.0).max() <= 1e-4

    def test_zscore_constant_image_is_zero(self):
        data = LabeledImages(
            images=np.full((1, 1, 4, 4), 0.37, dtype=np.float32), labels=[0], ids=["a"]
        )
        assert np.abs(normalize(data, "zscore").images).max() == 0.0

    def test_tanh_range_endpoints(self):
        images = np.array([[[[0.0, 255.0]]]], dtype=np.float32)
        data = LabeledImages(images=images, labels=[0], ids=["a"])
        np.testing.assert_allclose(normalize(data, "tanh_range").images.ravel(), [-1.0, 1.0])

    def test_unknown_mode(self):
        data = LabeledImages(images=np.zeros((1, 1, 2, 2)), labels=[0], ids=["a"])
        with pytest.raises(ConfigError):
            normalize(data, "whiten")


class TestSynth:
    def test_deterministic_per_seed(self):
        spec = SynthSpec(n_normal=20, n_anomaly=10, seed=7)
        a, b = synth_generate(spec), synth_generate(spec)
        assert np.array_equal(a.images, b.images)
        assert a.labels == b.labels
        c = synth_generate(SynthSpec(n_normal=20, n_anomaly=10, seed=8))
        assert not np.array_equal(a.images, c.images)

    def test_noiseless_value_set(self):
        spec = SynthSpec(n_normal=10, n_anomaly=10, noise_amplitude=0.0, seed=1)
        data = synth_generate(spec)
        values = np.unique(np.round(data.images.astype(np.float64), 6))
        allowed = {
            spec.background,
            spec.background + spec.disk_value,
            spec.background + spec.stripe_contrast,
            spec.background + spec.disk_value + spec.stripe_contrast,
        }
        assert set(values) <= {round(v, 6) for v in allowed}

    def test_stripe_mean_shift_matches_analytics(self):
        # fixed radius isolates the stripe contribution from disk variation
        spec = SynthSpec(
            n_normal=400, n_anomaly=400, disk_radius=(7, 7), noise_amplitude=0.02, seed=3
        )
        data = synth_generate(spec)
        images = data.images.astype(np.float64)
        normal_mean = images[: spec.n_normal].mean()
        anomaly_mean = images[spec.n_normal :].mean()
        shift = stripe_mean_shift(spec)
        assert anomaly_mean - normal_mean == pytest.approx(shift, rel=0.02)

    def test_labels_and_counts(self):
        data = synth_generate(SynthSpec(n_normal=12, n_anomaly=5, seed=0))
        assert data.labels == [0] * 12 + [1] * 5
        assert data.images.shape == (17, 1, 32, 32)
        assert data.images.min() >= -1.0 and data.images.max() <= 1.0

    def test_invalid_radius_rejected(self):
        with pytest.raises(ConfigError):
            synth_generate(SynthSpec(disk_radius=(10, 20), image_size=32))
