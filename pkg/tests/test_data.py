import warnings

import numpy as np
import pytest

from series2vec.data import (
    TONE_CYCLES,
    Dataset,
    load_csv_dir,
    load_ts_sktime,
    make_synthetic,
    split,
    write_csv_dir,
    znormalize,
)
from series2vec.errors import DomainError, ParseError, UnsupportedFormatError
from series2vec.similarity import SoftDtwConfig, dtw_matrix


def write_table(path, rows):
    path.write_text("\n".join(",".join(str(v) for v in r) for r in rows) + "\n")


@pytest.fixture
def csv_dir(tmp_path):
    for i in range(3):
        write_table(tmp_path / f"s{i}.csv", [[i + r, -r] for r in range(4)])
    (tmp_path / "labels.csv").write_text("s0.csv,1\ns1.csv,0\ns2.csv,1\n")
    return tmp_path


class TestCsvDir:
    def test_loads_fixture(self, csv_dir):
        ds = load_csv_dir(csv_dir, normalize=False)
        assert (len(ds), ds.n_channels, ds.length) == (3, 2, 4)
        np.testing.assert_array_equal(ds.labels, [1, 0, 1])
        np.testing.assert_array_equal(ds.samples[2, 0], [2, 3, 4, 5])
        assert ds.metadata["files"] == ["s0.csv", "s1.csv", "s2.csv"]

    def test_normalized_by_default(self, csv_dir):
        ds = load_csv_dir(csv_dir)
        np.testing.assert_allclose(ds.samples.mean(axis=2), 0, atol=1e-12)
        np.testing.assert_allclose(ds.samples.std(axis=2), 1, atol=1e-12)

    def test_ragged_file_named(self, csv_dir):
        write_table(csv_dir / "s1.csv", [[0, 0]] * 5)
        with pytest.raises(DomainError, match="s1.csv"):
            load_csv_dir(csv_dir)

    def test_unreadable_value(self, csv_dir):
        write_table(csv_dir / "s2.csv", [[0, 0], [0, 0], [0, "x"], [0, 0]])
        with pytest.raises(ParseError) as info:
            load_csv_dir(csv_dir)
        assert (info.value.row, info.value.column) == (3, 2)

    def test_empty_directory(self, tmp_path):
        with pytest.raises(DomainError, match="no samples"):
            load_csv_dir(tmp_path)

    def test_round_trip(self, tmp_path):
        ds = make_synthetic("shapes", 3, length=12, d_x=2, seed=4)
        write_csv_dir(ds, tmp_path / "out")
        assert load_csv_dir(tmp_path / "out", normalize=False).equals(ds)

    def test_writer_byte_stable(self, tmp_path):
        ds = make_synthetic("tones", 2, length=8, seed=1)
        write_csv_dir(ds, tmp_path / "a")
        write_csv_dir(ds, tmp_path / "b")
        for f in sorted((tmp_path / "a").iterdir()):
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


TS_HEADER = "@problemName Toy\n@univariate {uni}\n@equalLength true\n@classLabel true a b\n@data\n"


class TestTsFormat:
    def test_minimal_univariate(self, tmp_path):
        p = tmp_path / "toy.ts"
        p.write_text(TS_HEADER.format(uni="true") + "1,2,3,4:b\n4,3,2,1:a\n")
        ds = load_ts_sktime(p, normalize=False)
        assert (len(ds), ds.n_channels, ds.length) == (2, 1, 4)
        np.testing.assert_array_equal(ds.labels, [0, 1])
        assert ds.metadata["class_mapping"] == {"b": 0, "a": 1}
        assert ds.metadata["name"] == "Toy"

    def test_two_channel_line(self, tmp_path):
        p = tmp_path / "mv.ts"
        p.write_text(TS_HEADER.format(uni="false") + "1,2,3:4,5,6:a\n")
        ds = load_ts_sktime(p, normalize=False)
        np.testing.assert_array_equal(ds.samples[0], [[1, 2, 3], [4, 5, 6]])
        assert ds.metadata["class_mapping"] == {"a": 0}

    def test_missing_class_label(self, tmp_path):
        p = tmp_path / "nolab.ts"
        p.write_text("@problemName X\n@data\n1,2,3\n")
        with pytest.raises(DomainError, match="classLabel"):
            load_ts_sktime(p)
        assert len(load_ts_sktime(p, labels=False)) == 1

    def test_unequal_length(self, tmp_path):
        p = tmp_path / "ragged.ts"
        p.write_text(TS_HEADER.format(uni="true") + "1,2,3:a\n1,2:b\n")
        with pytest.raises(UnsupportedFormatError):
            load_ts_sktime(p)

    def test_declared_unequal_length(self, tmp_path):
        p = tmp_path / "decl.ts"
        p.write_text("@equalLength false\n@data\n")
        with pytest.raises(UnsupportedFormatError):
            load_ts_sktime(p, labels=False)

    def test_unknown_directive_warns(self, tmp_path):
        p = tmp_path / "extra.ts"
        p.write_text("@custom 7\n" + TS_HEADER.format(uni="true") + "1,2:a\n3,4:a\n")
        with pytest.warns(UserWarning, match="@custom"):
            ds = load_ts_sktime(p)
        assert len(ds) == 2


class TestSynthetic:
    def test_noiseless_classes_identical_and_dtw_zero(self):
        ds = make_synthetic("tones", 4, length=24, noise_sigma=0.0)
        d = dtw_matrix(ds.samples, SoftDtwConfig())
        same = ds.labels[:, None] == ds.labels[None, :]
        assert np.all(d[same] == 0)
        for c in range(3):
            members = ds.samples[ds.labels == c]
            assert np.all(members == members[0])

    # warps classes differ only by time warping, which DTW absorbs by design
    @pytest.mark.parametrize("kind", ["tones", "shapes"])
    def test_within_class_closer(self, kind):
        ds = make_synthetic(kind, 8, length=32, noise_sigma=0.1, seed=2)
        d = dtw_matrix(ds.samples, SoftDtwConfig())
        same = ds.labels[:, None] == ds.labels[None, :]
        off = ~np.eye(len(ds), dtype=bool)
        assert d[same & off].mean() < d[~same].mean()

    def test_seed_determinism(self):
        a = make_synthetic("warps", 5, seed=9)
        b = make_synthetic("warps", 5, seed=9)
        assert a.samples.tobytes() == b.samples.tobytes()
        assert not np.array_equal(a.samples, make_synthetic("warps", 5, seed=10).samples)

    def test_tone_periodicity(self):
        length = 60
        ds = make_synthetic("tones", 1, length=length, d_x=2, noise_sigma=0.0, n_classes=5)
        for c, cycles in enumerate(TONE_CYCLES):
            mag = np.abs(np.fft.rfft(ds.samples[c, 0]))
            assert np.argmax(mag) == cycles
            period = length / cycles
            if period == int(period):
                np.testing.assert_allclose(ds.samples[c, :, int(period):], ds.samples[c, :, : length - int(period)], atol=1e-12)

    def test_unknown_kind(self):
        with pytest.raises(DomainError, match="unknown"):
            make_synthetic("chirps", 3)

    def test_noise_level(self):
        clean = make_synthetic("tones", 50, noise_sigma=0.0)
        noisy = make_synthetic("tones", 50, noise_sigma=0.3, seed=1)
        assert abs((noisy.samples - clean.samples).std() - 0.3) < 0.01


class TestSplit:
    def setup_method(self):
        self.ds = make_synthetic("tones", 10, length=8)

    def test_everything_in_train(self):
        train, val, test = split(self.ds, (1, 0, 0))
        assert train.equals(self.ds) and len(val) == 0 and len(test) == 0

    def test_stratified_balance(self):
        parts = split(self.ds, (0.5, 0.2, 0.3), seed=3)
        for part, frac in zip(parts, (0.5, 0.2, 0.3)):
            counts = np.bincount(part.labels, minlength=3)
            assert np.all(np.abs(counts - 10 * frac) <= 1)

    def test_disjoint_exhaustive_deterministic(self):
        ds = Dataset(np.arange(30.0).reshape(30, 1, 1), np.arange(30) % 3)
        parts = split(ds, (0.6, 0.2, 0.2), seed=5, stratified=False)
        keys = np.concatenate([p.samples.ravel() for p in parts])
        np.testing.assert_array_equal(np.sort(keys), np.arange(30.0))
        again = split(ds, (0.6, 0.2, 0.2), seed=5, stratified=False)
        assert all(a.equals(b) for a, b in zip(parts, again))

    def test_bad_fractions(self):
        with pytest.raises(DomainError):
            split(self.ds, (0.5, 0.2, 0.2))


def test_znormalize_constant_channel():
    x = np.stack([np.ones((2, 5)), np.arange(10.0).reshape(2, 5)])
    z = znormalize(x)
    np.testing.assert_array_equal(z[0], 0)
    np.testing.assert_allclose(z[1].std(axis=1), 1)


def test_dataset_validation():
    with pytest.raises(DomainError):
        Dataset(np.zeros((2, 3)))
    with pytest.raises(DomainError):
        Dataset(np.zeros((2, 1, 3)), [0])
