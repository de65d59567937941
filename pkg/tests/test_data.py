import numpy as np
import pytest

from ot_reweight.data import (Dataset, LongTailSpec, load_dataset,
                              longtail_class_sizes, make_longtailed_gaussians,
                              make_rng, save_dataset, split_meta)


class TestClassSizes:
    def test_reference_profile(self):
        sizes = longtail_class_sizes(10, 100, 100.0)
        assert sizes == [100, 60, 36, 22, 13, 8, 5, 3, 2, 1]

    def test_balanced_when_if_one(self):
        assert longtail_class_sizes(5, 40, 1.0) == [40] * 5

    def test_ratio_close_to_if(self):
        sizes = longtail_class_sizes(8, 500, 50.0)
        assert abs(sizes[0] / sizes[-1] - 50.0) <= 50.0 / sizes[-1]


class TestGenerator:
    def test_counts_and_balanced_test(self):
        spec = LongTailSpec(num_classes=6, n_head=50, imbalance_factor=10.0,
                            dim=8, test_per_class=20, seed=3)
        train, test = make_longtailed_gaussians(spec)
        assert list(train.class_counts) == longtail_class_sizes(6, 50, 10.0)
        assert np.all(test.class_counts == 20)

    def test_determinism(self):
        spec = LongTailSpec(seed=7)
        t1, _ = make_longtailed_gaussians(spec)
        t2, _ = make_longtailed_gaussians(spec)
        np.testing.assert_array_equal(t1.features, t2.features)
        np.testing.assert_array_equal(t1.labels, t2.labels)

    def test_if_too_large_rejected(self):
        with pytest.raises(ValueError):
            LongTailSpec(num_classes=10, n_head=10, imbalance_factor=1e6)


class TestSplitMeta:
    def test_sizes_and_disjoint(self):
        spec = LongTailSpec(num_classes=5, n_head=60, imbalance_factor=2.0,
                            seed=1)
        train, _ = make_longtailed_gaussians(spec)
        rest, meta = split_meta(train, 10, make_rng(0))
        assert np.all(meta.class_counts == 10)
        assert rest.n == train.n - 50
        # disjointness via multiset of feature rows
        joined = np.vstack([rest.features, meta.features])
        assert joined.shape[0] == train.n
        assert np.array_equal(
            np.sort(joined.sum(axis=1)), np.sort(train.features.sum(axis=1)))

    def test_per_class_zero(self):
        spec = LongTailSpec(num_classes=4, n_head=20, imbalance_factor=2.0)
        train, _ = make_longtailed_gaussians(spec)
        rest, meta = split_meta(train, 0, make_rng(0))
        assert meta.n == 0
        assert rest.n == train.n

    def test_small_class_reduces_and_warns(self):
        ds = Dataset(np.random.default_rng(0).standard_normal((13, 2)),
                     np.array([0] * 10 + [1] * 3), 2)
        with pytest.warns(UserWarning):
            rest, meta = split_meta(ds, 10, make_rng(0))
        assert np.all(meta.class_counts == 2)

    def test_empty_class_rejected(self):
        ds = Dataset(np.zeros((3, 2)), np.array([0, 0, 2]), 4)
        with pytest.raises(ValueError):
            split_meta(ds, 1, make_rng(0))

    def test_meta_balanced_always(self):
        spec = LongTailSpec(num_classes=7, n_head=30, imbalance_factor=8.0,
                            seed=5)
        train, _ = make_longtailed_gaussians(spec)
        _, meta = split_meta(train, 3, make_rng(2))
        counts = meta.class_counts
        assert np.all(counts == counts[0])


class TestCsvRoundTrip:
    def test_roundtrip_exact(self, tmp_path):
        rng = make_rng(9)
        ds = Dataset(rng.standard_normal((30, 5)),
                     rng.integers(0, 4, size=30), 4)
        path = tmp_path / "ds.csv"
        save_dataset(ds, path)
        loaded = load_dataset(path, num_classes=4)
        np.testing.assert_array_equal(loaded.features, ds.features)
        np.testing.assert_array_equal(loaded.labels, ds.labels)

    def test_header_mismatch(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("label,x0,x1\n0,1.0,2.0\n")
        with pytest.raises(ValueError, match="line 1"):
            load_dataset(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(ValueError, match="no rows"):
            load_dataset(path)

    def test_header_only(self, tmp_path):
        path = tmp_path / "header.csv"
        path.write_text("label,f0\n")
        with pytest.raises(ValueError, match="no rows"):
            load_dataset(path)

    def test_malformed_row_line_number(self, tmp_path):
        path = tmp_path / "mal.csv"
        path.write_text("label,f0\n0,1.0\noops,nope\n")
        with pytest.raises(ValueError, match="line 3"):
            load_dataset(path)

    def test_label_out_of_range(self, tmp_path):
        path = tmp_path / "range.csv"
        path.write_text("label,f0\n5,1.0\n")
        with pytest.raises(ValueError):
            load_dataset(path, num_classes=3)
