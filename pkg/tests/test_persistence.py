import hashlib
import json

import numpy as np
import pytest

from tabsurv.dataset import GBSG2_SCHEMA, SplitSpec, load_gbsg2, prepare_splits
from tabsurv.persistence import (BundleError, BundleVersionError, bundle_to_dict, decode_array, encode_array,
                                 load_bundle, save_bundle)
from tabsurv.training import TrainConfig, evaluate, train

SMALL = dict(n_layers=1, hidden=16, emb_bins=4, emb_width=4, batch_size=64, max_epochs=3, patience=2)


@pytest.fixture(scope="module")
def gbsg2_splits():
    return prepare_splits(load_gbsg2(), SplitSpec())


def digest(bundle):
    return hashlib.sha256(json.dumps(bundle_to_dict(bundle), sort_keys=True).encode()).hexdigest()


class TestArrays:
    def test_float_round_trip_bit_exact(self, rng):
        a = rng.standard_normal((3, 4)) * 10.0 ** rng.integers(-300, 300, (3, 4))
        b = decode_array(json.loads(json.dumps(encode_array(a))))
        assert a.tobytes() == b.tobytes()

    def test_int_round_trip(self):
        a = np.array([0, -5, 2**40])
        np.testing.assert_array_equal(decode_array(encode_array(a)), a)

    def test_shape_mismatch(self):
        d = encode_array(np.zeros(4))
        d["shape"] = [5]
        with pytest.raises(BundleError):
            decode_array(d)


class TestBundle:
    @pytest.mark.parametrize("head,k", [("LS", 1), ("LAS", 2), ("WSA", 2), ("WAS", 2)])
    def test_round_trip(self, head, k, gbsg2_splits, tmp_path):
        tr, va, te = gbsg2_splits
        bundle, _ = train(tr, va, TrainConfig(**SMALL, head=head, n_members=k), record=tr.record,
                          schema=GBSG2_SCHEMA)
        path = tmp_path / "b.json"
        save_bundle(bundle, path)
        back = load_bundle(path)
        for name in bundle.model.store:
            assert bundle.model.store[name].tobytes() == back.model.store[name].tobytes()
        np.testing.assert_array_equal(back.predict(te.features).probs, bundle.predict(te.features).probs)
        assert evaluate(back, te) == evaluate(bundle, te)
        assert back.record == bundle.record and back.schema == GBSG2_SCHEMA

    def test_evaluate_keeps_hash(self, gbsg2_splits):
        tr, va, te = gbsg2_splits
        bundle, _ = train(tr, va, TrainConfig(**SMALL))
        before = digest(bundle)
        evaluate(bundle, te, with_ks=True)
        assert digest(bundle) == before

    def test_truncated(self, gbsg2_splits, tmp_path):
        tr, va, _ = gbsg2_splits
        bundle, _ = train(tr, va, TrainConfig(**SMALL))
        path = tmp_path / "b.json"
        save_bundle(bundle, path)
        text = path.read_text()
        path.write_text(text[: len(text) // 2])
        with pytest.raises(BundleError, match="corrupt"):
            load_bundle(path)

    def test_future_version(self, gbsg2_splits, tmp_path):
        tr, va, _ = gbsg2_splits
        bundle, _ = train(tr, va, TrainConfig(**SMALL))
        d = bundle_to_dict(bundle)
        d["version"] = 99
        path = tmp_path / "b.json"
        path.write_text(json.dumps(d))
        with pytest.raises(BundleVersionError):
            load_bundle(path)

    def test_wrong_format(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text('{"format": "other"}')
        with pytest.raises(BundleError):
            load_bundle(path)

    def test_failed_save_leaves_nothing(self, gbsg2_splits, tmp_path, monkeypatch):
        tr, va, _ = gbsg2_splits
        bundle, _ = train(tr, va, TrainConfig(**SMALL))

        def boom(*a, **k):
            raise OSError("disk full")

        monkeypatch.setattr("tabsurv.persistence.os.replace", boom)
        with pytest.raises(OSError):
            save_bundle(bundle, tmp_path / "b.json")
        assert list(tmp_path.iterdir()) == []
