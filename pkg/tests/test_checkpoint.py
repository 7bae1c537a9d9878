import numpy as np
import pytest

from tilestream.checkpoint import dump_checkpoint, load_checkpoint, parse_checkpoint, save_checkpoint
from tilestream.errors import InvalidInput
from tilestream.prediction import PredictorParameters


def test_round_trip(tmp_path):
    p = PredictorParameters.initialize(7, seed=4)
    path = tmp_path / "p.ckpt"
    save_checkpoint(path, "predictor", p.arrays)
    back = load_checkpoint(path, "predictor")
    assert sorted(back) == sorted(p.arrays)
    for k, v in p.arrays.items():
        assert back[k].shape == v.shape and np.array_equal(back[k], v)


def test_bytes_independent_of_insertion_order():
    a = {"x": np.arange(3.0), "y": np.eye(2)}
    b = {"y": np.eye(2), "x": np.arange(3.0)}
    assert dump_checkpoint("k", a) == dump_checkpoint("k", b)


def test_scalar_and_empty_arrays():
    kind, arrays = parse_checkpoint(dump_checkpoint("k", {"s": np.float64(2.5), "e": np.zeros((0, 3))}))
    assert kind == "k" and arrays["s"].shape == () and arrays["s"] == 2.5 and arrays["e"].shape == (0, 3)


def test_rejects_bad_input(tmp_path):
    raw = dump_checkpoint("k", {"x": np.arange(4.0)})
    with pytest.raises(InvalidInput):
        parse_checkpoint(b"NOTACKPT" + raw[8:])
    with pytest.raises(InvalidInput):
        parse_checkpoint(raw[:-3])
    with pytest.raises(InvalidInput):
        parse_checkpoint(raw + b"\0")
    path = tmp_path / "c.ckpt"
    path.write_bytes(raw)
    with pytest.raises(InvalidInput):
        load_checkpoint(path, "other")
    with pytest.raises(InvalidInput):
        load_checkpoint(tmp_path / "missing.ckpt")
