import numpy as np
import pytest

from cellstates.errors import ParameterError
from cellstates.pooling import PoolingSpec, parse_pooling, pool


def test_parse_mean():
    spec = parse_pooling("mean")
    assert spec == PoolingSpec(mode="mean")
    assert spec.tag == "mean"


def test_parse_cell_token():
    spec = parse_pooling("cell-token:3")
    assert spec == PoolingSpec(mode="cell-token", index=3)
    assert spec.tag == "cell-token:3"


@pytest.mark.parametrize(
    "tag", ["max", "Mean", "cell-token", "cell-token:", "cell-token:x", "cell-token:-1", ""]
)
def test_parse_rejects(tag):
    with pytest.raises(ParameterError):
        parse_pooling(tag)


def test_mean_of_two_tokens():
    states = np.array([[0.0, 2.0], [2.0, 0.0]])
    assert np.array_equal(pool(states, parse_pooling("mean")), [1.0, 1.0])


def test_cell_token_zero_of_two_tokens():
    states = np.array([[0.0, 2.0], [2.0, 0.0]])
    assert np.array_equal(pool(states, parse_pooling("cell-token:0")), [0.0, 2.0])


def test_single_token_either_mode():
    states = np.array([[3.5, -1.0, 0.25]])
    for tag in ("mean", "cell-token:0"):
        assert np.array_equal(pool(states, parse_pooling(tag)), states[0])


def test_pool_returns_copy():
    states = np.array([[1.0, 2.0], [3.0, 4.0]])
    vec = pool(states, parse_pooling("cell-token:1"))
    vec[0] = 99.0
    assert states[1, 0] == 3.0


def test_index_out_of_range():
    states = np.zeros((2, 4))
    with pytest.raises(ParameterError, match="out of range"):
        pool(states, parse_pooling("cell-token:2"))


def test_empty_and_misshapen_inputs():
    with pytest.raises(ParameterError, match="at least one token"):
        pool(np.zeros((0, 4)), parse_pooling("mean"))
    with pytest.raises(ParameterError, match="matrix"):
        pool(np.zeros(4), parse_pooling("mean"))
