import pytest

from concurrent_har.checks import OP_CASES, TOLERANCE, check_lstm, check_model, check_op


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_gradients(name):
    result = check_op(name, seed=3)
    assert result.passed, result.failures[:3]
    assert result.checked > 0


def test_lstm_and_model_gradients():
    assert check_lstm(seed=1).passed
    res = check_model(seed=2)
    assert res.passed, res.failures[:3]
    assert res.checked > 500


def test_only_64_bit_supported():
    assert list(TOLERANCE) == [64]
    with pytest.raises(ValueError, match="64 bits"):
        check_op("tanh", bits=32)
