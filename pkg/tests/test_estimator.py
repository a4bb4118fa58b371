import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from concurrent_har.data.synth import SyntheticCaseSpec, synth_cases
from concurrent_har.errors import SequenceError
from concurrent_har.estimator import ConcurrentActivityRecognizer, check_case, check_cases
from concurrent_har.metrics import xnor_accuracy


@pytest.fixture(scope="module")
def cases():
    return synth_cases(SyntheticCaseSpec(seed=4, length=12, n_activities=5), 3)


@pytest.fixture(scope="module")
def fitted(cases):
    return ConcurrentActivityRecognizer(epochs=2, minibatch_seconds=6).fit(cases[:2])


def test_params_round_trip_and_clone():
    est = ConcurrentActivityRecognizer(epochs=7, lr=0.01, pos_weight=2.0)
    params = est.get_params()
    assert params["epochs"] == 7 and params["pos_weight"] == 2.0
    twin = clone(est)
    assert twin.get_params() == params
    assert twin.set_params(epochs=3).epochs == 3


def test_unfitted_predict_raises(cases):
    with pytest.raises(NotFittedError):
        ConcurrentActivityRecognizer().predict(cases)


def test_fit_predict_shapes(fitted, cases):
    assert fitted.n_activities_ == 5
    assert fitted.modalities_ == ("audio", "depth", "rss")
    proba = fitted.predict_proba(cases[2])
    bits = fitted.predict(cases[2])
    assert proba.shape == bits.shape == (12, 5)
    assert ((proba > 0) & (proba < 1)).all()
    np.testing.assert_array_equal(bits, (proba > 0.5).astype(np.uint8))
    assert fitted.predict(cases).shape == (36, 5)


def test_score_is_xnor_accuracy(fitted, cases):
    bits = fitted.predict(cases[2])
    assert fitted.score(cases[2]) == pytest.approx(xnor_accuracy(bits.T, cases[2].labels.T))


def test_decode_sets(fitted, cases):
    decoded = fitted.decode(cases[2])
    bits = fitted.predict(cases[2])
    assert list(decoded) == [cases[2].case_id]
    assert [len(s) for s in decoded[cases[2].case_id]] == bits.sum(1).tolist()


def test_activity_count_follows_labels(cases):
    est = ConcurrentActivityRecognizer(epochs=0).fit(cases[0])
    assert est.config_.n_activities == 5


def test_check_helpers(cases):
    assert check_case(cases[0]) is cases[0]
    with pytest.raises(TypeError):
        check_case({"depth": np.zeros(3)})
    assert check_cases(cases[0]) == [cases[0]]
    with pytest.raises(SequenceError, match="no cases"):
        check_cases([])
    with pytest.raises(SequenceError, match="unique"):
        check_cases([cases[0], cases[0]])
    other = synth_cases(SyntheticCaseSpec(seed=1, length=12, n_activities=3), 1, prefix="x")
    with pytest.raises(SequenceError, match="number of activities"):
        check_cases([cases[0], other[0]])
