"""Adaptor contract tests: built-in models and the wire-protocol client."""

import os
import sys

import pytest

from smcheck.models import Ar1Model, ConstantModel, ExtinctionModel, NormalModel
from smcheck.simulator import (
    ExternalSimulator,
    ParamError,
    SimulatorError,
    TransportError,
    UnknownObservableError,
)

COUNTER = os.path.join(os.path.dirname(__file__), "external_counter.py")


def counter_cmd(*flags):
    return [sys.executable, COUNTER, *flags]


# ---------------------------------------------------------------------------
# Built-in contract
# ---------------------------------------------------------------------------

def test_reset_restarts_step_counter():
    sim = NormalModel()
    sim.reset(1)
    assert sim.current_step == 0
    sim.next()
    sim.next()
    assert sim.current_step == 2
    sim.reset(1)
    assert sim.current_step == 0


def test_reset_same_seed_same_trajectory():
    a, b = Ar1Model(rho=0.7), Ar1Model(rho=0.7)
    a.reset(123)
    b.reset(123)
    for _ in range(20):
        a.next()
        b.next()
        assert a.eval("x") == b.eval("x")


def test_reset_is_idempotent():
    sim = Ar1Model(rho=0.7, x0=2.0)
    sim.reset(9)
    sim.next()
    sim.next()
    after_two = sim.eval("x")
    sim.reset(9)
    first = sim.eval("x")
    sim.reset(9)
    assert sim.eval("x") == first
    sim.next()
    sim.next()
    assert sim.eval("x") == after_two


def test_eval_never_mutates_state():
    sim = ExtinctionModel(survival_p=0.9, n0=30)
    sim.reset(4)
    for _ in range(5):
        sim.next()
    before = sim.state_fingerprint()
    for _ in range(10):
        sim.eval("abundance")
        sim.eval("vacancy")
        sim.eval("abundance - 2 * vacancy")
        sim.eval("steps")
    assert sim.state_fingerprint() == before


def test_eval_expression_language():
    sim = ConstantModel(c=3.0)
    sim.reset(0)
    assert sim.eval("x") == 3.0
    assert sim.eval("x + 1") == 4.0
    assert sim.eval("abs(x - 10)") == 7.0
    assert sim.eval("-x * 2") == -6.0
    assert sim.eval("steps") == 0.0
    sim.next()
    assert sim.eval("steps") == 1.0


def test_unknown_observable_raises():
    sim = ConstantModel()
    sim.reset(0)
    with pytest.raises(UnknownObservableError):
        sim.eval("nope")
    with pytest.raises(UnknownObservableError):
        sim.eval("x +")  # malformed expression


def test_param_validation():
    with pytest.raises(ParamError):
        ConstantModel().reset(0, {"bogus": 1.0})
    with pytest.raises(ParamError):
        ExtinctionModel().reset(0, {"survival_p": 1.5})
    sim = ConstantModel()
    sim.reset(0, {"c": 8.0})
    assert sim.eval("x") == 8.0


def test_next_before_reset_fails():
    with pytest.raises(SimulatorError):
        ConstantModel().next()


def test_different_seeds_differ():
    a, b = NormalModel(), NormalModel()
    a.reset(1)
    b.reset(2)
    assert a.eval("x") != b.eval("x")


# ---------------------------------------------------------------------------
# External wire protocol client
# ---------------------------------------------------------------------------

def test_external_stdio_roundtrip():
    sim = ExternalSimulator(command=counter_cmd(), timeout=10.0)
    try:
        sim.reset(23, {"inc": 2.0})
        assert sim.eval("value") == 3.0  # 23 % 10
        sim.next()
        sim.next()
        assert sim.eval("value") == 7.0
        assert sim.eval("steps") == 2.0
        assert sim.current_step == 2
        sim.reset(23, {"inc": 2.0})
        assert sim.eval("value") == 3.0
        assert sim.current_step == 0
    finally:
        sim.close()


def test_external_error_reply_raises_simulator_error():
    sim = ExternalSimulator(command=counter_cmd(), timeout=10.0)
    try:
        sim.reset(1)
        with pytest.raises(SimulatorError):
            sim.eval("no-such-observable")
        # The session survives an application-level error.
        assert sim.eval("value") == 1.0
    finally:
        sim.close()


def test_external_timeout():
    sim = ExternalSimulator(command=counter_cmd("sleep-on-next"), timeout=0.3)
    try:
        sim.reset(1)
        with pytest.raises(TransportError):
            sim.next()
    finally:
        sim.close()


def test_external_garbage_line():
    sim = ExternalSimulator(command=counter_cmd("garbage"), timeout=5.0)
    try:
        sim.reset(1)
        with pytest.raises(TransportError):
            sim.eval("value")
    finally:
        sim.close()


def test_external_id_mismatch():
    sim = ExternalSimulator(command=counter_cmd("wrong-id"), timeout=5.0)
    try:
        with pytest.raises(TransportError):
            sim.reset(1)
    finally:
        sim.close()


def test_external_process_death():
    sim = ExternalSimulator(command=counter_cmd("crash-on-start"), timeout=2.0)
    try:
        with pytest.raises(TransportError):
            sim.reset(1)
    finally:
        sim.close()


def test_external_use_after_close():
    sim = ExternalSimulator(command=counter_cmd(), timeout=5.0)
    sim.close()
    with pytest.raises(TransportError):
        sim.eval("value")


def test_constructor_requires_one_transport():
    with pytest.raises(ValueError):
        ExternalSimulator()
    with pytest.raises(ValueError):
        ExternalSimulator(command=["x"], address=("localhost", 1))
