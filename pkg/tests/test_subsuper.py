import numpy as np
import pytest

from conftest import make_spec
from ccplap.discretization import WeightField
from ccplap.errors import InvalidSpecError
from ccplap.subsuper import (
    build_bundle,
    condition_min,
    condition_terms,
    lambda_prime,
    nonexistence_holds,
)


@pytest.fixture(scope="module")
def bundle_s0(s0):
    return build_bundle(s0.with_lambda(0.0))


def test_s0_constants(bundle_s0):
    b = bundle_s0
    assert b.A == pytest.approx(0.125**0.5, rel=1e-4)
    assert b.B == pytest.approx(0.125**3, rel=1e-3)
    assert b.C == pytest.approx(4.595, rel=1e-3)
    assert b.lambda0 == pytest.approx(7.197, rel=1e-3)
    assert b.lambda0_literal < b.lambda0
    assert b.lambda_prime == pytest.approx(9.359, rel=5e-3)


def test_condition_equality_at_lambda0(bundle_s0):
    b = bundle_s0
    M = b.C * b.lambda0 ** (1.0 / 2.5)
    t1, t2 = condition_terms(b.lambda0, b.A, b.B, M, 2.0, 0.5, 3.0)
    assert t1 + t2 == pytest.approx(1.0, abs=1e-6)
    assert t1 == pytest.approx(0.8, abs=1e-6)
    assert t2 == pytest.approx(0.2, abs=1e-6)
    fmin, tmin = condition_min(b.lambda0, b.A, b.B, 2.0, 0.5, 3.0)
    assert fmin == pytest.approx(1.0, abs=1e-6)
    assert tmin == pytest.approx(M, rel=1e-4)


def test_ordered_pair_below_lambda0(s0):
    b = build_bundle(s0.with_lambda(5.0), with_lambda_prime=False)
    assert b.verified
    assert np.all(b.sub.values <= b.super.values)
    assert b.sub_margin >= -1e-10
    assert b.super_margin >= -1e-10


def test_lambda_prime_defining_property(bundle_s0):
    b = bundle_s0
    ts = np.logspace(-4, 4, 4001)
    holds, _ = nonexistence_holds(1.001 * b.lambda_prime, b.m, b.lambda1, 2.0, 0.5, 3.0, ts)
    assert holds
    holds, _ = nonexistence_holds(0.99 * b.lambda_prime, b.m, b.lambda1, 2.0, 0.5, 3.0, ts)
    assert not holds


def test_lambda0_below_lambda_prime_for_variable_weights(mesh256):
    spec = make_spec(mesh256, 3.0, 1.2, 4.0, 0.0, WeightField.sine(mesh256, 0.5), WeightField.parse(mesh256, "affine:1,0.5"))
    b = build_bundle(spec)
    assert 0 < b.lambda0 < b.lambda_prime


def test_invalid_exponents(mesh256):
    with pytest.raises(InvalidSpecError):
        lambda_prime(1.0, 10.0, 2.0, 1.5, 3.0)
    with pytest.raises(InvalidSpecError):
        build_bundle(make_spec(mesh256, q=0.5, sigma=0.8), with_lambda_prime=False)
