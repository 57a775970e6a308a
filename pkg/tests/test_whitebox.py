import math

import numpy as np
import pytest

from jsrbound.lmisolve import spectral_radius
from jsrbound.sysmodel import SwitchedSystem, make_rng
from jsrbound.whitebox import (
    BudgetExceeded,
    is_ground_truth,
    jsr_bruteforce,
    jsr_cqf_upper,
    products,
    spectral_norms,
    true_rho_for_validation,
    whitebox_bracket,
)

NILPOTENT_PAIR = [np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0, 0.0], [1.0, 0.0]])]


def test_products_order_and_count():
    A, B = np.diag([2.0, 1.0]), np.array([[0.0, 1.0], [1.0, 0.0]])
    prods = products(np.stack([A, B]), 3)
    assert prods.shape == (8, 2, 2)
    expected = {tuple((X @ Y @ Z).ravel()) for X in (A, B) for Y in (A, B) for Z in (A, B)}
    assert {tuple(p.ravel()) for p in prods} == expected


def test_products_budget():
    with pytest.raises(BudgetExceeded):
        products(np.stack([np.eye(2)] * 10), 7)


def test_spectral_norms_match_svd():
    stack = np.random.default_rng(0).standard_normal((20, 3, 3))
    np.testing.assert_allclose(spectral_norms(stack), [np.linalg.norm(M, 2) for M in stack], rtol=1e-10)


def test_singleton_diagonal():
    br = whitebox_bracket(SwitchedSystem.uniform([np.diag([0.9, 0.3])]))
    assert br.lower == pytest.approx(0.9, abs=1e-12)
    assert br.upper == pytest.approx(0.9, abs=1e-3)


def test_nilpotent_pair():
    br = whitebox_bracket(SwitchedSystem.uniform(NILPOTENT_PAIR))
    assert br.lower == pytest.approx(1.0, abs=1e-12)
    assert br.upper == pytest.approx(1.0, abs=1e-3)


def test_jordan_block_needs_depth():
    # norms overshoot at short depth; the CQF closes the gap
    J = np.array([[0.5, 1.0], [0.0, 0.5]])
    bf = jsr_bruteforce(SwitchedSystem.uniform([J]), depth=4)
    assert bf.lower == pytest.approx(0.5)
    assert bf.upper > 0.6
    assert jsr_cqf_upper(SwitchedSystem.uniform([J])) == pytest.approx(0.5, abs=1.5e-3)


@pytest.mark.parametrize("seed", range(8))
def test_bracket_contains_every_product_radius(seed):
    rng = make_rng(seed)
    sys = SwitchedSystem.uniform(rng.standard_normal((int(rng.integers(2, 4)), 3, 3)))
    lo, hi = true_rho_for_validation(sys, depth=5)
    assert lo <= hi + 1e-9
    for k in (1, 2, 3):
        r = spectral_radius(products(sys.modes, k)) ** (1.0 / k)
        assert np.max(r) <= hi + 1e-9


@pytest.mark.parametrize("seed", range(4))
def test_bracket_homogeneous(seed):
    rng = make_rng(seed)
    sys = SwitchedSystem.uniform(rng.standard_normal((2, 2, 2)))
    lo, hi = true_rho_for_validation(sys, depth=6)
    lo2, hi2 = true_rho_for_validation(sys.scaled(3.0), depth=6)
    assert lo2 == pytest.approx(3 * lo, rel=1e-9)
    assert hi2 == pytest.approx(3 * hi, rel=2e-3)


def test_bruteforce_monotone_in_depth():
    rng = make_rng(4)
    sys = SwitchedSystem.uniform(rng.standard_normal((2, 2, 2)))
    brs = [jsr_bruteforce(sys, d) for d in (1, 3, 6)]
    assert all(b.lower >= a.lower - 1e-12 for a, b in zip(brs, brs[1:]))
    assert all(b.upper <= a.upper + 1e-12 for a, b in zip(brs, brs[1:]))


def test_cqf_with_longer_products():
    rng = make_rng(7)
    sys = SwitchedSystem.uniform(rng.standard_normal((2, 2, 2)))
    u1 = jsr_cqf_upper(sys, l=1)
    u2 = jsr_cqf_upper(sys, l=2)
    lo = jsr_bruteforce(sys, 6).lower
    assert lo <= u2 + 1e-9 and lo <= u1 + 1e-9
    assert u2 <= u1 + 2e-3


def test_zero_system():
    br = whitebox_bracket(SwitchedSystem.uniform([np.zeros((2, 2))]))
    assert br.lower == 0.0 and br.upper == 0.0


def test_duplicate_modes_are_harmless():
    A = np.array([[0.6, 0.4], [-0.3, 0.7]])
    one = jsr_bruteforce(SwitchedSystem.uniform([A]), 6)
    two = jsr_bruteforce(SwitchedSystem.uniform([A, A]), 6)
    assert (one.lower, one.upper) == (two.lower, two.upper)


def test_ground_truth_gate():
    assert is_ground_truth(0.99, 1.0)
    assert not is_ground_truth(0.97, 1.0)
    assert is_ground_truth(1.0, 1.0)


def test_bracket_json():
    br = whitebox_bracket(SwitchedSystem.uniform([np.diag([0.9, 0.3])]), depth=3)
    d = br.to_dict()
    assert set(d) == {"lower", "upper", "depth", "methods"}
    assert math.isclose(d["lower"], 0.9)
    assert '"depth": 3' in br.to_json()
