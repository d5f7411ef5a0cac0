import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qbandit.matching import (SizeTooLarge, exploration_matchings, hamming, min_hamming_assignment,
                              min_hamming_bruteforce, project_to_matching)


@pytest.mark.parametrize("U,K", [(1, 1), (1, 5), (2, 3), (3, 3), (4, 7)])
def test_exploration_set_covers_each_link_once(U, K):
    E = exploration_matchings(U, K)
    assert len(E) == K
    links = [(u, m[u]) for m in E for u in range(U)]
    assert sorted(links) == sorted(itertools.product(range(U), range(K)))
    assert all(len(set(m)) == U for m in E)


def test_cyclic_shift_layout():
    assert exploration_matchings(2, 3) == [(0, 1), (1, 2), (2, 0)]


def test_projection_keeps_matchings():
    assert project_to_matching((2, 0, 1), 3, 4) == (2, 0, 1)


def test_projection_resolves_collisions():
    # queue 1 loses server 0 and takes the lowest free server
    assert project_to_matching((0, 0, 3), 3, 4) == (0, 1, 3)


@st.composite
def khats(draw, max_k=8):
    K = draw(st.integers(1, max_k))
    U = draw(st.integers(1, K))
    return draw(st.lists(st.integers(0, K - 1), min_size=U, max_size=U)), U, K


@given(khats())
def test_projection_optimal(case):
    khat, U, K = case
    m = project_to_matching(khat, U, K, check=True)
    assert len(set(m)) == U and all(0 <= k < K for k in m)
    assert hamming(m, khat) == min_hamming_bruteforce(khat, U, K) == min_hamming_assignment(khat, U, K)


def test_projection_input_errors():
    with pytest.raises(ValueError):
        project_to_matching((0, 5), 2, 3)
    with pytest.raises(ValueError):
        project_to_matching((0,), 2, 3)


def test_bruteforce_size_limit():
    with pytest.raises(SizeTooLarge):
        min_hamming_bruteforce([0] * 9, 9, 9)
    assert min_hamming_assignment([0] * 9, 9, 9) == 8
