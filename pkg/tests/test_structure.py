"""Structure encodings: supports, constraint matrix B, recovery matrix C."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slrm.linalg import unvec, vec
from slrm.structure import (RecoveryMode, StructureSpec, apply_structure,
                            block_hankel_spec, build_B, build_C, from_json,
                            hankel_spec, project_to_image, read_parameters,
                            to_json, two_fold_hankel_spec)


def test_hankel_entries():
    j, k = 4, 6
    spec = hankel_spec(j, k)
    y = np.arange(1.0, j + k)
    h = apply_structure(spec, y)
    for r in range(j):
        for c in range(k):
            assert h[r, c] == y[r + c]


def test_block_hankel_entries():
    m, n, j, k = 2, 3, 3, 4
    spec = block_hankel_spec(m, n, j, k)
    rng = np.random.default_rng(0)
    y = rng.standard_normal(spec.n_params)
    h = apply_structure(spec, y)
    # parameter of entry (a, b) in block t is t*m*n + b*m + a
    for r in range(m * j):
        for c in range(n * k):
            t = r // m + c // n
            p = t * m * n + (c % n) * m + (r % m)
            assert h[r, c] == y[p]


def test_two_fold_entries():
    n1, n2, k1, k2 = 5, 6, 3, 4
    spec = two_fold_hankel_spec(n1, n2, k1, k2)
    rng = np.random.default_rng(1)
    grid = rng.standard_normal((n1, n2))
    h = apply_structure(spec, vec(grid))
    w2 = n2 - k2 + 1
    for i1 in range(k1):
        for i2 in range(k2):
            for j1 in range(n1 - k1 + 1):
                for j2 in range(w2):
                    assert h[i1 * k2 + i2, j1 * w2 + j2] == grid[i1 + j1, i2 + j2]


def test_two_fold_window_bounds():
    with pytest.raises(ValueError):
        two_fold_hankel_spec(3, 3, 4, 2)
    with pytest.raises(ValueError):
        two_fold_hankel_spec(3, 3, 2, 4)


def test_spec_validation_rejects_bad_supports():
    with pytest.raises(ValueError):
        StructureSpec(2, 2, ([0], [], [3]))          # empty support
    with pytest.raises(ValueError):
        StructureSpec(2, 2, ([0, 1], [1, 2]))        # overlap
    with pytest.raises(ValueError):
        StructureSpec(2, 2, ([0], [4]))              # out of range
    with pytest.raises(ValueError):
        StructureSpec(2, 2, ([1, 0],))               # not ascending
    with pytest.raises(ValueError):
        StructureSpec(2, 2, ([0],), zero_positions=[0])  # clashes with a support
    with pytest.raises(ValueError):
        StructureSpec(0, 2, ([0],))


def _random_spec(rng):
    which = rng.integers(3)
    if which == 0:
        return hankel_spec(int(rng.integers(1, 9)), int(rng.integers(1, 9)))
    if which == 1:
        return block_hankel_spec(int(rng.integers(1, 4)), int(rng.integers(1, 4)),
                                 int(rng.integers(1, 5)), int(rng.integers(1, 5)))
    n1 = int(rng.integers(1, 8))
    n2 = int(rng.integers(1, 8))
    return two_fold_hankel_spec(n1, n2, int(rng.integers(1, n1 + 1)),
                                int(rng.integers(1, n2 + 1)))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_roundtrip_property(seed):
    """B annihilates structured matrices exactly; C reads parameters back."""
    rng = np.random.default_rng(seed)
    spec = _random_spec(rng)
    y = rng.standard_normal(spec.n_params)
    q = apply_structure(spec, y)
    bq = build_B(spec).to_scipy() @ vec(q)
    if bq.size:
        assert np.max(np.abs(bq)) == 0.0
    for mode in RecoveryMode:
        got = build_C(spec, mode).to_scipy() @ vec(q)
        assert np.max(np.abs(got - y)) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_kernel_of_B_is_exactly_the_image(seed):
    rng = np.random.default_rng(seed)
    spec = _random_spec(rng)
    b = build_B(spec).to_dense()
    size = spec.rows * spec.cols
    # dimension: nullity of B equals the parameter count (no forced zeros here)
    assert size - np.linalg.matrix_rank(b) == spec.n_params if b.size else True
    # membership: B x = 0 forces X = Q(C x)
    x = rng.standard_normal((spec.rows, spec.cols))
    xp = project_to_image(spec, x)
    assert np.max(np.abs(b @ vec(xp))) <= 1e-12 if b.size else True


def test_B_row_count_and_values():
    spec = block_hankel_spec(2, 2, 3, 3)
    b = build_B(spec)
    expected_rows = sum(s.size - 1 for s in spec.supports)
    assert b.shape == (expected_rows, spec.rows * spec.cols)
    dense = b.to_dense()
    assert np.all(np.sum(dense != 0, axis=1) == 2)
    assert np.all(np.sum(dense, axis=1) == 0)   # one +1 and one -1 per row


def test_zero_positions_are_enforced():
    # free corner parameters, rest forced to zero
    spec = StructureSpec(2, 2, ([0], [3]), zero_positions=[1, 2])
    y = np.array([2.0, -1.0])
    q = apply_structure(spec, y)
    assert q[1, 0] == 0.0 and q[0, 1] == 0.0
    b = build_B(spec).to_dense()
    assert b.shape[0] == 2          # only the two forced-zero rows
    x = np.ones((2, 2))
    assert np.any(b @ vec(x) != 0)
    assert np.all(b @ vec(q) == 0)


def test_recovery_matrices_hankel_2x3():
    """The 2 x 3 Hankel recovery matrices, written out entry by entry."""
    spec = hankel_spec(2, 3)
    c_proj = build_C(spec, RecoveryMode.PROJECTION).to_dense()
    c_sp = build_C(spec, RecoveryMode.SPARSE).to_dense()
    want_proj = np.array([
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.5, 0.5, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.5, 0.5, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
    ])
    want_sp = np.array([
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
    ])
    np.testing.assert_array_equal(c_proj, want_proj)
    np.testing.assert_array_equal(c_sp, want_sp)


def test_projection_matches_least_squares(rng):
    """Q(C_proj vec(X)) is the closest structured matrix to X."""
    for spec in (hankel_spec(3, 4), two_fold_hankel_spec(4, 4, 2, 3)):
        basis = np.zeros((spec.rows * spec.cols, spec.n_params))
        for p, s in enumerate(spec.supports):
            basis[s, p] = 1.0
        for _ in range(5):
            x = rng.standard_normal((spec.rows, spec.cols))
            oracle = basis @ np.linalg.lstsq(basis, vec(x), rcond=None)[0]
            got = project_to_image(spec, x)
            assert np.linalg.norm(vec(got) - oracle) <= 1e-10


def test_projection_idempotent(rng):
    spec = hankel_spec(4, 5)
    x = rng.standard_normal((4, 5))
    once = project_to_image(spec, x)
    np.testing.assert_allclose(project_to_image(spec, once), once, atol=1e-14)


def test_read_parameters_matches_C(rng):
    spec = block_hankel_spec(2, 2, 2, 3)
    x = rng.standard_normal((spec.rows, spec.cols))
    via_c = build_C(spec).to_scipy() @ vec(x)
    np.testing.assert_allclose(read_parameters(spec, x), via_c, atol=1e-14)
    np.testing.assert_allclose(read_parameters(spec, vec(x)), via_c, atol=1e-14)


def test_sparse_mode_reads_first_occurrence():
    spec = hankel_spec(2, 2)
    x = np.array([[1.0, 5.0], [2.0, 3.0]])  # not structured: 5 != 2
    got = build_C(spec, RecoveryMode.SPARSE).to_scipy() @ vec(x)
    # column-major first occurrence of the middle parameter is position (1,0)
    np.testing.assert_array_equal(got, [1.0, 2.0, 3.0])


def test_json_roundtrip():
    spec = StructureSpec(3, 3, ([0, 4, 8], [1, 5], [2]), zero_positions=[3, 6])
    back = from_json(to_json(spec))
    assert back.rows == spec.rows and back.cols == spec.cols
    assert all(np.array_equal(a, b) for a, b in zip(back.supports, spec.supports))
    assert np.array_equal(back.zero_positions, spec.zero_positions)
    with pytest.raises(ValueError):
        from_json('{"rows": 2, "cols": 2}')


def test_apply_structure_checks_length():
    with pytest.raises(ValueError):
        apply_structure(hankel_spec(2, 2), np.ones(5))
    with pytest.raises(ValueError):
        read_parameters(hankel_spec(2, 2), np.ones(5))
    with pytest.raises(ValueError):
        project_to_image(hankel_spec(2, 2), np.ones((3, 2)))
