import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from postreg.errors import ValidationError
from postreg.gains import build_G
from postreg.normal_form import (
    binomial_hurwitz,
    build_delta_scaling,
    build_internal_model_matrices,
    build_lambda,
    build_signature,
    build_structure,
    is_hurwitz,
)


@pytest.mark.parametrize("p, N, r_e, n_y, n_e, n_xi, N_total", [
    ([1, 1, 1], [1, 1, 1], 1, 3, 1, 0, 3),
    ([1], [1], 1, 1, 1, 0, 1),
    ([2, 1], [3, 2], 1, 3, 2, 5, 8),
])
def test_signature_dimensions(p, N, r_e, n_y, n_e, n_xi, N_total):
    sig = build_signature(p, N, r_e)
    assert (sig.n_y, sig.n_e, sig.n_xi, sig.N_total) == (n_y, n_e, n_xi, N_total)
    assert sig.n_a == n_y - n_e


@pytest.mark.parametrize("p, N, r_e, field", [
    ([], [], 1, "p"),
    ([1, 2], [1], 1, "N"),
    ([0], [1], 1, "p"),
    ([1], [0], 1, "N"),
    ([1, 1], [1, 1], 3, "r_e"),
    ([1, 1], [1, 1], 0, "r_e"),
])
def test_signature_errors_name_field(p, N, r_e, field):
    with pytest.raises(ValidationError) as exc:
        build_signature(p, N, r_e)
    assert exc.value.field == field


def test_structure_single_chain_of_three():
    sm = build_structure(build_signature([1], [3], 1))
    np.testing.assert_array_equal(sm.F, [[0, 1], [0, 0]])
    np.testing.assert_array_equal(sm.H, [[0], [1]])
    np.testing.assert_array_equal(sm.C, [[1, 0]])


def test_structure_small_cases():
    sm = build_structure(build_signature([1], [2], 1))
    np.testing.assert_array_equal(sm.F, [[0.0]])
    np.testing.assert_array_equal(sm.H, [[1.0]])
    np.testing.assert_array_equal(sm.C, [[1.0]])
    sm = build_structure(build_signature([2], [2], 1))
    np.testing.assert_array_equal(sm.F, np.zeros((2, 2)))
    np.testing.assert_array_equal(sm.H, np.eye(2))
    np.testing.assert_array_equal(sm.C, np.eye(2))


def test_structure_empty_xi_blocks():
    sm = build_structure(build_signature([1, 1, 1], [1, 1, 1], 1))
    assert sm.F.shape == (0, 0) and sm.H.shape == (0, 3) and sm.C.shape == (3, 0)


def test_structure_off_diagonal_blocks():
    sig = build_signature([1, 1], [2, 3], 1)
    sm = build_structure(sig, {(1, 0): (np.array([[1.0], [2.0]]), np.array([[3.0], [4.0]]))})
    np.testing.assert_array_equal(sm.F[1:, :1], [[1.0], [2.0]])
    np.testing.assert_array_equal(sm.H[1:, :1], [[3.0], [4.0]])
    with pytest.raises(ValidationError):
        build_structure(sig, {(1, 0): (np.ones((3, 1)), None)})
    with pytest.raises(ValidationError):
        build_structure(sig, {(0, 1): (None, None)})


def test_structure_is_read_only():
    sm = build_structure(build_signature([1], [3], 1))
    with pytest.raises(ValueError):
        sm.F[0, 0] = 1.0


def test_lambda_examples():
    np.testing.assert_array_equal(build_lambda(0, 2.0, build_signature([1], [3], 1)), np.diag([2.0, 1.0]))
    np.testing.assert_array_equal(build_lambda(0, 7.0, build_signature([3], [2], 1)), np.eye(3))
    lam = build_lambda(0, 3.0, build_signature([2], [4], 1))
    np.testing.assert_array_equal(lam, np.diag([9.0, 9, 3, 3, 1, 1]))
    F = build_structure(build_signature([2], [4], 1)).F
    np.testing.assert_allclose(lam @ F @ np.linalg.inv(lam), 3.0 * F)


def test_lambda_rejects_short_chain():
    with pytest.raises(ValidationError, match="no xi-chain"):
        build_lambda(0, 2.0, build_signature([1], [1], 1))


def test_delta_scaling_examples():
    np.testing.assert_array_equal(build_delta_scaling(2, 3.0, 1), np.diag([1.0, 3.0]))
    np.testing.assert_array_equal(build_delta_scaling(1, 10.0, 2), np.eye(2))
    np.testing.assert_array_equal(build_delta_scaling(3, 2.0, 2), np.diag([1.0, 1, 2, 2, 4, 4]))
    np.testing.assert_array_equal(build_delta_scaling(4, 1.0, 3), np.eye(12))


def test_internal_model_matrices_examples():
    im = build_internal_model_matrices(2, 1, [2.0, 1.0])
    np.testing.assert_array_equal(im.M, [[-2.0, 1.0], [-1.0, 0.0]])
    np.testing.assert_allclose(np.linalg.eigvals(im.M), [-1.0, -1.0], atol=1e-7)
    np.testing.assert_array_equal(build_internal_model_matrices(1, 1, [1.0]).M, [[-1.0]])
    im5 = build_internal_model_matrices(5, 1, binomial_hurwitz(5))
    assert is_hurwitz(im5.M)
    # repeated root: the computed eigenvalues scatter around -1 at the eps^(1/5) level
    np.testing.assert_allclose(np.linalg.eigvals(im5.M).real, -1.0, atol=1e-2)
    with pytest.raises(ValidationError):
        build_internal_model_matrices(3, 1, [1.0, 2.0])


def test_internal_model_selectors():
    im = build_internal_model_matrices(3, 2, [3.0, 3.0, 1.0])
    np.testing.assert_array_equal(im.E, np.vstack([np.zeros((4, 2)), np.eye(2)]))
    np.testing.assert_array_equal(im.Gamma, np.hstack([np.eye(2), np.zeros((2, 4))]))
    np.testing.assert_array_equal(im.A[:2, 2:4], np.eye(2))


def test_binomial_hurwitz():
    np.testing.assert_array_equal(binomial_hurwitz(5), [5, 10, 10, 5, 1])
    np.testing.assert_array_equal(binomial_hurwitz(1), [1])
    assert binomial_hurwitz(0).size == 0


# --- properties -------------------------------------------------------------

signatures = st.integers(1, 4).flatmap(lambda r: st.tuples(
    st.lists(st.integers(1, 3), min_size=r, max_size=r),
    st.lists(st.integers(1, 5), min_size=r, max_size=r),
    st.integers(1, r)))


@settings(max_examples=60, deadline=None)
@given(signatures)
def test_structure_invariants(spec):
    sig = build_signature(*spec)
    sm = build_structure(sig)
    assert sm.F.shape == (sig.n_xi, sig.n_xi)
    assert not np.any(sm.F @ sm.C_e.T)
    # C_e C_e' = I on the rows of error blocks that have a xi-chain
    rows = np.concatenate([np.arange(sig.y_offsets[i], sig.y_offsets[i + 1])
                           for i in range(sig.r_e) if sig.N[i] >= 2] or [np.zeros(0, int)])
    np.testing.assert_array_equal((sm.C_e @ sm.C_e.T)[np.ix_(rows, rows)], np.eye(rows.size))
    if all(Ni >= 2 for Ni in sig.N[: sig.r_e]):
        np.testing.assert_array_equal(sm.C_e @ sm.C_e.T, np.eye(sig.n_e))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.data())
def test_M_spectrum_matches_polynomial(d, data):
    # separated roots keep the eigenvalue problem well conditioned
    roots, j = [], 0
    while len(roots) < d:
        re = -(0.3 + 0.35 * j + data.draw(st.floats(0.0, 0.1)))
        j += 1
        if d - len(roots) >= 2 and data.draw(st.booleans()):
            im = data.draw(st.floats(0.2, 2.0))
            roots += [complex(re, im), complex(re, -im)]
        else:
            roots.append(complex(re, 0.0))
    h = np.real(np.poly(roots))[1:]
    im = build_internal_model_matrices(d, 1, h)
    companion = np.diag(np.ones(d - 1), 1)
    companion[-1] = -h[::-1]
    ev_M = np.sort_complex(np.linalg.eigvals(im.M))
    ev_c = np.sort_complex(np.linalg.eigvals(companion))
    np.testing.assert_allclose(ev_M, ev_c, atol=1e-9)
    assert is_hurwitz(im.M) and is_hurwitz(h)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 3), st.floats(0.1, 20.0))
def test_delta_identities(d, n_e, g):
    h = binomial_hurwitz(d)
    im = build_internal_model_matrices(d, n_e, h)
    D = build_delta_scaling(d, g, n_e)
    Di = np.linalg.inv(D)
    G = build_G(h, g, d, n_e)
    np.testing.assert_allclose(Di @ im.A @ D, g * im.A, rtol=1e-12, atol=0)
    np.testing.assert_allclose(Di @ im.E, g ** (1 - d) * im.E, rtol=1e-12, atol=0)
    np.testing.assert_allclose(Di @ G, g * im.R, rtol=1e-12, atol=0)
