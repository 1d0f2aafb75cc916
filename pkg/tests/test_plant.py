import numpy as np
import pytest
from dataclasses import replace
from scipy.integrate import solve_ivp

from postreg.errors import ConfigError
from postreg.plant import (
    ExamplePlantParams,
    LinearOracleData,
    certified_m,
    example_L,
    example_M,
    example_P,
    harmonic_exosystem,
    kappa_condition,
    make_example_plant,
    make_linear_oracle_plant,
    sample_plant_points,
    validate_plant,
)


@pytest.fixture(scope="module")
def example():
    return make_example_plant(ExamplePlantParams(q=0.0))


def test_example_high_frequency_gain(example):
    np.testing.assert_array_equal(example.B(np.array([1.0, 0.0]), np.zeros(3)), [[1, 1], [-1, 0]])


def test_example_q_vanishes_at_origin(example):
    np.testing.assert_array_equal(example.q(np.zeros(2), np.zeros(3)), [0.0, 0.0])


def test_example_dimensions(example):
    assert (example.n_w, example.n_x, example.n_u, example.n_ya) == (2, 3, 2, 2)
    assert (example.sig.n_y, example.sig.n_e, example.sig.n_xi) == (2, 1, 0)


def test_example_minors_identically_one(example, rng):
    for _ in range(200):
        w = rng.uniform(-3, 3, 2)
        B = example.B(w, rng.normal(size=3))
        assert B[0, 0] == 1.0
        assert abs(np.linalg.det(B) - 1.0) < 1e-12


def test_example_certificate_identity(example):
    params = ExamplePlantParams()
    L, P = example_L(params), example_P(params)
    for w in params.W_grid(41):
        B = example.B(w, np.zeros(3))
        lhs = L.T @ B.T @ P(w) + P(w) @ B @ L
        np.testing.assert_allclose(lhs, example_M(params, w), rtol=1e-13, atol=1e-12)


def test_example_certified_m_is_at_least_one():
    m = certified_m(ExamplePlantParams(), n=101)
    # worst case b = 3 on the disc: 30 - sqrt(800)
    assert m == pytest.approx(30 - np.sqrt(800), rel=1e-9)
    assert m >= 1.0


def test_example_rejects_small_alpha():
    with pytest.raises(ConfigError) as exc:
        make_example_plant(ExamplePlantParams(alpha=4.0))
    assert exc.value.field == "alpha"


def test_example_kappa_condition():
    assert kappa_condition(ExamplePlantParams()) <= 0.0
    ok = ExamplePlantParams(kappa=lambda s: s, f1=lambda s: -s)
    assert kappa_condition(ok) <= 0.0
    make_example_plant(ok)
    bad = ExamplePlantParams(kappa=lambda s: -s)
    assert kappa_condition(bad) > 0.0
    with pytest.raises(ConfigError):
        make_example_plant(bad)


def test_example_zeta_dynamics_with_kappa(rng):
    params = ExamplePlantParams(q=0.5, kappa=lambda s: 0.3 * s + 0.1 * s ** 3,
                                kappa_prime=lambda s: 0.3 + 0.3 * s ** 2,
                                f1=lambda s: -s - s ** 3)
    plant = make_example_plant(params)
    pts = sample_plant_points(plant, 50, [[-2, 2]] * 3, rng)
    report = validate_plant(plant, pts, rng=rng)
    assert report.passed(1e-6), report


def test_validate_example(example, rng):
    pts = sample_plant_points(example, 100, [[-5, 5]] * 3, rng)
    report = validate_plant(example, pts, fd_step=1e-5, rng=rng)
    assert report.n_invalid == 0
    assert report.xi_drift_residual == 0.0 and report.xi_input_residual == 0.0
    assert report.passed(1e-6)


def test_validate_linear_oracle(rng):
    plant = make_linear_oracle_plant(LinearOracleData(chain_length=3, exo_freqs=(1.0, 2.0)))
    pts = sample_plant_points(plant, 100, [[-2, 2]] * plant.n_x, rng)
    report = validate_plant(plant, pts, rng=rng)
    assert report.xi_drift_residual < 1e-6
    assert report.passed(1e-6)


def test_validate_flags_corrupted_zeta(example, rng):
    bad = replace(example, zeta=lambda w, x: np.array([x[1], x[2] + 2.0 * x[0]]))
    pts = sample_plant_points(bad, 20, [[-5, 5]] * 3, rng)
    report = validate_plant(bad, pts, rng=rng)
    assert report.zeta_residual > 1e-2
    assert not report.passed(1e-6)


def test_validate_marks_non_finite_points(example):
    bad = replace(example, q=lambda w, x: np.array([np.nan, 0.0]))
    report = validate_plant(bad, np.zeros((5, 5)))
    assert report.n_invalid == 5


def test_linear_oracle_variants():
    p = make_linear_oracle_plant(LinearOracleData(chain_length=1, exo_freqs=(0.0,)))
    assert p.sig.n_e == 1 and p.sig.n_xi == 0 and p.n_w == 1
    p = make_linear_oracle_plant(LinearOracleData(chain_length=2, exo_freqs=(1.0,)))
    assert p.sig.n_xi == 1
    p = make_linear_oracle_plant(LinearOracleData(chain_length=2, exo_freqs=()))
    assert p.n_w == 0
    x = np.array([0.3, -0.2, 0.1])
    np.testing.assert_allclose(p.f(np.zeros(0), x)[:2], [x[1], x[2]])


def test_linear_oracle_zero_exosystem_error_decays():
    # zero exosystem and zero drift: any stabilizing feedback regulates e = x1
    data = LinearOracleData(chain_length=2, exo_freqs=(), c_z=[0.0], b_z=[0.0])
    plant = make_linear_oracle_plant(data)
    K = np.array([-1.0, -2.0])

    def rhs(t, x):
        return plant.f(np.zeros(0), x) + plant.b(np.zeros(0), x) @ np.array([K @ x[:2]])
    sol = solve_ivp(rhs, (0, 30), [1.0, 0.0, 0.5], rtol=1e-10, atol=1e-12)
    assert abs(plant.h_e(np.zeros(0), sol.y[:, -1])[0]) < 1e-9


def test_linear_oracle_rejects_unstable_zero_dynamics():
    with pytest.raises(ConfigError):
        make_linear_oracle_plant(LinearOracleData(A_z=[[0.5]]))


def test_francis_solution_satisfies_regulator_equations():
    data = LinearOracleData(chain_length=3, exo_freqs=(1.0, 0.0))
    A, B, P_x, C, Q_e = data.state_space()
    Pi, Gam = data.francis()
    S = data.S
    np.testing.assert_allclose(Pi @ S, A @ Pi + B @ Gam + P_x, atol=1e-12)
    np.testing.assert_allclose(C @ Pi + Q_e, 0.0, atol=1e-12)


def test_harmonic_exosystem_preserves_norm():
    S = harmonic_exosystem([1.0])
    sol = solve_ivp(lambda t, w: S @ w, (0, 200), [1.0, 0.0], rtol=1e-8, atol=1e-10,
                    t_eval=np.linspace(0, 200, 2001))
    assert np.max(np.abs(np.linalg.norm(sol.y, axis=0) - 1.0)) < 1e-6


def test_harmonic_exosystem_blocks():
    S = harmonic_exosystem([0.0, 2.0])
    np.testing.assert_array_equal(S, [[0, 0, 0], [0, 0, 2], [0, -2, 0]])
    with pytest.raises(ConfigError):
        harmonic_exosystem([-1.0])


def test_example_exosystem_norm_invariance(example):
    sol = solve_ivp(lambda t, w: example.s(w), (0, 200), [1.0, 0.0], rtol=1e-8, atol=1e-10)
    assert abs(np.linalg.norm(sol.y[:, -1]) - 1.0) < 1e-6
    assert example.in_W(sol.y[:, -1])
    assert not example.in_W(np.array([3.0, 3.0]))


def test_plant_requires_enough_inputs(example):
    with pytest.raises(ConfigError):
        replace(example, n_u=1)
