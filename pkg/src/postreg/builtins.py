"""Ready-made plant/regulator pairs used by the CLI, the demos and the tests."""

import numpy as np

from .gains import synthesize_gains
from .plant import (
    ExamplePlantParams,
    LinearOracleData,
    example_L,
    make_example_plant,
    make_linear_oracle_plant,
)
from .regulator import RegulatorConfig, phi_from_polynomial

__all__ = [
    "EXAMPLE_INITIAL_STATE",
    "example_setup",
    "exosystem_polynomial",
    "linear_oracle_setup",
]

EXAMPLE_INITIAL_STATE = dict(w=[1.0, 0.0], x=[3.0, 5.0, -2.0])


def example_setup(q=0.0, g=5.0, ell=5.0, d=5, phi="example", alpha=5.0, m=1.0, h=None):
    """Example plant with the simulation regulator.

    Defaults: ``alpha = 5``, ``m = 1``, ``g = ell = 5``, ``d = 5``,
    ``phi(eta) = -4 eta_4`` and binomial ``h``.

    Returns
    -------
    plant, config, initial_state
    """
    params = ExamplePlantParams(q=q, alpha=alpha, m=m)
    plant = make_example_plant(params)
    gains = synthesize_gains(plant.sig, example_L(params), g, ell, d, h=h)
    config = RegulatorConfig(d, phi, gains)
    z0 = dict(EXAMPLE_INITIAL_STATE, eta=np.zeros(config.n_eta))
    return plant, config, z0


def exosystem_polynomial(freqs):
    """Monic coefficients ``(c_1, ..., c_d)`` of ``prod (s^2 + w^2)`` (``s`` for ``w = 0``)."""
    poly = np.array([1.0])
    for om in freqs:
        factor = np.array([1.0, 0.0]) if om == 0 else np.array([1.0, 0.0, float(om) ** 2])
        poly = np.polymul(poly, factor)
    return poly[1:]


def linear_oracle_setup(exo_freqs=(1.0,), chain_length=2, g=2.0, ell=10.0, d=None,
                        phi=None, k=None, data=None, initial_state=None):
    """Linear oracle plant with an internal model tuned to the exosystem.

    By default ``d`` is the exosystem order and ``phi`` reproduces its
    characteristic polynomial, so the regulator achieves exact asymptotic
    regulation. With ``d`` larger than the exosystem order, the polynomial is
    padded with powers of ``s``.
    """
    data = LinearOracleData(chain_length=chain_length, exo_freqs=tuple(exo_freqs)) if data is None else data
    plant = make_linear_oracle_plant(data, exo_freqs=exo_freqs)
    coeffs = exosystem_polynomial(exo_freqs)
    d = max(len(coeffs), 1) if d is None else int(d)
    if phi is None and d >= len(coeffs):
        phi = phi_from_polynomial(np.concatenate([coeffs, np.zeros(d - len(coeffs))]), plant.sig.n_e)
    gains = synthesize_gains(plant.sig, np.eye(1), g, ell, d, k=k)
    config = RegulatorConfig(d, phi, gains)
    if initial_state is None:
        w0 = np.zeros(plant.n_w)
        if plant.n_w:
            w0[0] = 1.0
        initial_state = dict(w=w0, x=np.full(plant.n_x, 0.5), eta=np.zeros(config.n_eta))
    return plant, config, initial_state
