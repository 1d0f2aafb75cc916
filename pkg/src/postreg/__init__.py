"""Postprocessing internal-model regulators for nonlinear plants in partial normal form.

Modules
-------
normal_form   structural matrices ``F, H, C`` and the internal-model chain
plant         plant contract, the three-state example and a linear oracle
gains         input gain ``L``, cascade gain ``K``, injection ``G``
regulator     internal model, control law, closed loop, ``eta_1*`` and mismatch
checks        sampled certification of the gain conditions
sim           integration, tail statistics, sweeps, CSV export
cli           command-line front end
"""

from .errors import (
    BlowUpError,
    ConfigError,
    FactorizationError,
    PostregError,
    SingularityError,
    SynthesisError,
    ValidationError,
)
from .normal_form import (
    Signature,
    binomial_hurwitz,
    build_delta_scaling,
    build_internal_model_matrices,
    build_lambda,
    build_signature,
    build_structure,
    is_hurwitz,
)
from .plant import (
    ExamplePlantParams,
    LinearOracleData,
    Plant,
    make_example_plant,
    make_linear_oracle_plant,
    validate_plant,
)
from .gains import (
    GainSet,
    assemble_gains,
    build_G,
    build_L_back,
    build_L_minors,
    build_L_negativity,
    build_L_positivity,
    emu_factorize,
    synthesize_gains,
    synthesize_K,
)
from .regulator import (
    ClosedLoop,
    RegulatorConfig,
    control_law,
    ideal_eta1_star,
    internal_model_rhs,
    mismatch_along,
)
from .sim import Trajectory, integrate, sweep, tail_stats
from .builtins import example_setup, linear_oracle_setup

__version__ = "0.1.0"
