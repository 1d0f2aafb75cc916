"""Plant/exosystem contract, the worked three-state example and a linear oracle plant.

A `Plant` is a bundle of callables. The user supplies the partial-normal-form
coordinates ``xi(w, x)`` and ``zeta(w, x)`` together with ``q`` and ``B`` of
``zeta' = q + B u``; `validate_plant` checks these against the raw dynamics by
central finite differences.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, ValidationError
from .normal_form import Signature, StructureMatrices, build_signature, build_structure, is_hurwitz

__all__ = [
    "Plant",
    "ValidationReport",
    "ExamplePlantParams",
    "LinearOracleData",
    "make_example_plant",
    "make_linear_oracle_plant",
    "validate_plant",
    "sample_plant_points",
    "example_L",
    "example_P",
    "example_M",
    "kappa_condition",
    "certified_m",
    "harmonic_exosystem",
]


@dataclass(frozen=True)
class Plant:
    """Exosystem-driven plant ``w' = s(w)``, ``x' = f(w,x) + b(w,x) u``.

    Attributes
    ----------
    sig : Signature
        Partial-normal-form signature; ``sig.n_y`` is the dimension of ``zeta``.
    n_w, n_x, n_u : int
        Exosystem, plant state and input dimensions.
    s, f, b : callable
        ``s(w)``, ``f(w, x)`` and ``b(w, x)`` (an ``n_x x n_u`` array).
    h_e, h_a : callable
        Regulation error (``n_e``) and measured auxiliary outputs (``n_ya``).
    xi, zeta, q, B : callable
        Normal-form coordinates and the ``zeta`` dynamics.
    W_box : ndarray, shape (n_w, 2)
        Bounding box of the compact invariant exosystem set.
    W_contains : callable, optional
        Membership predicate for the invariant set; defaults to the box.
    """

    sig: Signature
    n_w: int
    n_x: int
    n_u: int
    s: Callable
    f: Callable
    b: Callable
    h_e: Callable
    h_a: Callable
    xi: Callable
    zeta: Callable
    q: Callable
    B: Callable
    W_box: np.ndarray
    n_ya: int = 0
    W_contains: Optional[Callable] = None
    name: str = "plant"
    params: dict = field(default_factory=dict)
    structure: StructureMatrices = field(default=None, compare=False)

    def __post_init__(self):
        if self.n_u < self.sig.n_y:
            raise ConfigError(
                f"need n_u >= n_y, got n_u={self.n_u} < n_y={self.sig.n_y}", field="n_u")
        box = np.asarray(self.W_box, dtype=float).reshape(self.n_w, 2)
        object.__setattr__(self, "W_box", box)
        if self.structure is None:
            object.__setattr__(self, "structure", build_structure(self.sig))

    def in_W(self, w):
        if self.W_contains is not None:
            return bool(self.W_contains(w))
        w = np.asarray(w)
        return bool(np.all(w >= self.W_box[:, 0]) and np.all(w <= self.W_box[:, 1]))

    def split(self, xbar):
        """Split a stacked point ``(w, x)``."""
        xbar = np.asarray(xbar, dtype=float)
        return xbar[: self.n_w], xbar[self.n_w:self.n_w + self.n_x]

    def at(self, name):
        """Return ``name`` as a function of a stacked point ``xbar = (w, x)``."""
        fn = getattr(self, name)
        return lambda xbar: fn(*self.split(xbar))

    def normal_form_output(self, w, x):
        """``y`` as read off the normal form: ``xi^i_1`` if ``N_i >= 2``, else ``zeta^i``."""
        sig = self.sig
        xi, zeta = self.xi(w, x), self.zeta(w, x)
        y = np.empty(sig.n_y)
        for i, Ni in enumerate(sig.N):
            ys = sig.y_slice(i)
            if Ni >= 2:
                start = sig.xi_offsets[i]
                y[ys] = xi[start:start + sig.p[i]]
            else:
                y[ys] = zeta[ys]
        return y


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    """Worst finite-difference residuals of the normal-form identities over a sample."""

    n_points: int
    n_invalid: int
    xi_drift_residual: float
    xi_input_residual: float
    zeta_residual: float
    output_residual: float
    q_origin_norm: float
    fd_step: float

    def passed(self, tol=1e-6):
        return (self.n_invalid == 0
                and max(self.xi_drift_residual, self.xi_input_residual,
                        self.zeta_residual, self.output_residual) <= tol)


def sample_plant_points(plant, n, x_box, rng=None):
    """Uniform random points ``(w, x)`` with ``w`` in ``W_box`` and ``x`` in ``x_box``."""
    rng = np.random.default_rng(rng)
    box = np.vstack([plant.W_box, np.asarray(x_box, dtype=float).reshape(plant.n_x, 2)])
    pts = rng.uniform(box[:, 0], box[:, 1], size=(n, len(box)))
    if plant.W_contains is not None:
        keep = np.array([plant.in_W(p[: plant.n_w]) for p in pts], dtype=bool)
        pts = pts[keep]
    return pts


def validate_plant(plant, sample_points, fd_step=1e-5, rng=None):
    """Check ``xi' = F xi + H zeta``, ``L_{bu} xi = 0`` and ``zeta' = q + B u`` numerically.

    All directional derivatives are central differences with step ``fd_step``
    along the (unnormalised) vector field. Each point is also checked for
    ``h_e`` agreeing with the error rows of the normal-form output.

    Parameters
    ----------
    plant : Plant
    sample_points : (n, n_w + n_x) array_like
        Stacked points ``(w, x)``.
    fd_step : float
    rng : seed or Generator, optional
        Source of the random inputs ``u`` used in the input-direction checks.

    Returns
    -------
    ValidationReport
    """
    if not fd_step > 0:
        raise ValidationError("fd_step must be positive", field="fd_step")
    rng = np.random.default_rng(rng)
    F, H = plant.structure.F, plant.structure.H
    n_e = plant.sig.n_e
    h = fd_step
    worst = dict(xd=0.0, xu=0.0, z=0.0, y=0.0)
    n_invalid = 0
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    for pt in pts:
        w, x = plant.split(pt)
        u = rng.standard_normal(plant.n_u)
        try:
            with np.errstate(all="raise"):
                sw, fx, bx = plant.s(w), plant.f(w, x), plant.b(w, x)
                xi0, zeta0 = plant.xi(w, x), plant.zeta(w, x)
                dxi = (plant.xi(w + h * sw, x + h * fx) - plant.xi(w - h * sw, x - h * fx)) / (2 * h)
                bu = bx @ u
                dxi_u = (plant.xi(w, x + h * bu) - plant.xi(w, x - h * bu)) / (2 * h)
                xdot = fx + bu
                dzeta = (plant.zeta(w + h * sw, x + h * xdot)
                         - plant.zeta(w - h * sw, x - h * xdot)) / (2 * h)
                zeta_model = plant.q(w, x) + plant.B(w, x) @ u
                y_nf = plant.normal_form_output(w, x)
                e = np.atleast_1d(plant.h_e(w, x))
        except (FloatingPointError, OverflowError):
            n_invalid += 1
            continue
        vals = [dxi, dxi_u, dzeta, zeta_model, y_nf, e]
        if not all(np.all(np.isfinite(v)) for v in vals):
            n_invalid += 1
            continue

        def _inf(v):
            return float(np.max(np.abs(v))) if np.size(v) else 0.0

        worst["xd"] = max(worst["xd"], _inf(dxi - (F @ xi0 + H @ zeta0)))
        worst["xu"] = max(worst["xu"], _inf(dxi_u))
        worst["z"] = max(worst["z"], _inf(dzeta - zeta_model))
        worst["y"] = max(worst["y"], _inf(e - y_nf[:n_e]))
    q0 = plant.q(np.zeros(plant.n_w), np.zeros(plant.n_x))
    return ValidationReport(
        n_points=len(pts), n_invalid=n_invalid,
        xi_drift_residual=worst["xd"], xi_input_residual=worst["xu"],
        zeta_residual=worst["z"], output_residual=worst["y"],
        q_origin_norm=float(np.linalg.norm(q0)), fd_step=h)


# ---------------------------------------------------------------------------
# the three-state example


def _zero1(*args):
    return 0.0


@dataclass(frozen=True)
class ExamplePlantParams:
    """Parameters of the three-state, two-input example.

    The default maps are those used in the simulations: ``f1 = kappa = gamma1 = 0``,
    ``gamma2 = q exp(2 w1^2)``, ``gamma3 = w1^2``, ``b = w1``, with a harmonic
    exosystem on the ball of radius ``W_radius``.
    """

    q: float = 0.0
    alpha: float = 5.0
    m: float = 1.0
    W_radius: float = 3.0
    kappa: Optional[Callable] = None
    kappa_prime: Optional[Callable] = None
    f1: Optional[Callable] = None
    gamma1: Optional[Callable] = None
    gamma2: Optional[Callable] = None
    gamma3: Optional[Callable] = None
    b: Optional[Callable] = None

    def maps(self):
        q = float(self.q)
        kappa = self.kappa or _zero1
        if self.kappa_prime is not None:
            kappa_prime = self.kappa_prime
        elif self.kappa is None:
            kappa_prime = _zero1
        else:
            def kappa_prime(s, _k=kappa, _h=1e-6):
                return (_k(s + _h) - _k(s - _h)) / (2 * _h)
        return dict(
            kappa=kappa,
            kappa_prime=kappa_prime,
            f1=self.f1 or _zero1,
            gamma1=self.gamma1 or _zero1,
            gamma2=self.gamma2 or (lambda w, x: q * np.exp(2.0 * w[0] ** 2)),
            gamma3=self.gamma3 or (lambda w, x: w[0] ** 2),
            b=self.b or (lambda w: w[0]),
        )

    def W_grid(self, n=201):
        r = self.W_radius
        g = np.linspace(-r, r, n)
        W1, W2 = np.meshgrid(g, g, indexing="ij")
        pts = np.column_stack([W1.ravel(), W2.ravel()])
        return pts[np.hypot(pts[:, 0], pts[:, 1]) <= r + 1e-12]


def kappa_condition(params, n=10_000, span=10.0):
    """Largest value of ``s (f1(s) - kappa(s))`` on a uniform grid of ``[-span, span]``.

    The sector condition on ``kappa`` requires this to be ``<= 0``.
    """
    mp = params.maps()
    s = np.linspace(-span, span, n)
    vals = np.array([si * (mp["f1"](si) - mp["kappa"](si)) for si in s])
    return float(vals.max())


def example_L(params):
    """Input gain ``diag(alpha^2, alpha) / m``."""
    a = params.alpha
    return np.diag([a * a, a]) / params.m


def example_P(params):
    """Certificate matrix ``[[1 + b^2, b], [b, 1]]`` as a function of ``(w, x)``."""
    bfun = params.maps()["b"]

    def P(w, x=None):
        bw = bfun(w)
        return np.array([[1.0 + bw * bw, bw], [bw, 1.0]])
    return P


def example_M(params, w):
    """Closed form ``[[2 a^2, a (1 + b)], [a (1 + b), 2 a]]`` of ``L0' B' P + P B L0``."""
    a = params.alpha
    bw = params.maps()["b"](w)
    return np.array([[2 * a * a, a * (1 + bw)], [a * (1 + bw), 2 * a]])


def certified_m(params, n=201):
    """Smallest eigenvalue of `example_M` over a grid of the exosystem ball."""
    return float(min(np.linalg.eigvalsh(example_M(params, w))[0] for w in params.W_grid(n)))


def make_example_plant(params=None):
    """Build the three-state example as a `Plant`.

    ``e = x2``, measured ``y_a = (x1, x3)``, ``zeta = (x2, x3 + x1 + kappa(x1))``,
    no xi-chain (signature ``p = (1, 1)``, ``N = (1, 1)``, ``r_e = 1``).

    Raises
    ------
    ConfigError
        If ``4 alpha <= 1 + sup_W (1 + b(w))^2`` or the sector condition on
        ``kappa`` fails on the sample grid.
    """
    params = params or ExamplePlantParams()
    if not params.alpha > 0 or not params.m > 0:
        raise ConfigError("alpha and m must be positive", field="alpha")
    mp = params.maps()
    bfun, f1, kappa, kprime = mp["b"], mp["f1"], mp["kappa"], mp["kappa_prime"]
    g1, g2, g3 = mp["gamma1"], mp["gamma2"], mp["gamma3"]
    sup_b = max((1.0 + bfun(w)) ** 2 for w in params.W_grid(101))
    if not 4 * params.alpha > 1 + sup_b:
        raise ConfigError(
            f"alpha={params.alpha} violates 4 alpha > 1 + sup (1 + b)^2 = {1 + sup_b:.6g}",
            field="alpha")
    if kappa_condition(params) > 1e-12:
        raise ConfigError("kappa violates s (f1(s) - kappa(s)) <= 0", field="kappa")

    def s(w):
        return np.array([w[1], -w[0]])

    def f(w, x):
        return np.array([f1(x[0]) + g1(w, x[1]) + x[2], g2(w, x), g3(w, x)])

    def b(w, x):
        bw = bfun(w)
        return np.array([[0.0, 0.0], [1.0, 1.0], [-bw, 1.0 - bw]])

    def zeta(w, x):
        return np.array([x[1], x[2] + x[0] + kappa(x[0])])

    def q(w, x):
        return np.array([
            g2(w, x),
            g3(w, x) + (1.0 + kprime(x[0])) * (f1(x[0]) + g1(w, x[1]) + x[2]),
        ])

    def B(w, x):
        bw = bfun(w)
        return np.array([[1.0, 1.0], [-bw, 1.0 - bw]])

    r = params.W_radius
    return Plant(
        sig=build_signature([1, 1], [1, 1], 1),
        n_w=2, n_x=3, n_u=2, n_ya=2,
        s=s, f=f, b=b,
        h_e=lambda w, x: np.array([x[1]]),
        h_a=lambda w, x: np.array([x[0], x[2]]),
        xi=lambda w, x: np.zeros(0),
        zeta=zeta, q=q, B=B,
        W_box=[[-r, r], [-r, r]],
        W_contains=lambda w: float(np.hypot(w[0], w[1])) <= r + 1e-12,
        name="example",
        params=dict(q=params.q, alpha=params.alpha, m=params.m),
    )


# ---------------------------------------------------------------------------
# linear oracle


def harmonic_exosystem(freqs):
    """Block-diagonal exosystem matrix: a zero block for frequency 0, a rotation otherwise."""
    blocks = []
    for om in freqs:
        om = float(om)
        if om == 0.0:
            blocks.append(np.zeros((1, 1)))
        elif om > 0:
            blocks.append(np.array([[0.0, om], [-om, 0.0]]))
        else:
            raise ConfigError(f"exosystem frequencies must be >= 0, got {om}", field="exo_freqs")
    if not blocks:
        return np.zeros((0, 0))
    n = sum(len(b) for b in blocks)
    S = np.zeros((n, n))
    i = 0
    for blk in blocks:
        S[i:i + len(blk), i:i + len(blk)] = blk
        i += len(blk)
    return S


@dataclass(frozen=True)
class LinearOracleData:
    """Single-input integrator chain with stable zero dynamics and a harmonic exosystem.

    ``x = (x_1, ..., x_N, z)`` with ``x_j' = x_{j+1}`` for ``j < N``,
    ``x_N' = a . x_chain + c_z . z + P . w + u``,
    ``z' = A_z z + b_z x_1 + P_z w``, and ``e = x_1 - Q . w``.
    """

    chain_length: int = 2
    exo_freqs: tuple = (1.0,)
    a: Optional[np.ndarray] = None
    A_z: Optional[np.ndarray] = None
    b_z: Optional[np.ndarray] = None
    c_z: Optional[np.ndarray] = None
    P: Optional[np.ndarray] = None
    P_z: Optional[np.ndarray] = None
    Q: Optional[np.ndarray] = None
    W_radius: float = 1.0

    @property
    def S(self):
        return harmonic_exosystem(self.exo_freqs)

    @property
    def n_w(self):
        return self.S.shape[0]

    def arrays(self):
        """Fill defaults and return all coefficient arrays with checked shapes."""
        N, n_w = self.chain_length, self.n_w
        A_z = np.atleast_2d(np.asarray(self.A_z if self.A_z is not None else [[-1.0]], dtype=float))
        n_z = A_z.shape[0] if A_z.size else 0
        def vec(v, n, default):
            v = np.asarray(default if v is None else v, dtype=float).reshape(-1)
            if v.shape != (n,):
                raise ConfigError(f"expected length {n}, got {v.shape}")
            return v
        a = vec(self.a, N, np.zeros(N))
        b_z = vec(self.b_z, n_z, np.ones(n_z))
        c_z = vec(self.c_z, n_z, np.ones(n_z))
        P = vec(self.P, n_w, 0.5 * np.ones(n_w))
        Q = vec(self.Q, n_w, np.eye(1, n_w).ravel() if n_w else np.zeros(0))
        P_z = np.asarray(self.P_z if self.P_z is not None else np.zeros((n_z, n_w)), dtype=float)
        P_z = P_z.reshape(n_z, n_w)
        return dict(a=a, A_z=A_z.reshape(n_z, n_z), b_z=b_z, c_z=c_z, P=P, P_z=P_z, Q=Q)

    def state_space(self):
        """Return ``(A, B, P_x, C, Q_e)`` of ``x' = A x + B u + P_x w``, ``e = C x + Q_e w``."""
        ar = self.arrays()
        N = self.chain_length
        n_z = ar["A_z"].shape[0]
        n_x = N + n_z
        A = np.zeros((n_x, n_x))
        A[: N - 1, 1:N] = np.eye(N - 1)
        A[N - 1, :N] = ar["a"]
        A[N - 1, N:] = ar["c_z"]
        A[N:, 0] = ar["b_z"]
        A[N:, N:] = ar["A_z"]
        B = np.zeros((n_x, 1))
        B[N - 1, 0] = 1.0
        P_x = np.zeros((n_x, self.n_w))
        P_x[N - 1] = ar["P"]
        P_x[N:] = ar["P_z"]
        C = np.zeros((1, n_x))
        C[0, 0] = 1.0
        return A, B, P_x, C, -ar["Q"][None, :]

    def francis(self):
        """Solve ``Pi S = A Pi + B Gamma + P_x``, ``0 = C Pi + Q_e`` for ``(Pi, Gamma)``.

        The steady-state input is ``u = Gamma w`` and the steady-state plant
        state is ``x = Pi w``.
        """
        A, B, P_x, C, Q_e = self.state_space()
        S = self.S
        n_x, n_w, n_u = A.shape[0], S.shape[0], B.shape[1]
        I_w, I_x = np.eye(n_w), np.eye(n_x)
        top = np.hstack([np.kron(S.T, I_x) - np.kron(I_w, A), -np.kron(I_w, B)])
        bot = np.hstack([np.kron(I_w, C), np.zeros((n_w * C.shape[0], n_w * n_u))])
        rhs = np.concatenate([P_x.ravel(order="F"), -Q_e.ravel(order="F")])
        sol = np.linalg.solve(np.vstack([top, bot]), rhs)
        Pi = sol[: n_x * n_w].reshape((n_x, n_w), order="F")
        Gamma = sol[n_x * n_w:].reshape((n_u, n_w), order="F")
        return Pi, Gamma


def make_linear_oracle_plant(data=None, exo_freqs=None):
    """Build the linear oracle plant.

    Parameters
    ----------
    data : LinearOracleData or dict, optional
        Coefficients; a dict is forwarded to `LinearOracleData`.
    exo_freqs : sequence of float, optional
        Overrides ``data.exo_freqs``; ``()`` gives no exosystem at all.

    Raises
    ------
    ConfigError
        If the zero dynamics ``A_z`` is not Hurwitz (the plant would not be
        minimum phase and no high-gain design can stabilize it).
    """
    if data is None:
        data = LinearOracleData()
    elif isinstance(data, dict):
        data = LinearOracleData(**data)
    if exo_freqs is not None:
        data = replace(data, exo_freqs=tuple(exo_freqs))
    if data.chain_length < 1:
        raise ConfigError("chain_length must be >= 1", field="chain_length")
    ar = data.arrays()
    if ar["A_z"].size and not is_hurwitz(ar["A_z"]):
        raise ConfigError("zero dynamics A_z is not Hurwitz", field="A_z")
    A, B, P_x, _, _ = data.state_space()
    S = data.S
    N, n_w = data.chain_length, data.n_w
    Q = ar["Q"]
    # rows Q S^j, j = 0..N, for the moving reference
    QS = [Q.copy()]
    for _ in range(N):
        QS.append(QS[-1] @ S if n_w else QS[-1])
    QS = np.array(QS).reshape(N + 1, n_w)
    q_row_x = A[N - 1]
    q_row_w = P_x[N - 1] - QS[N]

    def s(w):
        return S @ w

    def f(w, x):
        return A @ x + P_x @ w

    def b(w, x):
        return B

    def xi(w, x):
        return x[: N - 1] - QS[: N - 1] @ w

    def zeta(w, x):
        return np.array([x[N - 1] - QS[N - 1] @ w])

    def q(w, x):
        return np.array([q_row_x @ x + q_row_w @ w])

    B_nf = np.ones((1, 1))
    r = data.W_radius
    return Plant(
        sig=build_signature([1], [N], 1),
        n_w=n_w, n_x=A.shape[0], n_u=1, n_ya=0,
        s=s, f=f, b=b,
        h_e=lambda w, x: np.array([x[0] - Q @ w]),
        h_a=lambda w, x: np.zeros(0),
        xi=xi, zeta=zeta, q=q, B=lambda w, x: B_nf,
        W_box=[[-r, r]] * n_w,
        name="linear_oracle",
        params=dict(data=data),
    )
