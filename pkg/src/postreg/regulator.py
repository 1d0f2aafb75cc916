"""Postprocessing internal-model regulator, closed loop and steady-state analysis.

The regulator is

    eta' = Phi(eta) + G e,
    u    = L (K_xi xi + K_zeta zeta + K_eta eta_1),

where ``Phi`` shifts the blocks of ``eta = (eta_1, ..., eta_d)`` up by one and
feeds ``phi(eta)`` into the last block. `ideal_eta1_star` gives the value of
``eta_1`` that freezes the error dynamics, and `mismatch_along` measures how
far ``phi`` is from generating it along a simulated trajectory.
"""

import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from sympy import Rational, finite_diff_weights

from .errors import BlowUpError, SingularityError, ValidationError
from .gains import GainSet

__all__ = [
    "LinearPhi",
    "RegulatorConfig",
    "ClosedLoopState",
    "ClosedLoop",
    "MismatchResult",
    "make_phi",
    "phi_from_polynomial",
    "lipschitz_ratio",
    "internal_model_rhs",
    "control_law",
    "zeta_bar",
    "closed_loop_rhs",
    "ideal_eta1_star",
    "fd_derivatives",
    "mismatch_along",
    "default_fd_step",
    "stencil_half_width",
    "eta1_star_along",
    "PHI_BUILTINS",
]


@dataclass(frozen=True)
class LinearPhi:
    """``phi(eta) = row @ eta`` with ``row`` of shape ``(n_e, d n_e)``."""

    row: np.ndarray

    def __post_init__(self):
        row = np.atleast_2d(np.asarray(self.row, dtype=float)).copy()
        row.setflags(write=False)
        object.__setattr__(self, "row", row)

    def __call__(self, eta):
        return self.row @ eta

    @property
    def lipschitz(self):
        return float(np.linalg.norm(self.row, 2)) if self.row.size else 0.0


def phi_from_polynomial(coeffs, n_e=1):
    """Linear ``phi`` whose chain has characteristic polynomial ``s^d + c_1 s^(d-1) + ... + c_d``.

    The last block reads ``-(c_d eta_1 + c_(d-1) eta_2 + ... + c_1 eta_d)``.
    """
    c = np.atleast_1d(np.asarray(coeffs, dtype=float))
    return LinearPhi(np.kron(-c[::-1][None, :], np.eye(n_e)))


def _tanh_example(eta):
    return np.array([-4.0 * np.tanh(eta[3])])


PHI_BUILTINS = {
    # s^5 + 4 s^3: modes {0, 0, 0, +2i, -2i}
    "example": (5, 1, lambda: LinearPhi(np.array([[0.0, 0.0, 0.0, -4.0, 0.0]])), 4.0),
    # bounded variant of the same chain, globally Lipschitz with constant 4
    "example_tanh": (5, 1, lambda: _tanh_example, 4.0),
}


def make_phi(spec, d, n_e):
    """Resolve a ``phi`` specification into ``(callable, lipschitz_constant)``.

    ``spec`` is ``None``/``"zero"``, a builtin name, a row (nested list) of
    shape ``(n_e, d n_e)`` or a callable paired with nothing (the caller must
    then pass the Lipschitz constant separately).
    """
    if spec is None or (isinstance(spec, str) and spec == "zero"):
        phi = LinearPhi(np.zeros((n_e, d * n_e)))
        return phi, 0.0
    if isinstance(spec, str):
        if spec not in PHI_BUILTINS:
            raise ValidationError(
                f"unknown phi builtin {spec!r}; known: zero, {', '.join(PHI_BUILTINS)}",
                field="phi")
        bd, bn, factory, lip = PHI_BUILTINS[spec]
        if (bd, bn) != (d, n_e):
            raise ValidationError(
                f"phi builtin {spec!r} needs d={bd}, n_e={bn}", field="phi")
        return factory(), lip
    row = np.atleast_2d(np.asarray(spec, dtype=float))
    if row.shape != (n_e, d * n_e):
        raise ValidationError(
            f"phi row must have shape ({n_e}, {d * n_e}), got {row.shape}", field="phi")
    phi = LinearPhi(row)
    return phi, phi.lipschitz


def lipschitz_ratio(phi, dim, box=10.0, n_pairs=10_000, rng=None):
    """Largest sampled ``|phi(a) - phi(b)| / |a - b|`` over pairs in ``[-box, box]^dim``."""
    rng = np.random.default_rng(0) if rng is None else rng
    a = rng.uniform(-box, box, size=(n_pairs, dim))
    b = rng.uniform(-box, box, size=(n_pairs, dim))
    # half the pairs are close together, where a local violation would show
    b[n_pairs // 2:] = a[n_pairs // 2:] + 1e-3 * rng.standard_normal((n_pairs - n_pairs // 2, dim))
    num = np.array([np.linalg.norm(phi(ai) - phi(bi)) for ai, bi in zip(a, b)])
    den = np.linalg.norm(a - b, axis=1)
    return float(np.max(num / den))


@dataclass(frozen=True)
class RegulatorConfig:
    """Internal-model order ``d``, map ``phi`` with Lipschitz constant ``L_phi``, and gains.

    ``d = 1`` is accepted only with ``phi = 0`` (plain integral action) and
    emits a warning because the convergence analysis needs ``d > 1``.

    Raises
    ------
    ValidationError
        ``d < 1``; ``G`` not of shape ``(d n_e, n_e)``; ``phi(0) != 0``;
        ``phi`` sampled above ``1.01 L_phi``; ``d = 1`` with nonzero ``phi``.
    """

    d: int
    phi: Callable
    gains: GainSet
    L_phi: Optional[float] = None
    lipschitz_box: float = 10.0
    lipschitz_pairs: int = 2000

    def __post_init__(self):
        d = int(self.d) if np.ndim(self.d) == 0 else -1
        if d < 1:
            raise ValidationError(f"internal-model order must satisfy d >= 1, got {self.d}", field="d")
        object.__setattr__(self, "d", d)
        n_e = self.gains.sig.n_e
        if self.gains.G.shape != (d * n_e, n_e):
            raise ValidationError(
                f"G has shape {self.gains.G.shape}, expected ({d * n_e}, {n_e})", field="G")
        phi = self.phi
        if phi is None or isinstance(phi, (str, list, tuple, np.ndarray)):
            phi, lip = make_phi(phi, d, n_e)
            object.__setattr__(self, "phi", phi)
            if self.L_phi is None:
                object.__setattr__(self, "L_phi", lip)
        if self.L_phi is None:
            if isinstance(self.phi, LinearPhi):
                object.__setattr__(self, "L_phi", self.phi.lipschitz)
            else:
                raise ValidationError("L_phi is required for a general phi", field="L_phi")
        phi0 = np.asarray(self.phi(np.zeros(d * n_e)), dtype=float)
        if phi0.shape != (n_e,):
            raise ValidationError(f"phi must return shape ({n_e},), got {phi0.shape}", field="phi")
        if np.linalg.norm(phi0) > 1e-12:
            raise ValidationError("phi(0) must vanish", field="phi")
        if isinstance(self.phi, LinearPhi) and self.L_phi < self.phi.lipschitz * (1 - 1e-12):
            raise ValidationError(
                f"declared L_phi={self.L_phi} is below the exact constant {self.phi.lipschitz:.6g}",
                field="L_phi")
        if self.lipschitz_pairs > 0 and not isinstance(self.phi, LinearPhi):
            ratio = lipschitz_ratio(self.phi, d * n_e, self.lipschitz_box, self.lipschitz_pairs)
            if ratio > 1.01 * self.L_phi:
                raise ValidationError(
                    f"phi is not {self.L_phi}-Lipschitz on the sample (ratio {ratio:.4g})",
                    field="L_phi")
        if d == 1:
            if self.L_phi > 0:
                raise ValidationError(
                    "d = 1 is only supported as integral action (phi = 0)", field="phi")
            warnings.warn(
                "d = 1 with phi = 0 is plain integral action; the regulation guarantees need d > 1",
                stacklevel=3)

    @property
    def n_e(self):
        return self.gains.sig.n_e

    @property
    def n_eta(self):
        return self.d * self.n_e


def internal_model_rhs(eta, e, config):
    """``eta_i' = eta_(i+1) + G_i e`` for ``i < d`` and ``eta_d' = phi(eta) + G_d e``."""
    eta = np.asarray(eta, dtype=float)
    n_e = config.n_e
    out = np.empty_like(eta)
    out[:-n_e] = eta[n_e:]
    out[-n_e:] = config.phi(eta)
    return out + config.gains.G @ np.asarray(e, dtype=float)


def control_law(xi, zeta, eta1, gains):
    """``u = L (K_xi xi + K_zeta zeta + K_eta eta_1)``."""
    return gains.L @ (gains.K_xi @ xi + gains.K_zeta @ zeta + gains.K_eta @ eta1)


def zeta_bar(xi, zeta, eta1, gains):
    """Transformed stabilizer coordinate ``zeta - K (xi + C_e' eta_1) + J eta_1``.

    ``J`` is nonzero only on error blocks without a xi-chain. With it,
    ``control_law(...) == -ell L zeta_bar(...)``.
    """
    sig = gains.sig
    C_e = np.zeros((sig.n_e, sig.n_xi))
    J = np.zeros((sig.n_y, sig.n_e))
    for i in range(sig.r_e):
        ys = sig.y_slice(i)
        if sig.N[i] >= 2:
            C_e[ys, sig.xi_offsets[i]:sig.xi_offsets[i] + sig.p[i]] = np.eye(sig.p[i])
        else:
            J[ys, ys] = np.eye(sig.p[i])
    return zeta - gains.K @ (xi + C_e.T @ eta1) + J @ eta1


@dataclass(frozen=True)
class ClosedLoopState:
    w: np.ndarray
    x: np.ndarray
    eta: np.ndarray

    def flat(self):
        return np.concatenate([np.ravel(self.w), np.ravel(self.x), np.ravel(self.eta)]).astype(float)


class ClosedLoop:
    """Flat vector field of the plant, exosystem and regulator.

    The state is ``z = (w, x, eta)``. Evaluation raises `BlowUpError` when the
    state or its derivative is non-finite or leaves ``[-threshold, threshold]``.
    """

    def __init__(self, plant, config, threshold=1e9):
        if config.gains.sig != plant.sig:
            raise ValidationError("gains and plant have different signatures", field="gains")
        if config.gains.L.shape[0] != plant.n_u:
            raise ValidationError(
                f"L has {config.gains.L.shape[0]} rows but the plant has n_u={plant.n_u}",
                field="L")
        self.plant = plant
        self.config = config
        self.threshold = float(threshold)
        n_w, n_x = plant.n_w, plant.n_x
        self.slices = (slice(0, n_w), slice(n_w, n_w + n_x),
                       slice(n_w + n_x, n_w + n_x + config.n_eta))
        self.dim = n_w + n_x + config.n_eta

    def split(self, z):
        return tuple(z[s] for s in self.slices)

    def state(self, z):
        return ClosedLoopState(*self.split(np.asarray(z, dtype=float)))

    def input(self, w, x, eta):
        p, gains = self.plant, self.config.gains
        return control_law(p.xi(w, x), p.zeta(w, x), eta[: self.config.n_e], gains)

    def signals(self, z):
        """``(e, y_a, u)`` at a flat state."""
        w, x, eta = self.split(np.asarray(z, dtype=float))
        return self.plant.h_e(w, x), self.plant.h_a(w, x), self.input(w, x, eta)

    def rhs(self, t, z):
        z = np.asarray(z, dtype=float)
        if not np.all(np.isfinite(z)) or np.max(np.abs(z), initial=0.0) > self.threshold:
            raise BlowUpError(f"state left the finite range at t={t:.6g}", state=z.copy(), t=t)
        w, x, eta = self.split(z)
        p = self.plant
        u = self.input(w, x, eta)
        e = p.h_e(w, x)
        out = np.concatenate([
            p.s(w),
            p.f(w, x) + p.b(w, x) @ u,
            internal_model_rhs(eta, e, self.config),
        ])
        if not np.all(np.isfinite(out)):
            raise BlowUpError(f"non-finite vector field at t={t:.6g}", state=z.copy(), t=t)
        return out

    __call__ = rhs


def closed_loop_rhs(state, plant, config, t=0.0):
    """Derivative of a `ClosedLoopState` (or flat array) as a flat array."""
    z = state.flat() if isinstance(state, ClosedLoopState) else np.asarray(state, dtype=float)
    return ClosedLoop(plant, config).rhs(t, z)


def ideal_eta1_star(w, x, plant, gains, cond_max=1e12):
    """Solve ``D^ee K'_eta eta_1* = -q^e - D^ee (K_xi^ea xi^a + K_zeta^ea zeta^a) - D^ea (K_xi^aa xi^a + K_zeta^aa zeta^a)``.

    ``D = B(w, x) L`` is partitioned at ``n_e``; ``xi^a``/``zeta^a`` are the
    auxiliary parts of the normal-form coordinates.

    Raises
    ------
    SingularityError
        If ``D^ee K'_eta`` is singular or has condition number above ``cond_max``.
    """
    sig = gains.sig
    ne, nxe = sig.n_e, sig.n_xi_e
    D = plant.B(w, x) @ gains.L
    Dee, Dea = D[:ne, :ne], D[:ne, ne:]
    xi_a = plant.xi(w, x)[nxe:]
    zeta_a = plant.zeta(w, x)[ne:]
    Kx, Kz = gains.K_xi, gains.K_zeta
    rhs = (-plant.q(w, x)[:ne]
           - Dee @ (Kx[:ne, nxe:] @ xi_a + Kz[:ne, ne:] @ zeta_a)
           - Dea @ (Kx[ne:, nxe:] @ xi_a + Kz[ne:, ne:] @ zeta_a))
    Amat = Dee @ gains.K_eta_prime
    cond = np.linalg.cond(Amat)
    if not np.isfinite(cond) or cond > cond_max:
        raise SingularityError(
            f"D^ee K'_eta is singular (condition number {cond:.3g})", condition_number=cond)
    return np.linalg.solve(Amat, rhs)


# ---------------------------------------------------------------------------
# finite differences and mismatch


@lru_cache(maxsize=None)
def _stencil(order, half_width):
    pts = [Rational(j) for j in range(-half_width, half_width + 1)]
    w = finite_diff_weights(order, pts, 0)
    return tuple(np.array([float(c) for c in w[k][-1]]) for k in range(order + 1))


def stencil_half_width(d):
    """Half-width giving accuracy order at least ``d + 2`` for every derivative up to ``d``."""
    return int(np.ceil((2 * d + 1) / 2))


def fd_derivatives(y, dt, order, half_width=None):
    """Central finite-difference derivatives ``0..order`` of uniformly sampled data.

    Parameters
    ----------
    y : ndarray, shape (n, ...)
        Samples at spacing ``dt`` along axis 0.
    order : int
    half_width : int, optional
        Stencil half-width ``m`` (``2m + 1`` points); default `stencil_half_width`.

    Returns
    -------
    ndarray, shape (order + 1, n - 2m, ...)
        Derivative ``k`` at the interior samples ``m .. n - m - 1``.
    """
    y = np.asarray(y, dtype=float)
    m = stencil_half_width(order) if half_width is None else int(half_width)
    n = y.shape[0]
    if n < 2 * m + 1:
        raise ValidationError(
            f"need at least {2 * m + 1} samples for order-{order} differencing, got {n}",
            field="grid")
    weights = _stencil(order, m)
    out = np.zeros((order + 1, n - 2 * m) + y.shape[1:])
    for k, wk in enumerate(weights):
        for j, c in enumerate(wk):
            if c != 0.0:
                out[k] += c * y[j:n - 2 * m + j]
        out[k] /= dt ** k
    return out


@dataclass
class MismatchResult:
    """Mismatch ``delta = phi(eta*) - eta_1*^(d)`` along a trajectory tail."""

    t: np.ndarray
    eta1_star: np.ndarray
    eta_star: np.ndarray
    eta1_star_d: np.ndarray
    delta: np.ndarray
    delta_bar: float
    window: tuple
    fd_step: float
    stencil_points: int
    extras: dict = field(default_factory=dict)


def eta1_star_along(traj, plant, gains, idx=None):
    """``eta_1*`` evaluated at the trajectory samples ``idx`` (default: all)."""
    idx = range(len(traj.t)) if idx is None else idx
    return np.array([ideal_eta1_star(traj.w[i], traj.x[i], plant, gains) for i in idx])


def default_fd_step(d):
    """Differencing step ``0.04 d``: rounding error is amplified like ``h^-d``, so higher orders need wider steps."""
    return 0.04 * max(int(d), 1)


def mismatch_along(traj, plant, config, tail_start=None, fd_step=None, half_width=None):
    """Estimate ``delta(t)`` and ``delta_bar`` on the tail of a trajectory.

    ``eta_1*`` is evaluated at every reporting-grid sample of the tail and
    differentiated by central differences of accuracy order ``>= d + 2``, using
    sample stride ``round(fd_step / dt)``.

    Parameters
    ----------
    traj : Trajectory
        Needs ``t`` (uniform), ``w`` and ``x``.
    tail_start : float, optional
        Start of the tail window; default: last 20% of the horizon.
    fd_step : float, optional
        Differencing step, rounded to a multiple of the grid spacing; default
        `default_fd_step`. Much smaller steps are dominated by rounding error
        at high order.

    Raises
    ------
    ValidationError
        Non-uniform grid or too few samples in the tail.
    """
    t = np.asarray(traj.t, dtype=float)
    if t.size < 2:
        raise ValidationError("trajectory has fewer than two samples", field="grid")
    dt = float(t[1] - t[0])
    if np.max(np.abs(np.diff(t) - dt)) > 1e-9 * max(1.0, abs(t[-1])):
        raise ValidationError("mismatch estimation needs a uniform time grid", field="grid")
    d = config.d
    m = stencil_half_width(d) if half_width is None else int(half_width)
    fd_step = default_fd_step(d) if fd_step is None else fd_step
    stride = max(1, int(round(fd_step / dt)))
    if tail_start is None:
        tail_start = t[0] + 0.8 * (t[-1] - t[0])
    i0 = int(np.searchsorted(t, tail_start - 1e-12))
    need = 2 * m * stride + 1
    if t.size - i0 < need:
        raise ValidationError(
            f"tail has {t.size - i0} samples; order-{d} differencing at stride {stride} "
            f"needs at least {need}", field="grid")
    eta1 = eta1_star_along(traj, plant, config.gains, range(i0, t.size))
    h = stride * dt
    n_out = eta1.shape[0] - 2 * m * stride
    derivs = np.zeros((d + 1, n_out, eta1.shape[1]))
    weights = _stencil(d, m)
    for k, wk in enumerate(weights):
        for j, c in enumerate(wk):
            if c != 0.0:
                derivs[k] += c * eta1[j * stride:j * stride + n_out]
        derivs[k] /= h ** k
    eta_star = np.transpose(derivs[:d], (1, 0, 2)).reshape(n_out, -1)
    phi_vals = np.array([config.phi(v) for v in eta_star]).reshape(n_out, -1)
    delta = phi_vals - derivs[d]
    tt = t[i0 + m * stride:i0 + m * stride + n_out]
    dbar = float(np.max(np.linalg.norm(delta, axis=1))) if n_out else 0.0
    return MismatchResult(
        t=tt, eta1_star=derivs[0], eta_star=eta_star, eta1_star_d=derivs[d], delta=delta,
        delta_bar=dbar, window=(float(t[i0]), float(t[-1])), fd_step=h,
        stencil_points=2 * m + 1)
