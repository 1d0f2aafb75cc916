"""Structural matrices of the partial normal form and of the internal model.

All block indices are 0-based: block ``i`` of a signature corresponds to the
pair ``(p[i], N[i])``. The first ``r_e`` blocks carry the regulation error, the
remaining ones the auxiliary outputs.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import comb

from .errors import ValidationError

__all__ = [
    "Signature",
    "StructureMatrices",
    "InternalModelMatrices",
    "build_signature",
    "build_structure",
    "build_lambda",
    "build_delta_scaling",
    "build_internal_model_matrices",
    "binomial_hurwitz",
    "is_hurwitz",
]


@dataclass(frozen=True)
class Signature:
    """Dimension bookkeeping of a partial normal form.

    Attributes
    ----------
    p : tuple of int
        Output-block widths ``p_i``.
    N : tuple of int
        Chain lengths ``N_i``; a block contributes ``p_i (N_i - 1)`` states to
        ``xi`` and ``p_i`` states to ``zeta``.
    r_e : int
        Number of leading blocks forming the regulation error.
    """

    p: tuple
    N: tuple
    r_e: int

    @property
    def r(self):
        return len(self.p)

    @property
    def n_y(self):
        return sum(self.p)

    @property
    def n_e(self):
        return sum(self.p[: self.r_e])

    @property
    def n_a(self):
        return self.n_y - self.n_e

    @property
    def N_total(self):
        return sum(pi * Ni for pi, Ni in zip(self.p, self.N))

    @property
    def n_xi(self):
        return self.N_total - self.n_y

    @property
    def xi_widths(self):
        return tuple(pi * (Ni - 1) for pi, Ni in zip(self.p, self.N))

    @property
    def n_xi_e(self):
        return sum(self.xi_widths[: self.r_e])

    @cached_property
    def xi_offsets(self):
        return tuple(int(v) for v in np.concatenate([[0], np.cumsum(self.xi_widths)]))

    @cached_property
    def y_offsets(self):
        return tuple(int(v) for v in np.concatenate([[0], np.cumsum(self.p)]))

    def xi_slice(self, i):
        return slice(self.xi_offsets[i], self.xi_offsets[i + 1])

    def y_slice(self, i):
        return slice(self.y_offsets[i], self.y_offsets[i + 1])


def build_signature(p, N, r_e):
    """Validate block widths and chain lengths and return a `Signature`.

    Raises
    ------
    ValidationError
        With ``field`` set to ``"p"``, ``"N"`` or ``"r_e"``.
    """
    p = tuple(int(v) for v in np.atleast_1d(p))
    N = tuple(int(v) for v in np.atleast_1d(N))
    if len(p) == 0:
        raise ValidationError("p must be nonempty", field="p")
    if len(N) != len(p):
        raise ValidationError(
            f"N has length {len(N)} but p has length {len(p)}", field="N")
    if any(v < 1 for v in p):
        raise ValidationError(f"entries of p must be >= 1, got {p}", field="p")
    if any(v < 1 for v in N):
        raise ValidationError(f"entries of N must be >= 1, got {N}", field="N")
    r_e = int(r_e)
    if not 1 <= r_e <= len(p):
        raise ValidationError(
            f"r_e must lie in [1, {len(p)}], got {r_e}", field="r_e")
    return Signature(p=p, N=N, r_e=r_e)


@dataclass(frozen=True)
class StructureMatrices:
    """Matrices ``F, H, C`` of ``xi' = F xi + H zeta`` and ``y = C xi``.

    ``C_e``/``C_a`` are the error/auxiliary row blocks of ``C``. Blocks with
    ``N_i = 1`` have no xi-chain, so their rows of ``C`` are empty (the output
    of such a block is ``zeta_i`` itself).
    """

    sig: Signature
    F: np.ndarray
    H: np.ndarray
    C: np.ndarray

    @property
    def C_e(self):
        return self.C[: self.sig.n_e]

    @property
    def C_a(self):
        return self.C[self.sig.n_e:]


def _diag_blocks(p, N):
    m = p * (N - 1)
    F = np.zeros((m, m))
    H = np.zeros((m, p))
    C = np.zeros((p, m))
    if N >= 2:
        F[: m - p, p:] = np.eye(m - p)
        H[m - p:, :] = np.eye(p)
        C[:, :p] = np.eye(p)
    return F, H, C


def build_structure(sig, off_diag=None):
    """Assemble ``F``, ``H`` and ``C`` for a signature.

    Parameters
    ----------
    sig : Signature
    off_diag : dict, optional
        Maps ``(i, j)`` with ``i > j`` to a pair ``(F_ij, H_ij)`` of strictly
        lower blocks; either entry may be None. Default: all zero.

    Returns
    -------
    StructureMatrices
    """
    n = sig.n_xi
    F = np.zeros((n, n))
    H = np.zeros((n, sig.n_y))
    C = np.zeros((sig.n_y, n))
    for i, (pi, Ni) in enumerate(zip(sig.p, sig.N)):
        Fi, Hi, Ci = _diag_blocks(pi, Ni)
        xs, ys = sig.xi_slice(i), sig.y_slice(i)
        F[xs, xs] = Fi
        H[xs, ys] = Hi
        C[ys, xs] = Ci
    for (i, j), (Fij, Hij) in (off_diag or {}).items():
        if not (0 <= j < i < sig.r):
            raise ValidationError(
                f"off-diagonal block ({i}, {j}) is not strictly lower", field="off_diag")
        if Fij is not None:
            Fij = np.asarray(Fij, dtype=float)
            shape = (sig.xi_widths[i], sig.xi_widths[j])
            if Fij.shape != shape:
                raise ValidationError(
                    f"F[{i},{j}] must have shape {shape}, got {Fij.shape}", field="off_diag")
            F[sig.xi_slice(i), sig.xi_slice(j)] = Fij
        if Hij is not None:
            Hij = np.asarray(Hij, dtype=float)
            shape = (sig.xi_widths[i], sig.p[j])
            if Hij.shape != shape:
                raise ValidationError(
                    f"H[{i},{j}] must have shape {shape}, got {Hij.shape}", field="off_diag")
            H[sig.xi_slice(i), sig.y_slice(j)] = Hij
    for arr in (F, H, C):
        arr.setflags(write=False)
    return StructureMatrices(sig=sig, F=F, H=H, C=C)


def build_lambda(i, k, sig):
    """Cascade scaling ``diag(k^(N_i-2) I, ..., k I, I)`` of block ``i``."""
    pi, Ni = sig.p[i], sig.N[i]
    if Ni < 2:
        raise ValidationError(f"no xi-chain for this block (N_{i} = {Ni})", field="i")
    if not k > 0:
        raise ValidationError(f"k must be positive, got {k}", field="k")
    powers = np.repeat(np.arange(Ni - 2, -1, -1), pi)
    return np.diag(float(k) ** powers)


def build_delta_scaling(d, g, n_e):
    """High-gain scaling ``diag(I, g I, ..., g^(d-1) I)`` of size ``d n_e``."""
    if d < 1:
        raise ValidationError(f"d must be >= 1, got {d}", field="d")
    if not g > 0:
        raise ValidationError(f"g must be positive, got {g}", field="g")
    return np.diag(np.repeat(float(g) ** np.arange(d), n_e))


@dataclass(frozen=True)
class InternalModelMatrices:
    """Shift/injection/selection matrices of the internal-model chain."""

    d: int
    n_e: int
    h: np.ndarray
    A: np.ndarray
    E: np.ndarray
    Gamma: np.ndarray
    R: np.ndarray

    @property
    def M(self):
        return self.A - self.R @ self.Gamma


def build_internal_model_matrices(d, n_e, h):
    h = np.atleast_1d(np.asarray(h, dtype=float))
    if d < 1:
        raise ValidationError(f"d must be >= 1, got {d}", field="d")
    if h.shape != (d,):
        raise ValidationError(f"h must have length d={d}, got {h.shape}", field="h")
    I = np.eye(n_e)
    A = np.kron(np.eye(d, k=1), I)
    E = np.kron(np.eye(d)[:, -1:], I)
    Gamma = np.kron(np.eye(d)[:1, :], I)
    R = np.kron(h[:, None], I)
    return InternalModelMatrices(d=d, n_e=n_e, h=h, A=A, E=E, Gamma=Gamma, R=R)


def binomial_hurwitz(n):
    """Coefficients ``(c_1, ..., c_n)`` of ``(s + 1)^n = s^n + c_1 s^(n-1) + ... + c_n``."""
    return np.array([float(comb(n, i, exact=True)) for i in range(1, n + 1)])


def is_hurwitz(matrix_or_coeffs):
    """True if every eigenvalue (matrix) or root (monic coefficients) has negative real part."""
    a = np.asarray(matrix_or_coeffs, dtype=float)
    if a.ndim == 2:
        roots = np.linalg.eigvals(a) if a.size else np.array([])
    else:
        roots = np.roots(np.concatenate([[1.0], a]))
    return bool(np.all(roots.real < 0))
