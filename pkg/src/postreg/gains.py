"""Regulator gain synthesis.

Covers the input gain ``L`` (from a minors, positivity, negativity, Back-type
or contraction condition on the high-frequency gain ``B``), the cascade gain
``K`` for the xi-chains, the internal-model injection ``G`` and the assembly
of the stabilizer triple ``K_xi = ell K``, ``K_zeta = -ell I``,
``K_eta = ell (K C_e' - J)``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import FactorizationError, SynthesisError, ValidationError
from .normal_form import (
    Signature,
    binomial_hurwitz,
    build_lambda,
    build_structure,
    is_hurwitz,
)

__all__ = [
    "EMUFactorization",
    "GainSet",
    "emu_factorize",
    "leading_minors",
    "build_L_minors",
    "minors_certificate_P",
    "build_L_positivity",
    "build_L_negativity",
    "build_L_back",
    "back_pi",
    "build_L_contraction",
    "default_alpha_rows",
    "default_cascade_gains",
    "synthesize_K",
    "build_G",
    "assemble_gains",
    "synthesize_gains",
]


@dataclass(frozen=True)
class EMUFactorization:
    """``B = E M (I + U)`` with ``E`` a diagonal sign matrix, ``M`` SPD, ``U`` strictly upper."""

    E: np.ndarray
    M: np.ndarray
    U: np.ndarray

    def reconstruct(self):
        n = len(self.E)
        return self.E @ self.M @ (np.eye(n) + self.U)


def leading_minors(B):
    """Leading principal minors ``Delta_1, ..., Delta_n`` by direct determinants."""
    B = np.asarray(B, dtype=float)
    return np.array([np.linalg.det(B[:i, :i]) for i in range(1, B.shape[0] + 1)])


def _ldu(B, rtol=1e-14):
    n = B.shape[0]
    L = np.eye(n)
    U = B.copy()
    scale = max(1.0, float(np.abs(B).max()))
    for k in range(n):
        piv = U[k, k]
        if abs(piv) <= rtol * scale:
            raise FactorizationError(
                f"leading principal minor Delta_{k + 1} vanishes", minor_index=k + 1)
        L[k + 1:, k] = U[k + 1:, k] / piv
        U[k + 1:, k:] -= np.outer(L[k + 1:, k], U[k, k:])
        U[k + 1:, k] = 0.0
    D = np.diag(U).copy()
    return L, D, U / D[:, None]


def emu_factorize(B):
    """Factor a square matrix with nonzero leading minors as ``E M (I + U)``.

    With the unpivoted ``B = L0 D U0`` and ``E = sign(D)``: ``L1 = E L0 E``,
    ``M = L1 |D| L1'`` and ``I + U = L1^{-T} U0``.

    Raises
    ------
    ValidationError
        If ``B`` is not square.
    FactorizationError
        Naming the first vanishing leading minor.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValidationError(f"B must be square, got shape {B.shape}", field="B")
    n = B.shape[0]
    L0, D, U0 = _ldu(B)
    E = np.diag(np.sign(D))
    L1 = E @ L0 @ E
    M = L1 @ np.diag(np.abs(D)) @ L1.T
    M = 0.5 * (M + M.T)
    IU = np.linalg.solve(L1.T, U0)
    U = np.triu(IU, 1)
    return EMUFactorization(E=E, M=M, U=U)


def minors_certificate_P(B, E=None):
    """Certificate ``P = E M^{-1} E`` paired with ``L = E C`` at one sample of ``B``."""
    fac = emu_factorize(B)
    E = fac.E if E is None else E
    return E @ np.linalg.inv(fac.M) @ E


def build_L_minors(B_samples, epsilon, c_start=2.0, c_max=2.0 ** 16):
    """Input gain ``L = E C`` from uniformly nonvanishing leading minors.

    Doubles ``c`` from ``c_start`` until ``(I + U) C + C (I + U)' >= I`` holds at
    every sample, with ``C = diag(c^(n-1), ..., c, 1)``.

    Parameters
    ----------
    B_samples : iterable of (n, n) arrays
    epsilon : float
        Required lower bound on every ``|Delta_i|``.

    Returns
    -------
    L : ndarray
    c : float

    Raises
    ------
    SynthesisError
        ``"minor condition violated"`` (details carry the sample and minor
        index), ``"sign pattern not uniform"``, or no admissible ``c`` up to
        ``c_max``.
    """
    facs = []
    E_ref = None
    for j, B in enumerate(B_samples):
        B = np.asarray(B, dtype=float)
        minors = leading_minors(B)
        bad = np.flatnonzero(np.abs(minors) < epsilon)
        if bad.size:
            err = SynthesisError(
                f"minor condition violated at sample {j}: |Delta_{bad[0] + 1}| = "
                f"{abs(minors[bad[0]]):.3g} < {epsilon}")
            err.details = dict(sample=j, minor_index=int(bad[0] + 1),
                               value=float(minors[bad[0]]), epsilon=float(epsilon))
            raise err
        fac = emu_factorize(B)
        if E_ref is None:
            E_ref = fac.E
        elif not np.array_equal(fac.E, E_ref):
            raise SynthesisError(f"sign pattern not uniform (sample {j})")
        facs.append(fac)
    if not facs:
        raise ValidationError("no samples given", field="B_samples")
    n = len(E_ref)
    I = np.eye(n)
    c = float(c_start)
    while c <= c_max:
        C = np.diag(c ** np.arange(n - 1, -1, -1, dtype=float))
        ok = all(
            np.linalg.eigvalsh((I + f.U) @ C + C @ (I + f.U).T)[0] >= 1.0
            for f in facs)
        if ok:
            return E_ref @ C, c
        c *= 2.0
    raise SynthesisError(f"no c <= {c_max} satisfies (I + U) C + C (I + U)' >= I")


def build_L_positivity(K_pos):
    """``L = K`` under ``B K + K' B' >= I`` (certificate ``P = I``)."""
    K = np.asarray(K_pos, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValidationError("K_pos must be square", field="K_pos")
    if np.linalg.matrix_rank(K) < K.shape[0]:
        raise ValidationError(
            "K_pos is singular, inconsistent with B K + K' B' >= I", field="K_pos")
    return K.copy()


def build_L_negativity(M_neg, kappa):
    """``L = -M / kappa`` under ``B M + M' B' < -kappa I``."""
    if not kappa > 0:
        raise ValidationError(f"kappa must be positive, got {kappa}", field="kappa")
    return build_L_positivity(-np.asarray(M_neg, dtype=float) / kappa)


def back_pi(G_minus, G_plus):
    """``Pi = 2 (G+ + G-)^{-1}`` after checking ``0 < G- < G+`` (diagonal)."""
    Gm = np.atleast_2d(np.asarray(G_minus, dtype=float))
    Gp = np.atleast_2d(np.asarray(G_plus, dtype=float))
    for name, G in (("G_minus", Gm), ("G_plus", Gp)):
        if G.shape[0] != G.shape[1] or np.any(G != np.diag(np.diag(G))):
            raise ValidationError(f"{name} must be a square diagonal matrix", field=name)
    gm, gp = np.diag(Gm), np.diag(Gp)
    if gm.shape != gp.shape or not (np.all(gm > 0) and np.all(gm < gp)):
        raise ValidationError("need 0 < G_minus < G_plus elementwise", field="G_minus")
    return np.diag(2.0 / (gp + gm))


def build_L_back(K_back, G_minus, G_plus, kappa, return_details=False):
    """Input gain from a Back-type sector condition.

    The condition yields the negativity condition with ``M = -K Pi^{-1}`` and
    constant ``kappa' = kappa * min eig(Pi^2)``, hence ``L = K Pi^{-1} / kappa'``.
    """
    if not kappa > 0:
        raise ValidationError(f"kappa must be positive, got {kappa}", field="kappa")
    Pi = back_pi(G_minus, G_plus)
    K = np.asarray(K_back, dtype=float)
    M_neg = -K @ np.linalg.inv(Pi)
    kappa_eff = kappa * float(np.min(np.diag(Pi)) ** 2)
    L = build_L_negativity(M_neg, kappa_eff)
    if return_details:
        return L, dict(Pi=Pi, M_neg=M_neg, kappa_eff=kappa_eff)
    return L


def build_L_contraction(M_const, delta0):
    """``L = M^{-1}`` (certificate ``P = I / (2 (1 - delta0))``) under the contraction bound."""
    if not 0 < delta0 < 1:
        raise ValidationError(f"delta0 must lie in (0, 1), got {delta0}", field="delta0")
    M = np.asarray(M_const, dtype=float)
    if np.linalg.matrix_rank(M) < M.shape[0]:
        raise ValidationError("M_const is singular", field="M_const")
    return np.linalg.inv(M), np.eye(M.shape[0]) / (2.0 * (1.0 - delta0))


# ---------------------------------------------------------------------------
# cascade gain K and internal-model injection G


def default_alpha_rows(sig):
    """Binomial rows: ``lambda^(N-1) + alpha_(N-1) lambda^(N-2) + ... + alpha_1 = (lambda + 1)^(N-1)``.

    Rows are stored in ascending order ``(alpha_1, ..., alpha_(N-1))``.
    """
    return [tuple(binomial_hurwitz(Ni - 1)[::-1]) for Ni in sig.N]


def default_cascade_gains(r, k1=5.0, ratio=2.0):
    """Increasing cascade gains ``k_i = k1 * ratio^(i-1)``."""
    if not k1 > 0 or not ratio >= 1:
        raise ValidationError("need k1 > 0 and ratio >= 1", field="k1")
    return [float(k1) * float(ratio) ** i for i in range(r)]


def synthesize_K(sig, alpha_rows=None, k=None):
    """Block-diagonal cascade gain ``K = diag(k_i D^i Lambda_i(k_i))``.

    ``D^i = (-alpha^i_1 I, ..., -alpha^i_(N_i-1) I)`` so that ``F_ii + H_ii D^i``
    is the companion matrix of the row's polynomial. Blocks with ``N_i = 1``
    contribute ``p_i`` zero-width rows.

    Raises
    ------
    ValidationError
        A row of the wrong length or whose polynomial is not Hurwitz, or
        nonpositive ``k_i``.
    """
    alpha_rows = default_alpha_rows(sig) if alpha_rows is None else alpha_rows
    k = default_cascade_gains(sig.r) if k is None else list(k)
    if len(alpha_rows) != sig.r or len(k) != sig.r:
        raise ValidationError("alpha_rows and k need one entry per block", field="alpha_rows")
    K = np.zeros((sig.n_y, sig.n_xi))
    for i, (pi, Ni) in enumerate(zip(sig.p, sig.N)):
        row = np.asarray(alpha_rows[i], dtype=float).reshape(-1)
        if row.shape != (Ni - 1,):
            raise ValidationError(
                f"alpha row {i} must have length N_i - 1 = {Ni - 1}", field="alpha_rows")
        if Ni == 1:
            continue
        if not is_hurwitz(row[::-1]):
            coeffs = " + ".join(f"{c:g} s^{j}" for j, c in enumerate(row))
            raise ValidationError(
                f"s^{Ni - 1} + {coeffs} is not Hurwitz (block {i})", field="alpha_rows")
        if not k[i] > 0:
            raise ValidationError(f"k[{i}] must be positive", field="k")
        D = np.kron(-row[None, :], np.eye(pi))
        K[sig.y_slice(i), sig.xi_slice(i)] = k[i] * D @ build_lambda(i, k[i], sig)
    return K


def build_G(h, g, d, n_e):
    """Stacked injection ``G_i = g^i h_i I_{n_e}``, ``i = 1..d``."""
    h = np.atleast_1d(np.asarray(h, dtype=float))
    if h.shape != (d,):
        raise ValidationError(f"h must have length d={d}", field="h")
    if not g > 0:
        raise ValidationError(f"g must be positive, got {g}", field="g")
    coeffs = float(g) ** np.arange(1, d + 1) * h
    return np.kron(coeffs[:, None], np.eye(n_e))


@dataclass(frozen=True)
class GainSet:
    """All regulator gains. ``u = L (K_xi xi + K_zeta zeta + K_eta eta_1)``."""

    sig: Signature
    L: np.ndarray
    K: np.ndarray
    K_xi: np.ndarray
    K_zeta: np.ndarray
    K_eta: np.ndarray
    G: np.ndarray
    g: float
    ell: float
    k: tuple = ()
    h: tuple = ()
    alpha_rows: tuple = ()
    extras: dict = field(default_factory=dict, compare=False)

    @property
    def K_eta_prime(self):
        return self.K_eta[: self.sig.n_e]

    def to_dict(self):
        def arr(a):
            return np.asarray(a, dtype=float).tolist()
        return dict(
            signature=dict(p=list(self.sig.p), N=list(self.sig.N), r_e=self.sig.r_e),
            L=arr(self.L), K=arr(self.K), K_xi=arr(self.K_xi), K_zeta=arr(self.K_zeta),
            K_eta=arr(self.K_eta), G=arr(self.G), g=float(self.g), ell=float(self.ell),
            k=[float(v) for v in self.k], h=[float(v) for v in self.h],
            alpha_rows=[[float(v) for v in row] for row in self.alpha_rows],
        )


def _short_chain_selector(sig):
    """``J``: identity on the error blocks with ``N_i = 1``, zero elsewhere."""
    J = np.zeros((sig.n_y, sig.n_e))
    for i in range(sig.r_e):
        if sig.N[i] == 1:
            J[sig.y_slice(i), sig.y_slice(i)] = np.eye(sig.p[i])
    return J


def assemble_gains(sig, L, K, G, g, ell, k=(), h=(), alpha_rows=(), cond_max=1e12):
    """Build ``K_xi = ell K``, ``K_zeta = -ell I`` and ``K_eta = ell (K C_e' - J)``.

    ``J`` places ``I`` on error blocks without a xi-chain, where ``K C_e'``
    vanishes; in that case the stabilizer drives ``zeta^i + eta_1^i`` to zero.

    Raises
    ------
    ValidationError
        Shape mismatch or ``ell <= 0``.
    SynthesisError
        ``L`` rank deficient or ``K'_eta`` (upper ``n_e`` block) singular.
    """
    L = np.atleast_2d(np.asarray(L, dtype=float))
    K = np.asarray(K, dtype=float).reshape(sig.n_y, sig.n_xi)
    G = np.asarray(G, dtype=float)
    if not ell > 0:
        raise ValidationError(f"ell must be positive, got {ell}", field="ell")
    if L.shape[1] != sig.n_y:
        raise ValidationError(f"L must have {sig.n_y} columns, got {L.shape}", field="L")
    if G.ndim != 2 or G.shape[1] != sig.n_e or G.shape[0] % sig.n_e:
        raise ValidationError(f"G must be (d n_e) x n_e, got {G.shape}", field="G")
    if np.linalg.matrix_rank(L) < min(L.shape):
        raise SynthesisError("L is not full rank")
    C_e = build_structure(sig).C_e
    K_eta = ell * (K @ C_e.T - _short_chain_selector(sig))
    Kp = K_eta[: sig.n_e]
    cond = np.linalg.cond(Kp)
    if not np.isfinite(cond) or cond > cond_max:
        raise SynthesisError(f"K'_eta is singular (condition number {cond:.3g})")
    return GainSet(
        sig=sig, L=L, K=K, K_xi=ell * K, K_zeta=-ell * np.eye(sig.n_y), K_eta=K_eta,
        G=G, g=float(g), ell=float(ell), k=tuple(k), h=tuple(np.asarray(h, dtype=float)),
        alpha_rows=tuple(tuple(r) for r in alpha_rows))


def synthesize_gains(sig, L, g, ell, d, h=None, alpha_rows=None, k=None):
    """One-call synthesis with the binomial defaults for ``h`` and ``alpha_rows``."""
    h = binomial_hurwitz(d) if h is None else np.asarray(h, dtype=float)
    if not is_hurwitz(h):
        raise ValidationError("h is not the coefficient vector of a Hurwitz polynomial", field="h")
    alpha_rows = default_alpha_rows(sig) if alpha_rows is None else alpha_rows
    k = default_cascade_gains(sig.r) if k is None else list(k)
    K = synthesize_K(sig, alpha_rows, k)
    G = build_G(h, g, d, sig.n_e)
    return assemble_gains(sig, L, K, G, g, ell, k=k, h=h, alpha_rows=alpha_rows)
