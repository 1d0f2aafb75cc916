"""Sampled certification of the structural assumptions on the high-frequency gain.

Every check evaluates a matrix inequality at the points of a `SampleGrid` and
folds the per-sample margins into a `CheckReport` by taking the minimum. A
check passes when the worst margin is at least the threshold (zero unless
stated otherwise). Sampling certifies nothing outside the sampled box.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import FactorizationError, ValidationError
from .gains import back_pi, emu_factorize, leading_minors

__all__ = [
    "SampleGrid",
    "CheckReport",
    "plant_grid",
    "plant_input_field",
    "box_from_samples",
    "check_minors",
    "check_assumption_P_L",
    "check_assumption_Dee",
    "check_positivity",
    "contraction_value",
    "contraction_bruteforce",
    "contraction_aligned_probe",
    "check_contraction",
    "check_back",
    "check_blockdiag_P_implies_M",
]


@dataclass(frozen=True)
class SampleGrid:
    """Points in an axis-aligned box.

    Attributes
    ----------
    box : array_like, shape (k, 2)
        Per-coordinate ``[lo, hi]``.
    scheme : {"grid", "sobol", "random"}
    count : int or sequence of int
        Points per axis for ``"grid"`` (an int is used for every axis), the
        total otherwise.
    seed : int
    """

    box: np.ndarray
    scheme: str = "sobol"
    count: object = 4096
    seed: int = 0

    def __post_init__(self):
        box = np.atleast_2d(np.asarray(self.box, dtype=float))
        if box.ndim != 2 or box.shape[1] != 2 or np.any(box[:, 0] > box[:, 1]):
            raise ValidationError("box must be a (k, 2) array of [lo, hi] rows", field="box")
        if self.scheme not in ("grid", "sobol", "random"):
            raise ValidationError(f"unknown sampling scheme {self.scheme!r}", field="scheme")
        object.__setattr__(self, "box", box)

    @property
    def dim(self):
        return self.box.shape[0]

    def points(self):
        lo, hi = self.box[:, 0], self.box[:, 1]
        k = self.dim
        if self.scheme == "grid":
            counts = np.broadcast_to(np.atleast_1d(self.count), (k,)).astype(int)
            axes = [np.linspace(a, b, n) if n > 1 else np.array([(a + b) / 2])
                    for a, b, n in zip(lo, hi, counts)]
            mesh = np.meshgrid(*axes, indexing="ij")
            return np.column_stack([m.ravel() for m in mesh])
        n = int(self.count)
        if self.scheme == "sobol":
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)
                u = qmc.Sobol(k, scramble=True, seed=self.seed).random(n)
        else:
            u = np.random.default_rng(self.seed).random((n, k))
        return lo + u * (hi - lo)


@dataclass
class CheckReport:
    """Outcome of one sampled check; ``passed`` iff ``worst_margin >= threshold``."""

    condition_name: str
    sample_count: int
    worst_margin: float
    worst_point: np.ndarray
    passed: bool
    threshold: float = 0.0
    details: dict = field(default_factory=dict)
    induced: object = field(default=None, repr=False)

    def to_dict(self):
        def plain(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, (np.floating, np.integer, np.bool_)):
                return v.item()
            if isinstance(v, dict):
                return {k: plain(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [plain(x) for x in v]
            return v
        return dict(
            condition_name=self.condition_name,
            sample_count=int(self.sample_count),
            worst_margin=float(self.worst_margin),
            worst_point=plain(np.asarray(self.worst_point, dtype=float)),
            passed=bool(self.passed),
            threshold=float(self.threshold),
            details=plain(self.details),
        )

    def summary(self):
        flag = "PASS" if self.passed else "FAIL"
        return (f"{flag} {self.condition_name}: worst margin {self.worst_margin:.6g} "
                f"(threshold {self.threshold:g}, {self.sample_count} samples)")


def _report(name, margins, pts, threshold=0.0, extra_ok=True, **details):
    margins = np.asarray(margins, dtype=float)
    if margins.size == 0:
        raise ValidationError("the sample grid is empty", field="grid")
    j = int(np.argmin(margins))
    worst = float(margins[j])
    return CheckReport(
        condition_name=name, sample_count=len(margins), worst_margin=worst,
        worst_point=np.asarray(pts[j], dtype=float), threshold=float(threshold),
        passed=bool(worst >= threshold and extra_ok), details=details)


def _points(grid):
    return grid.points() if isinstance(grid, SampleGrid) else np.atleast_2d(np.asarray(grid, dtype=float))


def _min_sym_eig(A):
    return float(np.linalg.eigvalsh(0.5 * (A + A.T))[0])


def plant_grid(plant, x_box, scheme="sobol", count=4096, seed=0):
    """Grid over ``W_box x x_box`` in stacked ``(w, x)`` coordinates."""
    x_box = np.asarray(x_box, dtype=float).reshape(plant.n_x, 2)
    return SampleGrid(np.vstack([plant.W_box, x_box]), scheme=scheme, count=count, seed=seed)


def plant_input_field(plant):
    """``xbar -> [0; b(w, x)]``: input directions in stacked ``(w, x)`` space."""
    def field(xbar):
        w, x = plant.split(xbar)
        return np.vstack([np.zeros((plant.n_w, plant.n_u)), plant.b(w, x)])
    return field


def box_from_samples(points, inflate=0.1):
    """Bounding box of a point cloud, each side widened by ``inflate`` times its length."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    pad = inflate * (hi - lo)
    return np.column_stack([lo - pad, hi + pad])


def _directional_residual(fn, field_fn, pts, n_dirs, fd_step, rng):
    """Max of ``|(fn(p + h v) - fn(p - h v)) / 2h|`` over points and random ``v = b(p) u``."""
    worst = 0.0
    for p in pts:
        Bp = field_fn(p)
        for _ in range(n_dirs):
            v = Bp @ rng.standard_normal(Bp.shape[1])
            deriv = (np.asarray(fn(p + fd_step * v)) - np.asarray(fn(p - fd_step * v))) / (2 * fd_step)
            worst = max(worst, float(np.max(np.abs(deriv), initial=0.0)))
    return worst


def check_minors(B_fn, grid, epsilon):
    """``|Delta_i| >= epsilon`` for every leading principal minor, with a constant sign pattern.

    Margin per sample: ``min_i |Delta_i| - epsilon``.
    """
    pts = _points(grid)
    margins, E_ref, uniform, fact_ok = [], None, True, True
    for p in pts:
        B = np.asarray(B_fn(p), dtype=float)
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise ValidationError(f"B must be square, got shape {B.shape}", field="B")
        minors = leading_minors(B)
        margins.append(np.min(np.abs(minors)) - epsilon)
        try:
            E = np.diag(emu_factorize(B).E)
        except FactorizationError:
            fact_ok = False
            continue
        if E_ref is None:
            E_ref = E
        elif not np.array_equal(E, E_ref):
            uniform = False
    return _report("minors", margins, pts, extra_ok=uniform and fact_ok, epsilon=epsilon,
                   sign_uniform=uniform, sign_pattern=None if E_ref is None else E_ref)


def check_positivity(B_fn, K, grid):
    """``B K + K' B' >= I``; margin ``min eig(B K + K' B') - 1``."""
    pts = _points(grid)
    K = np.asarray(K, dtype=float)
    margins = [_min_sym_eig(2 * np.asarray(B_fn(p)) @ K) - 1.0 for p in pts]
    return _report("positivity", margins, pts)


def check_assumption_P_L(P_fn, L, B_fn, grid, input_field=None, fd_step=1e-5,
                         residual_tol=1e-6, n_dirs=2, seed=0):
    """Certificate ``L' B' P + P B L >= I`` with ``P`` positive definite and constant along ``b u``.

    ``worst_margin`` is the point-c margin ``min eig(L' B' P + P B L) - 1``.
    The details carry the empirical ``lambda_min``/``lambda_max`` of ``P`` and
    the largest finite-difference derivative of ``P`` along ``b u`` (only if
    ``input_field`` is given, see `plant_input_field`).

    Raises
    ------
    ValidationError
        If ``P`` is not symmetric at some sample.
    """
    pts = _points(grid)
    L = np.asarray(L, dtype=float)
    margins, lam_min, lam_max = [], np.inf, -np.inf
    for p in pts:
        P = np.asarray(P_fn(p), dtype=float)
        if not np.allclose(P, P.T, rtol=0, atol=1e-12 * max(1.0, np.abs(P).max())):
            raise ValidationError("P is not symmetric", field="P")
        ev = np.linalg.eigvalsh(P)
        lam_min, lam_max = min(lam_min, ev[0]), max(lam_max, ev[-1])
        BL = np.asarray(B_fn(p)) @ L
        margins.append(_min_sym_eig(BL.T @ P + P @ BL) - 1.0)
    residual = None
    if input_field is not None:
        residual = _directional_residual(P_fn, input_field, pts, n_dirs, fd_step,
                                         np.random.default_rng(seed))
    ok = lam_min > 0 and (residual is None or residual <= residual_tol)
    return _report("assumption_P_L", margins, pts, extra_ok=ok, lambda_min=lam_min,
                   lambda_max=lam_max, input_residual=residual)


def check_assumption_Dee(M_fn, plant, gains, grid, fd_step=1e-5, residual_tol=1e-6,
                         n_dirs=2, seed=0):
    """``D^ee' M + M D^ee >= I`` with ``D = B L`` partitioned at ``n_e``.

    ``M_fn`` maps a stacked point ``(w, x)`` to an ``n_e x n_e`` matrix (a
    constant array is accepted). The grid should cover the projection of the
    closed-loop attractor (see `box_from_samples`).
    """
    ne = gains.sig.n_e
    if callable(M_fn):
        Mf = M_fn
    else:
        M_const = np.atleast_2d(np.asarray(M_fn, dtype=float))
        Mf = lambda p: M_const
    pts = _points(grid)
    margins, lam_min = [], np.inf
    for p in pts:
        w, x = plant.split(p)
        M = np.atleast_2d(np.asarray(Mf(p), dtype=float))
        if M.shape != (ne, ne):
            raise ValidationError(f"M must be {ne} x {ne}, got {M.shape}", field="M")
        lam_min = min(lam_min, np.linalg.eigvalsh(0.5 * (M + M.T))[0])
        Dee = (plant.B(w, x) @ gains.L)[:ne, :ne]
        margins.append(_min_sym_eig(Dee.T @ M + M @ Dee) - 1.0)
    residual = _directional_residual(Mf, plant_input_field(plant), pts, n_dirs, fd_step,
                                     np.random.default_rng(seed))
    return _report("assumption_Dee", margins, pts,
                   extra_ok=lam_min > 0 and residual <= residual_tol,
                   lambda_min=lam_min, input_residual=residual)


def contraction_value(B, M):
    """Closed form of ``max_{|Lam| <= 1} |(B - M) Lam M^{-1}|``: ``|B - M| |M^{-1}|`` (spectral norms)."""
    B, M = np.atleast_2d(B), np.atleast_2d(M)
    return float(np.linalg.norm(B - M, 2) * np.linalg.norm(np.linalg.inv(M), 2))


def contraction_aligned_probe(B, M):
    """Rank-one ``Lam = v1(B - M) u1(M^{-1})'`` and its value; it attains `contraction_value`."""
    A = np.atleast_2d(B) - np.atleast_2d(M)
    C = np.linalg.inv(np.atleast_2d(M))
    _, _, Vt = np.linalg.svd(A)
    U, _, _ = np.linalg.svd(C)
    Lam = np.outer(Vt[0], U[:, 0])
    return Lam, float(np.linalg.norm(A @ Lam @ C, 2))


def contraction_bruteforce(B, M, n_probes=100_000, rng=None, batch=10_000):
    """Largest ``|(B - M) Lam M^{-1}|`` over random ``Lam`` scaled to unit spectral norm."""
    rng = np.random.default_rng(0) if rng is None else rng
    A = np.atleast_2d(B) - np.atleast_2d(M)
    C = np.linalg.inv(np.atleast_2d(M))
    n = A.shape[1]
    best, done = 0.0, 0
    while done < n_probes:
        k = min(batch, n_probes - done)
        Lam = rng.standard_normal((k, n, C.shape[0]))
        Lam /= np.linalg.norm(Lam, ord=2, axis=(1, 2))[:, None, None]
        vals = np.linalg.norm(A @ Lam @ C, ord=2, axis=(1, 2))
        best = max(best, float(vals.max()))
        done += k
    return best


def check_contraction(B_fn, M_const, delta0, grid):
    """Contraction bound ``|B - M| |M^{-1}| <= delta0``; margin ``delta0 - value``."""
    M = np.atleast_2d(np.asarray(M_const, dtype=float))
    if M.shape[0] != M.shape[1] or np.linalg.matrix_rank(M) < M.shape[0]:
        raise ValidationError("M_const must be square and nonsingular", field="M_const")
    pts = _points(grid)
    vals = np.array([contraction_value(np.atleast_2d(B_fn(p)), M) for p in pts])
    return _report("contraction", delta0 - vals, pts, delta0=delta0, worst_value=float(vals.max()))


def check_back(B_fn, K, G_minus, G_plus, kappa, grid, probe_count=100, seed=0):
    """Sector inequality ``(B K p - G- p)' Pi^2 (B K p - G+ p) <= -kappa |p|^2``.

    Exact per sample through ``max eig(sym((B K - G-)' Pi^2 (B K - G+))) <= -kappa``;
    ``probe_count`` random unit ``p`` give an independent brute-force verdict
    recorded as ``probe_agrees``.
    """
    Pi = back_pi(G_minus, G_plus)
    Gm = np.atleast_2d(np.asarray(G_minus, dtype=float))
    Gp = np.atleast_2d(np.asarray(G_plus, dtype=float))
    K = np.atleast_2d(np.asarray(K, dtype=float))
    Pi2 = Pi @ Pi
    rng = np.random.default_rng(seed)
    pts = _points(grid)
    margins, probe_margins = [], []
    for pt in pts:
        BK = np.atleast_2d(B_fn(pt)) @ K
        Q = (BK - Gm).T @ Pi2 @ (BK - Gp)
        Q = 0.5 * (Q + Q.T)
        margins.append(-kappa - np.linalg.eigvalsh(Q)[-1])
        p = rng.standard_normal((probe_count, Q.shape[0]))
        p /= np.linalg.norm(p, axis=1)[:, None]
        probe_margins.append(-kappa - np.max(np.einsum("ij,jk,ik->i", p, Q, p)))
    probe_pass = bool(np.min(probe_margins) >= 0)
    report = _report("back", margins, pts, kappa=kappa, Pi=Pi,
                     probe_worst_margin=float(np.min(probe_margins)))
    report.details["probe_agrees"] = probe_pass == report.passed
    return report


def check_blockdiag_P_implies_M(P_fn, split_ne, grid=None, tol=1e-9):
    """If ``P = diag(P^e, P^a)`` then ``M := P^e`` certifies the error-block condition.

    ``worst_margin`` is ``tol - max |off-diagonal block|``. On success the
    report's ``induced`` attribute holds ``xbar -> P(xbar)[:n_e, :n_e]``.
    """
    if callable(P_fn):
        if grid is None:
            raise ValidationError("a grid is needed for a state-dependent P", field="grid")
        pts = _points(grid)
        Pf = P_fn
    else:
        P_const = np.atleast_2d(np.asarray(P_fn, dtype=float))
        pts = np.zeros((1, 0))
        Pf = lambda p: P_const
    ne = int(split_ne)
    offs = []
    for p in pts:
        P = np.atleast_2d(np.asarray(Pf(p), dtype=float))
        if not 0 < ne < P.shape[0] + 1:
            raise ValidationError(f"split {ne} out of range for P of size {P.shape[0]}", field="split_ne")
        offs.append(max(np.abs(P[:ne, ne:]).max(initial=0.0), np.abs(P[ne:, :ne]).max(initial=0.0)))
    offs = np.asarray(offs)
    report = _report("blockdiag_P", tol - offs, pts, max_offdiag=float(offs.max()))
    if report.passed:
        report.induced = lambda p: np.atleast_2d(np.asarray(Pf(p), dtype=float))[:ne, :ne]
    return report
