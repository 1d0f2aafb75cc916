"""Closed-loop integration, tail statistics and parameter sweeps.

The adaptive path drives `scipy.integrate.RK45` one step at a time and reads
its dense output on a uniform reporting grid, so a run that blows up still
returns every sample computed before the failure. A hand-written classical
RK4 loop is available as a fixed-step alternative.
"""

import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import RK45
from scipy.spatial.distance import pdist

from .errors import BlowUpError, PostregError, ValidationError
from .regulator import ClosedLoop, ClosedLoopState, mismatch_along

__all__ = [
    "Trajectory",
    "TailStats",
    "SweepRow",
    "integrate",
    "rk4_step",
    "tail_stats",
    "omega_limit_sample",
    "cloud_diameter",
    "sweep",
    "sweep_workers",
    "trajectory_header",
    "write_trajectory_csv",
    "read_csv_columns",
    "write_sweep_csv",
    "atomic_write_text",
]


@dataclass
class Trajectory:
    """Closed-loop solution on a uniform reporting grid.

    ``e``, ``ya`` and ``u`` are computed from the stored states through
    `ClosedLoop.signals`, the same code path as the vector field.
    """

    t: np.ndarray
    w: np.ndarray
    x: np.ndarray
    eta: np.ndarray
    e: np.ndarray
    ya: np.ndarray
    u: np.ndarray
    blown_up: bool = False
    t_blowup: float = None
    metadata: dict = field(default_factory=dict)

    @property
    def states(self):
        return np.hstack([self.w, self.x, self.eta])

    @property
    def e_norm(self):
        return np.linalg.norm(self.e, axis=1)

    def __len__(self):
        return len(self.t)


def _initial_vector(cl, initial_state):
    if isinstance(initial_state, ClosedLoopState):
        z0 = initial_state.flat()
    elif isinstance(initial_state, dict):
        z0 = ClosedLoopState(
            np.asarray(initial_state.get("w", np.zeros(cl.plant.n_w)), dtype=float),
            np.asarray(initial_state.get("x", np.zeros(cl.plant.n_x)), dtype=float),
            np.asarray(initial_state.get("eta", np.zeros(cl.config.n_eta)), dtype=float),
        ).flat()
    else:
        z0 = np.asarray(initial_state, dtype=float).ravel()
    if z0.shape != (cl.dim,):
        raise ValidationError(
            f"initial state has {z0.size} entries, expected {cl.dim} "
            f"(n_w={cl.plant.n_w}, n_x={cl.plant.n_x}, n_eta={cl.config.n_eta})",
            field="initial_state")
    if not np.all(np.isfinite(z0)):
        raise ValidationError("initial state is not finite", field="initial_state")
    return z0


def rk4_step(fun, t, y, h):
    """One classical fourth-order Runge-Kutta step."""
    k1 = fun(t, y)
    k2 = fun(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = fun(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = fun(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _run_rk45(fun, z0, grid, rtol, atol, max_step):
    out = np.empty((grid.size, z0.size))
    out[0] = z0
    filled = 1
    try:
        solver = RK45(fun, grid[0], z0, grid[-1], rtol=rtol, atol=atol, max_step=max_step)
        while solver.status == "running" and filled < grid.size:
            msg = solver.step()
            if solver.status == "failed":
                return out[:filled], solver.t, f"step-size underflow: {msg}"
            j = filled + int(np.searchsorted(grid[filled:], solver.t, side="right"))
            if j > filled:
                dense = solver.dense_output()
                vals = dense(grid[filled:j]).T
                if not np.all(np.isfinite(vals)):
                    return out[:filled], solver.t, "non-finite state"
                out[filled:j] = vals
                filled = j
    except BlowUpError as exc:
        return out[:filled], exc.t, str(exc)
    return out[:filled], None, None


def _run_rk4(fun, z0, grid, step):
    dt = grid[1] - grid[0] if grid.size > 1 else step
    ratio = dt / step
    n_sub = int(round(ratio))
    if n_sub < 1 or abs(ratio - n_sub) > 1e-9 * ratio:
        raise ValidationError(
            f"report_dt={dt:g} must be an integer multiple of the RK4 step {step:g}",
            field="step")
    h = dt / n_sub
    out = np.empty((grid.size, z0.size))
    out[0] = z0
    y = z0
    try:
        for i in range(1, grid.size):
            t = grid[i - 1]
            for s in range(n_sub):
                y = rk4_step(fun, t + s * h, y, h)
            if not np.all(np.isfinite(y)):
                return out[:i], grid[i], "non-finite state"
            out[i] = y
    except BlowUpError as exc:
        return out[:i], exc.t, str(exc)
    return out, None, None


def integrate(plant, config, initial_state, horizon, solver="rk45", rtol=1e-8, atol=1e-10,
              step=1e-3, report_dt=1e-2, threshold=1e9, max_step=np.inf, seed=None):
    """Integrate the closed loop on ``[0, horizon]``.

    Parameters
    ----------
    initial_state : ClosedLoopState, dict with keys w/x/eta, or flat array
    solver : {"rk45", "rk4"}
        Adaptive Dormand-Prince (``rtol``/``atol``) or fixed-step RK4 (``step``).
    report_dt : float
        Spacing of the uniform output grid.
    threshold : float
        Any state component above this magnitude counts as blow-up.
    seed : int, optional
        Recorded in the metadata; the integration itself is deterministic.

    Returns
    -------
    Trajectory
        Truncated at the last finite sample if the run blew up
        (``blown_up=True``, ``t_blowup`` set).
    """
    if not horizon > 0:
        raise ValidationError(f"horizon must be positive, got {horizon}", field="horizon")
    if not report_dt > 0:
        raise ValidationError("report_dt must be positive", field="report_dt")
    cl = ClosedLoop(plant, config, threshold=threshold)
    z0 = _initial_vector(cl, initial_state)
    n = int(round(horizon / report_dt))
    grid = np.arange(n + 1) * report_dt
    grid[-1] = min(grid[-1], horizon) if abs(grid[-1] - horizon) < 1e-9 else grid[-1]
    calls = [0]

    def fun(t, z):
        calls[0] += 1
        return cl.rhs(t, z)

    if solver == "rk45":
        Z, t_fail, reason = _run_rk45(fun, z0, grid, rtol, atol, max_step)
    elif solver == "rk4":
        if not step > 0:
            raise ValidationError("step must be positive", field="step")
        Z, t_fail, reason = _run_rk4(fun, z0, grid, step)
    else:
        raise ValidationError(f"unknown solver {solver!r}", field="solver")
    if Z.shape[0] and np.any(np.abs(Z[-1]) > threshold):
        keep = np.all(np.abs(Z) <= threshold, axis=1)
        last = int(np.argmin(keep)) if not keep.all() else Z.shape[0]
        Z = Z[:last]
        t_fail = grid[last] if t_fail is None else t_fail
        reason = reason or "threshold exceeded"
    t = grid[: Z.shape[0]]
    sig = [cl.signals(z) for z in Z]
    e = np.array([s[0] for s in sig]).reshape(len(t), config.n_e)
    ya = np.array([s[1] for s in sig]).reshape(len(t), plant.n_ya)
    u = np.array([s[2] for s in sig]).reshape(len(t), plant.n_u)
    w, x, eta = (Z[:, s] for s in cl.slices)
    meta = dict(solver=solver, rtol=rtol, atol=atol, step=step if solver == "rk4" else None,
                report_dt=report_dt, horizon=float(horizon), seed=seed, nfev=calls[0],
                threshold=threshold, failure=reason)
    return Trajectory(t=t, w=w, x=x, eta=eta, e=e, ya=ya, u=u, blown_up=t_fail is not None,
                      t_blowup=None if t_fail is None else float(t_fail), metadata=meta)


# ---------------------------------------------------------------------------
# tail statistics


@dataclass
class TailStats:
    """Finite-horizon stand-in for ``limsup |e|``.

    ``window_sups[j]`` is the sup over the nested window ``[T - T/2^j, T]``
    (non-increasing in ``j`` by construction). ``block_sups[j]`` is the sup over
    the disjoint block ``[T - T/2^j, T - T/2^(j+1)]``; ``decreasing_flag`` says
    these decrease (up to ``rtol``/``atol``). A floor is detected when the last
    two blocks agree to within ``floor_rtol``.
    """

    window: tuple
    sup_abs_e: float
    window_sups: np.ndarray
    block_windows: list
    block_sups: np.ndarray
    decreasing_flag: bool
    floor_detected: bool
    floor_value: float
    valid: bool = True


def _sup_on(t, v, a, b):
    mask = (t >= a - 1e-12) & (t <= b + 1e-12)
    return float(np.max(v[mask])) if mask.any() else np.nan


def tail_stats(traj, tail_fraction=0.2, n_blocks=6, rtol=1e-2, atol=1e-10, floor_rtol=0.1):
    """Sup of ``|e|`` over the final ``tail_fraction`` of the horizon and dyadic window sups."""
    if not 0 < tail_fraction < 1:
        raise ValidationError("tail_fraction must lie in (0, 1)", field="tail_fraction")
    t = np.asarray(traj.t, dtype=float)
    v = traj.e_norm if hasattr(traj, "e_norm") else np.abs(np.asarray(traj.e, dtype=float)).reshape(len(t), -1).max(axis=1)
    T0, T = float(t[0]), float(t[-1])
    L = T - T0
    window = (T - tail_fraction * L, T)
    sup = _sup_on(t, v, *window)
    window_sups = np.array([_sup_on(t, v, T - L / 2 ** j, T) for j in range(n_blocks)])
    blocks = [(T - L / 2 ** j, T - L / 2 ** (j + 1)) for j in range(n_blocks)]
    block_sups = np.array([_sup_on(t, v, a, b) for a, b in blocks])
    dec = bool(np.all(block_sups[1:] <= block_sups[:-1] * (1 + rtol) + atol))
    last, prev = block_sups[-1], block_sups[-2]
    floor = bool(last > atol and abs(prev - last) <= floor_rtol * prev)
    return TailStats(window=window, sup_abs_e=sup, window_sups=window_sups,
                     block_windows=blocks, block_sups=block_sups, decreasing_flag=dec,
                     floor_detected=floor, floor_value=float(last),
                     valid=not getattr(traj, "blown_up", False))


def omega_limit_sample(traj, discard_time):
    """Closed-loop states sampled after ``discard_time``: a finite proxy of the attractor."""
    mask = np.asarray(traj.t) >= discard_time
    if not mask.any():
        raise ValidationError(f"no samples after t={discard_time}", field="discard_time")
    return traj.states[mask]


def cloud_diameter(points, max_points=2000):
    """Largest pairwise distance (on an evenly thinned subsample of at most ``max_points``)."""
    pts = np.atleast_2d(points)
    if len(pts) > max_points:
        pts = pts[np.linspace(0, len(pts) - 1, max_points).astype(int)]
    return float(pdist(pts).max()) if len(pts) > 1 else 0.0


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepRow:
    params: dict
    tail_sup_e: float
    delta_bar: float
    bounded: bool
    error: str = None
    stats: TailStats = None
    trajectory: Trajectory = None


def sweep_workers(n_rows):
    """Worker count: ``POSTREG_THREADS`` if set, else the CPU count, capped by the row count."""
    env = os.environ.get("POSTREG_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_rows))


def sweep(plant_factory, config_factory, param_grid, horizon, initial_state, sim_opts=None,
          tail_fraction=0.2, mismatch=True, keep_trajectories=False, workers=None):
    """Run one closed-loop simulation per parameter set.

    Parameters
    ----------
    plant_factory : callable
        ``params -> Plant``.
    config_factory : callable
        ``(plant, params) -> RegulatorConfig``.
    param_grid : sequence of dict
    initial_state : array-like, dict, or callable ``params -> initial state``

    Returns
    -------
    list of SweepRow
        In grid order. A failing row records its error and the sweep goes on.
    """
    sim_opts = dict(sim_opts or {})
    grid = list(param_grid)

    def run(params):
        try:
            plant = plant_factory(params)
            config = config_factory(plant, params)
            z0 = initial_state(params) if callable(initial_state) else initial_state
            traj = integrate(plant, config, z0, horizon, **sim_opts)
            stats = tail_stats(traj, tail_fraction) if len(traj) > 1 else None
            dbar = np.nan
            if mismatch and not traj.blown_up:
                try:
                    dbar = mismatch_along(traj, plant, config,
                                          tail_start=traj.t[-1] * (1 - tail_fraction)).delta_bar
                except PostregError:
                    dbar = np.nan
            return SweepRow(params=dict(params),
                            tail_sup_e=stats.sup_abs_e if stats else np.nan,
                            delta_bar=float(dbar), bounded=not traj.blown_up,
                            error=traj.metadata.get("failure"), stats=stats,
                            trajectory=traj if keep_trajectories else None)
        except PostregError as exc:
            return SweepRow(params=dict(params), tail_sup_e=np.nan, delta_bar=np.nan,
                            bounded=False, error=f"{type(exc).__name__}: {exc}")

    if not grid:
        return []
    n = workers or sweep_workers(len(grid))
    if n == 1:
        return [run(p) for p in grid]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(run, grid))


# ---------------------------------------------------------------------------
# CSV


def atomic_write_text(path, text):
    """Write via a temporary file in the target directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _format_rows(header, data):
    lines = [",".join(header)]
    lines.extend(",".join("%.17g" % v for v in row) for row in data)
    return "\n".join(lines) + "\n"


def trajectory_header(traj):
    names = ["t"]
    for prefix, arr in (("w", traj.w), ("x", traj.x), ("eta", traj.eta),
                        ("e", traj.e), ("ya", traj.ya), ("u", traj.u)):
        names.extend(f"{prefix}{i + 1}" for i in range(arr.shape[1]))
    return names


def write_trajectory_csv(traj, path):
    """One row per reporting-grid sample, 17 significant digits."""
    data = np.hstack([traj.t[:, None], traj.w, traj.x, traj.eta, traj.e, traj.ya, traj.u])
    atomic_write_text(path, _format_rows(trajectory_header(traj), data))


def read_csv_columns(path):
    """Read a numeric CSV with a header row into ``{name: column}``."""
    arr = np.genfromtxt(path, delimiter=",", names=True, dtype=float, ndmin=1)
    if arr.dtype.names is None:
        raise ValidationError(f"{path} has no header", field="path")
    return {name: np.atleast_1d(arr[name]) for name in arr.dtype.names}


def write_sweep_csv(rows, path, param_names=None):
    """``param columns..., tail_sup_e, delta_bar, bounded_flag``."""
    if param_names is None:
        param_names = list(rows[0].params) if rows else []
    header = list(param_names) + ["tail_sup_e", "delta_bar", "bounded_flag"]
    data = [[float(r.params[k]) for k in param_names]
            + [r.tail_sup_e, r.delta_bar, 1.0 if r.bounded else 0.0] for r in rows]
    atomic_write_text(path, _format_rows(header, data))
