"""Quantum Monte-Carlo wave-function unraveling of spontaneous emission.

Between jumps the state evolves under the non-hermitian effective Hamiltonian:
each potential half-step of the split-operator scheme is augmented with the
decay factor exp(-gamma*dt_half/2) on the excited component, so the squared
norm decays monotonically.  A jump fires when the running norm squared crosses
a pre-drawn uniform threshold r in (0, 1); the crossing time is refined by
bisection to within dt*1e-3 of the step in which it occurred.  The jump
projects the excited amplitude onto the ground state with a recoil phase,

    psi_g' = psi_e * exp(i p_r x / kbar),  psi_e' = 0,  renormalized,

where p_r is drawn from the dipole-pattern 1D marginal
N(p) = 3/(8 kbar) (1 + (p/kbar)^2) on [-kbar, kbar] by inverse CDF
(y^3 + 3y = 8u - 4 with y = p/kbar, solved by safeguarded Newton).

Ensemble mechanics: every run's trajectory is identical up to its first jump,
so one "base" no-jump evolution is computed once and cached at the shared
sample times; each run resumes from the cached state just before its own
threshold crossing.  Runs whose threshold is never reached are pure copies of
the base run and cost nothing.  Per-run generators derive from
(master seed, run index), and the ensemble reduction runs in run-index order,
so results are byte-identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field
from math import sqrt

import numpy as np

from dynloc.gridstate import (
    Distribution,
    Grid,
    MomentSummary,
    SpinorField,
    moments,
    momentum_distributions,
    position_distributions,
)
from dynloc.params import NumericsConfig, TrapParams
from dynloc.qevolve import (
    PauliPotential,
    StepController,
    _sample_times,
    advance_step,
    strang_step,
)

__all__ = [
    "JumpEvent",
    "RunRecord",
    "McwfResult",
    "sample_recoil",
    "apply_jump",
    "effective_propagate",
    "run_ensemble",
]

_BISECT_ITERS = 10  # resolves the jump time to dt / 2^10 < dt * 1e-3


@dataclass(frozen=True)
class JumpEvent:
    """One spontaneous-emission event."""

    t: float
    p_recoil: float
    pop_e_before: float  # excited population of the normalized pre-jump state


@dataclass
class RunRecord:
    """Per-run provenance: RNG identity, jump log, raw moment series."""

    run_index: int
    master_seed: int
    jumps: tuple
    moments: list  # MomentSummary at the shared sample times (raw norms)

    def __post_init__(self):
        times = [j.t for j in self.jumps]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("jump times must be strictly increasing")


@dataclass
class McwfResult:
    """Ensemble averages plus all run records."""

    times: np.ndarray
    summaries: list  # ensemble-averaged MomentSummary per sample time
    dist_x: Distribution | None
    dist_p: Distribution | None
    records: list
    master_seed: int
    gamma: float


# ------------------------------------------------------------------ recoil


def _recoil_y(u: np.ndarray) -> np.ndarray:
    """Solve y^3 + 3y = 8u - 4 for y in [-1, 1] (inverse recoil CDF)."""
    b = 8.0 * u - 4.0
    y = np.clip(b / 4.0, -1.0, 1.0)
    lo = np.full_like(y, -1.0)
    hi = np.full_like(y, 1.0)
    for _ in range(64):
        f = y * (y * y + 3.0) - b
        hi = np.where(f > 0.0, y, hi)
        lo = np.where(f <= 0.0, y, lo)
        y_new = y - f / (3.0 * y * y + 3.0)
        outside = (y_new < lo) | (y_new > hi)
        y_new = np.where(outside, 0.5 * (lo + hi), y_new)
        if np.max(np.abs(y_new - y)) < 1e-13:
            y = y_new
            break
        y = y_new
    return y


def sample_recoil(rng: np.random.Generator, kbar: float, size=None):
    """Recoil momentum from N(p) = 3/(8 kbar) (1 + (p/kbar)^2) on [-kbar, kbar]."""
    if kbar <= 0.0:
        raise ValueError(f"kbar must be positive, got {kbar}")
    u = rng.uniform(size=size)
    y = _recoil_y(np.asarray(u, dtype=float))
    out = kbar * y
    return float(out) if size is None else out


# -------------------------------------------------------------------- jumps


def apply_jump(field: SpinorField, rng: np.random.Generator, kbar: float):
    """Project onto the ground state with a random recoil phase; renormalize."""
    if field.basis != "ge":
        raise ValueError("jumps act in the g/e basis")
    dens_e = field.psi[1].real ** 2 + field.psi[1].imag ** 2
    pop_e_raw = float(dens_e.sum() * field.grid.dx)
    norm2 = field.norm2()
    if pop_e_raw <= 0.0 or norm2 <= 0.0:
        raise ValueError("jump attempted with zero excited population")
    p_r = sample_recoil(rng, kbar)
    field.psi[0] = field.psi[1] * np.exp(1j * (p_r / kbar) * field.grid.x)
    field.psi[1] = 0.0
    field.psi /= sqrt(field.norm2())
    return field, JumpEvent(t=float(field.t), p_recoil=p_r, pop_e_before=pop_e_raw / norm2)


def _bisect_jump_time(pre: SpinorField, pot: PauliPotential, t_lo: float,
                      t_hi: float, threshold: float, gamma: float) -> float:
    """First time in (t_lo, t_hi] where the norm crosses the threshold.

    Uses single second-order steps from the pre-step state; the returned time
    is accurate to (t_hi - t_lo) / 2^10, well inside the dt*1e-3 contract.
    """
    lo, hi = t_lo, t_hi
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        probe = pre.copy()
        strang_step(probe, pot, t_lo, mid - t_lo, gamma)
        if probe.norm2() > threshold:
            lo = mid
        else:
            hi = mid
    return hi


def _draw_threshold(rng: np.random.Generator) -> float:
    r = rng.uniform()
    while r == 0.0:  # r must lie strictly inside (0, 1)
        r = rng.uniform()
    return r


def effective_propagate(field: SpinorField, pot: PauliPotential, ctrl: StepController,
                        t0: float, t1: float, gamma: float,
                        rng: np.random.Generator | None = None, observer=None,
                        stride: float | None = None, sample_times=None,
                        observe_start: bool = True, stop_norm: float | None = None):
    """Evolve under the effective Hamiltonian with quantum jumps.

    With rng = None (or gamma = 0) no thresholds are drawn and no jumps occur:
    gamma = 0 then reproduces the closed propagation bit for bit.  The observer
    receives the raw (decaying-norm) field at t0 (unless observe_start is
    False), at every sample time, and at t1.  If stop_norm is given, the
    evolution stops early once the norm squared at a sample falls below it
    (used for the shared no-jump prefix).  Returns the list of JumpEvents.
    """
    if gamma < 0.0:
        raise ValueError("gamma must be nonnegative")
    if gamma > 0.0 and field.basis != "ge":
        raise ValueError("decay acts on the excited state; g/e basis required")
    field.t = t0
    if observer is not None and observe_start:
        observer(field)
    if sample_times is None:
        if t1 == t0:
            return []
        sample_times = _sample_times(t0, t1, stride)
    jumps: list[JumpEvent] = []
    jumping = rng is not None and gamma > 0.0
    threshold = _draw_threshold(rng) if jumping else 0.0
    t = t0
    for target in sample_times:
        while t != target:
            pre = field.copy()
            t_new = advance_step(field, pot, ctrl, t, target, gamma)
            if jumping and field.norm2() <= threshold:
                t_jump = _bisect_jump_time(pre, pot, t, t_new, threshold, gamma)
                # discard the overshooting step; re-advance exactly to t_jump
                field.psi = pre.psi
                tj = t
                while tj != t_jump:
                    tj = advance_step(field, pot, ctrl, tj, t_jump, gamma)
                _, event = apply_jump(field, rng, pot.trap.kbar)
                jumps.append(event)
                threshold = _draw_threshold(rng)
                t = t_jump
            else:
                t = t_new
        field.check_leak()
        if observer is not None:
            observer(field)
        if stop_norm is not None and field.norm2() < stop_norm:
            break
    return jumps


# ----------------------------------------------------------------- ensemble


def _run_rng(master_seed: int, run_index: int) -> np.random.Generator:
    """Per-run generator determined by (master seed, run index) alone."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(run_index,)))


@dataclass
class _BaseCache:
    """No-jump evolution shared by every run, cached at the sample times."""

    times: np.ndarray  # covered sample times (prefix of the global grid)
    norm2: np.ndarray
    moments: list
    psi: list  # state snapshot per covered sample (None when gamma = 0)
    dt: np.ndarray  # controller step size at each sample
    window_x: list  # normalized densities at in-window samples, else None
    window_p: list
    complete: bool  # reached t_end without the early stop


@dataclass
class _RunTask:
    run_index: int
    resume_index: int  # sample index whose cached state starts the run's own work
    psi: np.ndarray
    t: float
    dt: float


def _observe_factory(store_moments, window, want_dists, dist_x_out, dist_p_out):
    t_a, t_b = window

    def observe(f: SpinorField):
        store_moments.append(moments(f))
        if want_dists and t_a <= f.t <= t_b:
            dist_x_out.append(position_distributions(f, normalize=True))
            dist_p_out.append(momentum_distributions(f, normalize=True))
        else:
            dist_x_out.append(None)
            dist_p_out.append(None)

    return observe


def _build_base_cache(initial: SpinorField, pot: PauliPotential, numerics: NumericsConfig,
                      gamma: float, sample_times: np.ndarray, stop_norm: float | None,
                      want_dists: bool) -> _BaseCache:
    field = initial.copy()
    ctrl = StepController(tol=numerics.tol, dt_min=numerics.dt_min, dt_max=numerics.dt_max)
    cache_psi = gamma > 0.0
    times, norms, mseries, psis, dts, wx, wp = [], [], [], [], [], [], []

    def observer(f: SpinorField):
        times.append(f.t)
        norms.append(f.norm2())
        mseries.append(moments(f))
        psis.append(f.psi.copy() if cache_psi else None)
        dts.append(ctrl.dt)
        t_a, t_b = numerics.window
        if want_dists and t_a <= f.t <= t_b:
            wx.append(position_distributions(f, normalize=True))
            wp.append(momentum_distributions(f, normalize=True))
        else:
            wx.append(None)
            wp.append(None)

    effective_propagate(field, pot, ctrl, 0.0, float(sample_times[-1]), gamma,
                        rng=None, observer=observer, sample_times=sample_times,
                        stop_norm=stop_norm)
    covered = len(times)
    return _BaseCache(
        times=np.array(times),
        norm2=np.array(norms),
        moments=mseries,
        psi=psis,
        dt=np.array(dts),
        window_x=wx,
        window_p=wp,
        complete=covered == sample_times.size + 1,
    )


def _execute_run(trap: TrapParams, numerics: NumericsConfig, gamma: float,
                 master_seed: int, task: _RunTask, sample_times: np.ndarray,
                 want_dists: bool):
    """Resume one run from its cached pre-jump state; top level for pickling."""
    grid = Grid(n=numerics.n_grid, x_max=numerics.x_max, kbar=trap.kbar)
    pot = PauliPotential(trap, grid, basis="ge")
    field = SpinorField(grid=grid, psi=task.psi.copy(), t=task.t, basis="ge")
    ctrl = StepController(tol=numerics.tol, dt_min=numerics.dt_min,
                          dt_max=numerics.dt_max, dt=task.dt)
    rng = _run_rng(master_seed, task.run_index)
    remaining = sample_times[sample_times > task.t]
    mseries: list = []
    wx: list = []
    wp: list = []
    observer = _observe_factory(mseries, numerics.window, want_dists, wx, wp)
    jumps = effective_propagate(field, pot, ctrl, task.t, float(sample_times[-1]),
                                gamma, rng=rng, observer=observer,
                                sample_times=remaining, observe_start=False)
    return task.run_index, tuple(jumps), mseries, wx, wp


def _normalized_pop(m: MomentSummary):
    return m.pop_g / m.norm2, m.pop_e / m.norm2


def _average_summaries(times: np.ndarray, per_run_moments: list) -> list:
    """Mean of per-run normalized moments; widths from the averaged moments."""
    n_runs = len(per_run_moments)
    out = []
    for k, t in enumerate(times):
        x_m = x2_m = p_m = p2_m = pg = pe = nr = 0.0
        for series in per_run_moments:
            m = series[k]
            g, e = _normalized_pop(m)
            x_m += m.x_mean
            x2_m += m.x2_mean
            p_m += m.p_mean
            p2_m += m.p2_mean
            pg += g
            pe += e
            nr += m.norm2
        x_m /= n_runs
        x2_m /= n_runs
        p_m /= n_runs
        p2_m /= n_runs
        out.append(MomentSummary(
            t=float(t),
            x_mean=x_m,
            x2_mean=x2_m,
            dx_width=sqrt(max(x2_m - x_m**2, 0.0)),
            p_mean=p_m,
            p2_mean=p2_m,
            dp_width=sqrt(max(p2_m - p_m**2, 0.0)),
            pop_g=pg / n_runs,
            pop_e=pe / n_runs,
            norm2=nr / n_runs,
        ))
    return out


def run_ensemble(trap: TrapParams, numerics: NumericsConfig, initial: SpinorField,
                 workers: int = 1, want_distributions: bool = True) -> McwfResult:
    """Average numerics.runs quantum-jump realizations of the same experiment.

    Per-run seeds derive from (numerics.seed, run index); the reduction is a
    fixed-order sum over run index, so the output is byte-identical for any
    worker count.  The shared no-jump prefix is computed once: a run only
    costs propagation time from just before its own first jump.
    """
    gamma = trap.gamma
    n_runs = numerics.runs
    master_seed = numerics.seed
    sample_times = _sample_times(0.0, numerics.t_end, numerics.stride)
    all_times = np.concatenate(([0.0], sample_times))

    if gamma > 0.0:
        thresholds = np.array([_draw_threshold(_run_rng(master_seed, i))
                               for i in range(n_runs)])
        stop_norm = float(np.min(thresholds))
    else:
        thresholds = None  # closed evolution: no run ever jumps
        stop_norm = None

    pot = PauliPotential(trap, initial.grid, basis="ge")
    base = _build_base_cache(initial, pot, numerics, gamma, sample_times,
                             stop_norm, want_distributions)

    # Locate each run's first threshold crossing on the cached norm curve.
    tasks: list[_RunTask | None] = []
    for i in range(n_runs):
        if thresholds is None:
            tasks.append(None)
            continue
        r = thresholds[i]
        crossed = np.flatnonzero(base.norm2 <= r)
        if crossed.size == 0:
            tasks.append(None)  # never jumps: the run is the base run
            continue
        j = int(crossed[0])  # crossing lies in (times[j-1], times[j]]
        k = j - 1
        tasks.append(_RunTask(run_index=i, resume_index=k, psi=base.psi[k],
                              t=float(base.times[k]), dt=float(base.dt[k])))

    pending = [t for t in tasks if t is not None]
    results: dict[int, tuple] = {}
    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_execute_run, trap, numerics, gamma, master_seed,
                                   task, sample_times, want_distributions)
                       for task in pending]
            for fut in futures:
                idx, jumps, mseries, wx, wp = fut.result()
                results[idx] = (jumps, mseries, wx, wp)
    else:
        for task in pending:
            idx, jumps, mseries, wx, wp = _execute_run(
                trap, numerics, gamma, master_seed, task, sample_times,
                want_distributions)
            results[idx] = (jumps, mseries, wx, wp)

    # Stitch prefix + own tail per run; reduce strictly in run-index order.
    records = []
    per_run_moments = []
    acc_x = acc_p = None
    n_window = 0
    n_samples = all_times.size
    for i in range(n_runs):
        task = tasks[i]
        if task is None:
            if not base.complete:
                raise RuntimeError(
                    f"run {i}: threshold {thresholds[i]:.6f} never crossed but the "
                    "base evolution stopped early; inconsistent cache")
            jumps, mseries = (), base.moments
            wx, wp = base.window_x, base.window_p
        else:
            jumps, tail_m, tail_x, tail_p = results[i]
            k = task.resume_index
            mseries = base.moments[:k + 1] + tail_m
            wx = base.window_x[:k + 1] + tail_x
            wp = base.window_p[:k + 1] + tail_p
        if len(mseries) != n_samples:
            raise RuntimeError(f"run {i}: {len(mseries)} samples, expected {n_samples}")
        records.append(RunRecord(run_index=i, master_seed=master_seed,
                                 jumps=jumps, moments=list(mseries)))
        per_run_moments.append(mseries)
        if want_distributions:
            for dx_snap, dp_snap in zip(wx, wp):
                if dx_snap is None:
                    continue
                if acc_x is None:
                    acc_x = np.zeros((2, dx_snap.p_g.size))
                    acc_p = np.zeros((2, dp_snap.p_g.size))
                    dist_template = (dx_snap, dp_snap)
                acc_x[0] += dx_snap.p_g
                acc_x[1] += dx_snap.p_e
                acc_p[0] += dp_snap.p_g
                acc_p[1] += dp_snap.p_e
                n_window += 1

    dist_x = dist_p = None
    if want_distributions and n_window > 0:
        tx, tp = dist_template
        t_mid = 0.5 * (numerics.window[0] + numerics.window[1])
        dist_x = Distribution(abscissa=tx.abscissa, p_g=acc_x[0] / n_window,
                              p_e=acc_x[1] / n_window,
                              p_total=(acc_x[0] + acc_x[1]) / n_window,
                              spacing=tx.spacing, kind="position", t=t_mid,
                              normalized=True)
        dist_p = Distribution(abscissa=tp.abscissa, p_g=acc_p[0] / n_window,
                              p_e=acc_p[1] / n_window,
                              p_total=(acc_p[0] + acc_p[1]) / n_window,
                              spacing=tp.spacing, kind="momentum", t=t_mid,
                              normalized=True)

    summaries = _average_summaries(all_times, per_run_moments)
    return McwfResult(times=all_times, summaries=summaries, dist_x=dist_x,
                      dist_p=dist_p, records=records, master_seed=master_seed,
                      gamma=gamma)
