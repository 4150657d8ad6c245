"""Jump-adapted Euler-Maruyama batch simulation.

Large jumps are pre-drawn per path and applied at their exact arrival
times; the drift is integrated piecewise between them, with automatic
substepping when the local drift would move the state by more than a set
fraction of its size (stiff superlinear descents need this).  Small jumps
above the kernel's truncation threshold are binned into base steps, and
the part below the threshold is carried by a matched Gaussian proxy.

Draw order per path is fixed: starting point (if law-valued), large-jump
gaps, magnitudes, directions, then small-jump gaps, magnitudes,
directions, then per-chunk normal blocks.  The sequence depends only on
(base_seed, stream_id), so batches are reproducible under any scheduling
and a one-path batch reproduces simulate_path exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SimulationError
from .model import SMALL_GAUSSIAN_PROXY, SMALL_STABLE_LIKE
from .rng import RandomStream, batch_stream
from .sampling import (MAGNITUDE_LARGE, MAGNITUDE_SMALL, JumpEvent,
                       sample_jump_times)

_CHUNK = 1024


@dataclass(frozen=True)
class SimulationGrid:
    """Base time grid and stepping controls.

    The number of base steps is horizon/dt rounded to an integer; the
    effective step is horizon/n_steps.  retain_stride thins the stored
    trajectory (the final state is always kept).  stability_fraction
    bounds the relative state move per drift substep.
    """

    horizon: float
    dt: float
    jump_adapted: bool = True
    retain_stride: int = 1
    stability_fraction: float = 0.2
    max_substeps: int = 200000
    explosion_guard: float = 1e300

    def __post_init__(self):
        if self.horizon <= 0 or self.dt <= 0:
            raise DomainError("horizon and dt must be positive")
        if self.retain_stride < 1:
            raise DomainError("retain stride must be at least 1")
        if not 0 < self.stability_fraction <= 1:
            raise DomainError("stability fraction must lie in (0, 1]")
        if self.n_steps < 1:
            raise DomainError("grid resolves no steps")

    @property
    def n_steps(self):
        return max(1, int(round(self.horizon / self.dt)))

    @property
    def dt_eff(self):
        return self.horizon / self.n_steps


@dataclass(frozen=True)
class TruncationPolicy:
    """Freeze a path when a single jump exceeds level**(1-eps)."""

    level: float
    eps: float
    active: bool = True

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise DomainError("truncation exponent must lie in (0, 1)")
        if self.threshold <= 1.0:
            raise DomainError("truncation threshold level**(1-eps) must exceed 1")

    @property
    def threshold(self):
        return self.level ** (1.0 - self.eps)


@dataclass
class Path:
    """One trajectory on its retained time grid.

    jump_log holds the applied jumps (plus, for a truncated path, the
    oversized jump that triggered the freeze; it is not applied).  Applied
    jump times always appear among the retained times.
    """

    times: np.ndarray
    states: np.ndarray
    jump_log: list
    stream_id: int
    exploded: bool = False
    truncated_at: float | None = None
    clamp_count: int = 0

    def state_at(self, t):
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        i = max(0, i)
        return self.states[i]


@dataclass
class PathBatch:
    """Vectorized result of a batch run on the shared retained grid."""

    times: np.ndarray                  # (k,)
    states: np.ndarray                 # (n_paths, k, n)
    stream_ids: np.ndarray
    exploded: np.ndarray               # bool (n_paths,)
    truncated_at: np.ndarray           # nan where not truncated
    clamp_counts: np.ndarray
    jump_counts: np.ndarray
    passage_levels: tuple
    passage_times: np.ndarray          # (n_levels, n_paths), nan = censored
    base_seed: int
    horizon: float
    dt: float

    @property
    def n_paths(self):
        return self.states.shape[0]

    @property
    def dimension(self):
        return self.states.shape[2]

    def radii(self):
        return np.sqrt(np.sum(self.states ** 2, axis=2))

    def passage(self, level):
        for i, lv in enumerate(self.passage_levels):
            if math.isclose(lv, level, rel_tol=1e-12):
                return self.passage_times[i]
        raise KeyError("passage level %g was not tracked" % level)


def _drift_flow(drift_fn, t0, x, h, frac, max_sub):
    """Integrate x' = a(t, x) over [t0, t0+h] with relative-move substeps.

    x is (k, n) and is consumed; returns (x, overflow_mask).  Non-stiff
    rows finish in a single substep.
    """
    k = x.shape[0]
    rem = np.full(k, h)
    active = rem > 0
    overflow = np.zeros(k, dtype=bool)
    it = 0
    while active.any():
        if it >= max_sub:
            overflow |= active
            break
        it += 1
        xa = x[active]
        a = np.asarray(drift_fn(t0 + (h - rem[active]), xa), dtype=float)
        asq = np.sum(a * a, axis=1)
        amax = np.sqrt(asq)
        size = np.sqrt(np.sum(xa * xa, axis=1)) + 1.0
        radial = np.sum(a * xa, axis=1)
        rem_a = rem[active]
        with np.errstate(divide="ignore", invalid="ignore"):
            cap = frac * size / amax
            # inward fields must not overshoot radially: |x + h a| <= |x|
            # needs h <= -2 (x.a) / |a|^2, take half for monotone decrease
            stab = np.where(radial < 0.0, -radial / asq, np.inf)
        single = (amax * rem_a <= frac * size) & (rem_a <= stab)
        hloc = np.where(single, rem_a,
                        np.minimum(np.minimum(cap, stab), rem_a))
        hloc = np.where(np.isfinite(hloc), hloc, rem_a)
        x[active] = xa + a * hloc[:, None]
        rem[active] -= hloc
        active = rem > 1e-18 * h
    return x, overflow


def _draw_path_events(model, grid, stream):
    """Pre-draw every jump of one path in the contractual order."""
    kernel = model.kernel
    if kernel is None:
        return (np.empty(0), np.empty((0, model.dimension)),
                np.empty(0), np.empty((0, model.dimension)))
    lt = sample_jump_times(kernel.large_rate(), grid.horizon, stream)
    lmag = kernel.draw_large_magnitudes(stream, lt.size) if lt.size else np.empty(0)
    ldir = kernel.draw_directions(stream, lt.size) if lt.size else \
        np.empty((0, model.dimension))
    lvec = lmag[:, None] * ldir if lt.size else np.empty((0, model.dimension))
    st = np.empty(0)
    svec = np.empty((0, model.dimension))
    if kernel.small_jump_model == SMALL_STABLE_LIKE:
        rate = kernel.small_event_rate()
        if rate * grid.horizon > 2e7:
            raise SimulationError(
                "small-jump event rate %g over horizon %g is impractical; "
                "raise the kernel truncation threshold" % (rate, grid.horizon))
        st = sample_jump_times(rate, grid.horizon, stream)
        if st.size:
            smag = kernel.draw_small_magnitudes(stream, st.size)
            sdir = kernel.draw_directions(stream, st.size)
            svec = smag[:, None] * sdir
    return lt, lvec, st, svec


def _proxy_scales(model):
    """Per-coordinate standard deviation of the sub-threshold proxy."""
    kernel = model.kernel
    n = model.dimension
    if kernel is None:
        return None
    if kernel.small_jump_model == SMALL_STABLE_LIKE:
        cov = kernel.sub_threshold_covariance(kernel.truncation_eps)
        return np.sqrt(np.diag(cov))
    if kernel.small_jump_model == SMALL_GAUSSIAN_PROXY:
        return np.full(n, math.sqrt(kernel.proxy_variance))
    return None


def _sim_drift(model):
    """Drift integrated between plain jumps: physical minus the mean of the
    small-jump band that is simulated uncompensated."""
    kernel = model.kernel
    correction = None
    if kernel is not None and kernel.small_jump_model == SMALL_STABLE_LIKE:
        c = kernel.truncation_drift(kernel.truncation_eps)
        if np.any(c != 0.0):
            correction = c

    if correction is None:
        return model.physical_drift

    def drift(t, x):
        return model.physical_drift(t, x) - correction
    return drift


def simulate_batch(model, grid, x0, n_paths, base_seed, truncation=None,
                   passage_levels=(), record_jump_log=False, workers=1,
                   stream_offset=0, _streams=None):
    """Run n_paths independent trajectories and return a PathBatch.

    x0 is a scalar, a state vector, an (n_paths, dimension) array, or a
    callable stream -> state drawn per path.  passage_levels are radii
    whose first hitting-from-above times are recorded at base-step
    resolution during the run.  workers splits the batch into contiguous
    stream ranges; results are identical for any worker count.
    """
    if n_paths < 1:
        raise DomainError("need at least one path")
    if workers > 1 and n_paths >= 2 * workers and _streams is None:
        return _parallel_batch(model, grid, x0, n_paths, base_seed, truncation,
                               passage_levels, record_jump_log, workers,
                               stream_offset)

    n = model.dimension
    n_steps = grid.n_steps
    dt = grid.dt_eff
    adapted = grid.jump_adapted
    trunc = truncation if (truncation is not None and truncation.active) else None

    if _streams is not None:
        streams = _streams
        if len(streams) != n_paths:
            raise DomainError("stream list does not match the path count")
    else:
        streams = [batch_stream(base_seed, stream_offset + i)
                   for i in range(n_paths)]

    # starting states, then events, in each path's stream order
    x_now = np.empty((n_paths, n))
    if callable(x0):
        for i, s in enumerate(streams):
            x_now[i] = np.asarray(x0(s), dtype=float).reshape(n)
    else:
        arr = np.asarray(x0, dtype=float)
        if arr.ndim <= 1:
            x_now[:] = arr.reshape(1, -1) if arr.ndim == 1 else arr
        else:
            if arr.shape != (n_paths, n):
                raise DomainError("x0 array must be (n_paths, dimension)")
            x_now[:] = arr

    ev_time, ev_path, ev_vec = [], [], []
    sm_time, sm_path, sm_vec = [], [], []
    for i, s in enumerate(streams):
        lt, lvec, st, svec = _draw_path_events(model, grid, s)
        ev_time.append(lt)
        ev_path.append(np.full(lt.size, i))
        ev_vec.append(lvec)
        sm_time.append(st)
        sm_path.append(np.full(st.size, i))
        sm_vec.append(svec)
    ev_time = np.concatenate(ev_time) if ev_time else np.empty(0)
    ev_path = np.concatenate(ev_path).astype(int) if ev_path else np.empty(0, int)
    ev_vec = np.concatenate(ev_vec) if ev_vec else np.empty((0, n))
    sm_time = np.concatenate(sm_time) if sm_time else np.empty(0)
    sm_path = np.concatenate(sm_path).astype(int) if sm_path else np.empty(0, int)
    sm_vec = np.concatenate(sm_vec) if sm_vec else np.empty((0, n))

    ev_step = np.minimum((ev_time / dt).astype(int), n_steps - 1)
    order = np.lexsort((ev_time, ev_path, ev_step))
    ev_time, ev_path, ev_vec, ev_step = (ev_time[order], ev_path[order],
                                         ev_vec[order], ev_step[order])
    sm_step = np.minimum((sm_time / dt).astype(int), n_steps - 1)
    order = np.argsort(sm_step, kind="stable")
    sm_path, sm_vec, sm_step = sm_path[order], sm_vec[order], sm_step[order]

    sim_drift = _sim_drift(model)
    proxy_std = _proxy_scales(model)
    has_proxy = proxy_std is not None and np.any(proxy_std > 0)
    const_sigma = None
    sigma_fn = None
    if model.diffusion is not None:
        if callable(model.diffusion):
            sigma_fn = model.diffusion
        else:
            const_sigma = model.diffusion
    m_sigma = model.noise_dim
    m_total = m_sigma + (n if has_proxy else 0)

    retained = list(range(0, n_steps + 1, grid.retain_stride))
    if retained[-1] != n_steps:
        retained.append(n_steps)
    retained_set = {k: j for j, k in enumerate(retained)}
    out = np.empty((n_paths, len(retained), n))
    out[:, 0] = x_now

    levels = tuple(float(v) for v in passage_levels)
    pass_t = np.full((len(levels), n_paths), np.nan)
    radius0 = np.sqrt(np.sum(x_now ** 2, axis=1))
    for li, lv in enumerate(levels):
        hit = radius0 <= lv
        pass_t[li, hit] = 0.0

    exploded = np.zeros(n_paths, dtype=bool)
    truncated_at = np.full(n_paths, np.nan)
    clamp_counts = np.zeros(n_paths, dtype=int)
    jump_counts = np.zeros(n_paths, dtype=int)
    jump_logs = [[] for _ in range(n_paths)] if record_jump_log else None
    event_states = [[] for _ in range(n_paths)] if record_jump_log else None
    frac = grid.stability_fraction
    max_sub = grid.max_substeps
    guard = grid.explosion_guard

    ev_lo = 0
    sm_lo = 0
    normals = None
    chunk_start = 0

    def freeze_mask():
        return exploded | ~np.isnan(truncated_at)

    for k in range(n_steps):
        t0 = k * dt
        if m_total and k % _CHUNK == 0:
            clen = min(_CHUNK, n_steps - k)
            normals = np.empty((n_paths, clen, m_total))
            for i, s in enumerate(streams):
                normals[i] = s.normal((clen, m_total))
            chunk_start = k
        alive = ~freeze_mask()

        # diffusion and proxy noise over the full step
        if m_total:
            xi = normals[:, k - chunk_start]
            inc = np.zeros((n_paths, n))
            if m_sigma:
                body = xi[:, :m_sigma]
                if const_sigma is not None:
                    inc += body @ const_sigma.T
                else:
                    sig = np.asarray(sigma_fn(t0, x_now), dtype=float)
                    inc += np.einsum("...ij,...j->...i", sig, body)
            if has_proxy:
                inc += proxy_std * xi[:, m_sigma:]
            x_now[alive] += math.sqrt(dt) * inc[alive]

        # binned small jumps
        sm_hi = sm_lo
        while sm_hi < sm_step.size and sm_step[sm_hi] == k:
            sm_hi += 1
        if sm_hi > sm_lo:
            seg_p = sm_path[sm_lo:sm_hi]
            seg_v = sm_vec[sm_lo:sm_hi]
            keep = alive[seg_p]
            np.add.at(x_now, seg_p[keep], seg_v[keep])
            if record_jump_log:
                # binned small jumps land at the end of their step, so that
                # is their time on the retained grid
                for idx in range(sm_lo, sm_hi):
                    pi = sm_path[idx]
                    if alive[pi]:
                        jump_logs[pi].append(JumpEvent(
                            t0 + dt, sm_vec[idx].copy(), MAGNITUDE_SMALL))
            sm_lo = sm_hi

        # large events of this step
        ev_hi = ev_lo
        while ev_hi < ev_step.size and ev_step[ev_hi] == k:
            ev_hi += 1
        has_event = np.zeros(n_paths, dtype=bool)
        if ev_hi > ev_lo and adapted:
            has_event[ev_path[ev_lo:ev_hi]] = True

        plain = alive & ~has_event
        if plain.any():
            seg = x_now[plain]
            seg, overflow = _drift_flow(sim_drift, t0, seg, dt, frac, max_sub)
            x_now[plain] = seg
            if overflow.any():
                idx = np.flatnonzero(plain)[overflow]
                exploded[idx] = True

        row = ev_lo
        while row < ev_hi:
            pi = int(ev_path[row])
            group_end = row
            while group_end < ev_hi and int(ev_path[group_end]) == pi:
                group_end += 1
            if not alive[pi]:
                row = group_end
                continue
            if not adapted:
                # smeared mode: drift was already integrated over the full
                # step above; jumps land at the end of it
                for r2 in range(row, group_end):
                    z = ev_vec[r2]
                    if model.kernel.state_modulation is not None:
                        z = np.asarray(model.kernel.state_modulation(
                            t0 + dt, x_now[pi], z), dtype=float)
                    x_now[pi] += z
                    jump_counts[pi] += 1
                    if record_jump_log:
                        jump_logs[pi].append(JumpEvent(t0 + dt, np.array(z),
                                                       MAGNITUDE_LARGE))
                row = group_end
                continue
            # adapted mode: walk this path's events in order, integrating
            # the drift piecewise between consecutive arrival times
            cursor = t0
            last = x_now[pi:pi + 1]
            dead = False
            for r2 in range(row, group_end):
                tau = float(ev_time[r2])
                last, overflow = _drift_flow(sim_drift, cursor, last,
                                             tau - cursor, frac, max_sub)
                cursor = tau
                if overflow.any():
                    exploded[pi] = True
                    dead = True
                    break
                z = ev_vec[r2]
                if model.kernel.state_modulation is not None:
                    z = np.asarray(model.kernel.state_modulation(
                        tau, last[0], z), dtype=float)
                if trunc is not None and np.linalg.norm(z) > trunc.threshold:
                    truncated_at[pi] = tau
                    if record_jump_log:
                        jump_logs[pi].append(JumpEvent(tau, np.array(z),
                                                       MAGNITUDE_LARGE))
                        event_states[pi].append((tau, last[0].copy()))
                    dead = True
                    break
                last[0] += z
                jump_counts[pi] += 1
                if record_jump_log:
                    jump_logs[pi].append(JumpEvent(tau, np.array(z),
                                                   MAGNITUDE_LARGE))
                    event_states[pi].append((tau, last[0].copy()))
            if not dead:
                last, overflow = _drift_flow(sim_drift, cursor, last,
                                             t0 + dt - cursor, frac, max_sub)
                if overflow.any():
                    exploded[pi] = True
            row = group_end
        ev_lo = ev_hi

        if model.clamp_nonnegative:
            neg = alive & np.any(x_now < 0.0, axis=1)
            if neg.any():
                clamp_counts[neg] += 1
                x_now[neg] = np.maximum(x_now[neg], 0.0)

        bad = alive & (~np.all(np.isfinite(x_now), axis=1)
                       | (np.max(np.abs(x_now), axis=1) > guard))
        if bad.any():
            exploded |= bad
            x_now[bad] = np.where(np.isfinite(x_now[bad]), x_now[bad], guard)

        if levels:
            radius = np.sqrt(np.sum(x_now ** 2, axis=1))
            for li, lv in enumerate(levels):
                hit = np.isnan(pass_t[li]) & (radius <= lv)
                if hit.any():
                    pass_t[li, hit] = t0 + dt

        j = retained_set.get(k + 1)
        if j is not None:
            out[:, j] = x_now

    batch = PathBatch(
        times=np.array(retained, dtype=float) * dt,
        states=out,
        stream_ids=np.array([s.stream_id for s in streams]),
        exploded=exploded,
        truncated_at=truncated_at,
        clamp_counts=clamp_counts,
        jump_counts=jump_counts,
        passage_levels=levels,
        passage_times=pass_t,
        base_seed=int(base_seed),
        horizon=grid.horizon,
        dt=dt,
    )
    if record_jump_log:
        batch.jump_logs = jump_logs
        batch.event_states = event_states
    return batch


def _parallel_batch(model, grid, x0, n_paths, base_seed, truncation,
                    passage_levels, record_jump_log, workers, stream_offset):
    from concurrent.futures import ThreadPoolExecutor

    bounds = np.linspace(0, n_paths, workers + 1).astype(int)
    spans = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]

    def member(span):
        a, b = span
        sub_x0 = x0
        if not callable(x0):
            arr = np.asarray(x0, dtype=float)
            if arr.ndim == 2:
                sub_x0 = arr[a:b]
        return simulate_batch(model, grid, sub_x0, b - a, base_seed,
                              truncation=truncation,
                              passage_levels=passage_levels,
                              record_jump_log=record_jump_log,
                              workers=1, stream_offset=stream_offset + a)

    with ThreadPoolExecutor(max_workers=len(spans)) as pool:
        parts = list(pool.map(member, spans))

    first = parts[0]
    batch = PathBatch(
        times=first.times,
        states=np.concatenate([p.states for p in parts], axis=0),
        stream_ids=np.concatenate([p.stream_ids for p in parts]),
        exploded=np.concatenate([p.exploded for p in parts]),
        truncated_at=np.concatenate([p.truncated_at for p in parts]),
        clamp_counts=np.concatenate([p.clamp_counts for p in parts]),
        jump_counts=np.concatenate([p.jump_counts for p in parts]),
        passage_levels=first.passage_levels,
        passage_times=np.concatenate([p.passage_times for p in parts], axis=1),
        base_seed=int(base_seed),
        horizon=grid.horizon,
        dt=first.dt,
    )
    if record_jump_log:
        batch.jump_logs = sum((p.jump_logs for p in parts), [])
        batch.event_states = sum((p.event_states for p in parts), [])
    return batch


def simulate_path(model, grid, x0, stream, truncation=None):
    """One trajectory as a Path, with applied jump times in the grid."""
    batch = simulate_batch(model, grid, x0, 1, stream.seed,
                           truncation=truncation, record_jump_log=True,
                           _streams=[stream])
    times = batch.times
    states = batch.states[0]
    inserts = getattr(batch, "event_states", [[]])[0]
    if inserts:
        ins_t = np.array([t for t, _ in inserts])
        ins_x = np.stack([s for _, s in inserts])
        times = np.concatenate([times, ins_t])
        states = np.concatenate([states, ins_x], axis=0)
        order = np.argsort(times, kind="stable")
        times = times[order]
        states = states[order]
    tr = batch.truncated_at[0]
    return Path(
        times=times,
        states=states,
        jump_log=batch.jump_logs[0],
        stream_id=stream.stream_id,
        exploded=bool(batch.exploded[0]),
        truncated_at=None if math.isnan(tr) else float(tr),
        clamp_count=int(batch.clamp_counts[0]),
    )


def simulate_storage_exact(kappa, alpha, x0, horizon, stream, retain_times=None):
    """Event-exact storage trajectory: closed-form release between jumps.

    The release flow solves y' = -y**kappa above 1 and y' = -y below, both
    in closed form, so the only approximation anywhere is floating point.
    Consumes the stream in the same order as the Euler engine, which makes
    shared-stream comparisons meaningful.
    """
    if x0 < 0:
        raise DomainError("storage state starts nonnegative")
    times = sample_jump_times(1.0, horizon, stream)
    sizes = _pareto(alpha, stream, times.size) if times.size else np.empty(0)

    def flow(y, s):
        # closed-form decay over duration s
        if s <= 0 or y <= 0:
            return max(y, 0.0)
        if kappa == 1.0:
            return y * math.exp(-s)
        if y > 1.0:
            t_hit = (y ** (1.0 - kappa) - 1.0) / (1.0 - kappa)
            if s < t_hit:
                return (y ** (1.0 - kappa) - (1.0 - kappa) * s) ** (1.0 / (1.0 - kappa))
            y, s = 1.0, s - t_hit
        return y * math.exp(-s)

    grid = np.asarray(retain_times, dtype=float) if retain_times is not None \
        else np.array([0.0, horizon])
    all_t = np.unique(np.concatenate([grid, times, [0.0, horizon]]))
    all_t = all_t[(all_t >= 0.0) & (all_t <= horizon)]
    states = np.empty((all_t.size, 1))
    log = []
    y = float(x0)
    t_prev = 0.0
    j = 0
    for i, t in enumerate(all_t):
        y = flow(y, t - t_prev)
        t_prev = t
        # retained times were merged from the same float array, so jump
        # times match their grid entries bit for bit
        while j < times.size and times[j] == t:
            y += sizes[j]
            log.append(JumpEvent(float(times[j]), np.array([sizes[j]]),
                                 MAGNITUDE_LARGE))
            j += 1
        states[i, 0] = y
    return Path(times=all_t, states=states, jump_log=log,
                stream_id=stream.stream_id)


def _pareto(alpha, stream, count):
    from .sampling import sample_pareto_magnitude
    return sample_pareto_magnitude(alpha, stream, count)


@dataclass(frozen=True)
class PassageObservation:
    time: float
    delta: float
    resolution: float


def detect_passage_time(path, level, after=0.0):
    """First retained time at or after `after` with |state| <= level.

    Returns a PassageObservation or None if the path never reaches the
    level on its grid (censoring is the caller's concern).  Resolution is
    the local grid spacing at the detection point.
    """
    radius = np.sqrt(np.sum(path.states ** 2, axis=1))
    eligible = path.times >= after
    hit = eligible & (radius <= level)
    idx = np.flatnonzero(hit)
    if idx.size == 0:
        return None
    i = int(idx[0])
    if i > 0:
        res = float(path.times[i] - path.times[i - 1])
    elif path.times.size > 1:
        res = float(path.times[1] - path.times[0])
    else:
        res = 0.0
    return PassageObservation(time=float(path.times[i]),
                              delta=float(path.times[i] - after),
                              resolution=res)
