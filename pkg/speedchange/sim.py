"""
Kinetic Monte Carlo for speed-change exclusion on a periodic box
Uniformisation: candidate events arrive at the global rate L^d * sum_y max r(y, .),
a candidate (x, y) is accepted with probability r(y, tau_x eta) / max r(y, .)
when the exclusion rule allows it. Replicas run on independent seed streams.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import pandas as pd
from numba import njit
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import integrate

from . import polynomial as poly
from .catalog import resolve_model
from .config import get_settings
from .dual import FluxBundle, macroscopic_flux, microscopic_flux, symbolic_derivative
from .errors import InputError, NumericalError, ResourceError
from .model import Configuration, DensityContext, Model
from .sites import add, flat_index, torus_sites

logger = logging.getLogger(__name__)

EVENT_DTYPE = np.dtype([("time", "<f8"), ("site", "<u4"), ("code", "<i2")])
Mode = Literal["structure_function", "second_class", "flux_autocorr"]


class SimConfig(BaseModel):
    """One simulation campaign: model, box, density, horizon and replicas"""

    model: str = Field(..., description="Builtin model name or path to a model file")
    params: Dict[str, Any] = Field(default_factory=dict, description="Builtin model parameters")
    L: int = Field(..., ge=2, description="Box side")
    rho: float = Field(..., gt=0, lt=1)
    t_max: float = Field(..., gt=0)
    sample_times: List[float] = Field(default_factory=list)
    replicas: int = Field(1, ge=1)
    seed: Optional[int] = Field(None, description="Base seed; settings seed when omitted")
    mode: Mode = "structure_function"
    dt: float = Field(0.05, gt=0, description="Sampling step of flux observables")
    record_events: bool = False
    enforce_finite_size: bool = True

    @field_validator("sample_times")
    @classmethod
    def _sorted(cls, values: List[float]) -> List[float]:
        if any(b < a for a, b in zip(values, values[1:])):
            raise ValueError("sample times must be nondecreasing")
        if any(v < 0 for v in values):
            raise ValueError("sample times must be nonnegative")
        return values

    @model_validator(mode="after")
    def _horizon(self) -> "SimConfig":
        if self.sample_times and self.sample_times[-1] > self.t_max:
            raise ValueError("sample times exceed t_max")
        return self

    @property
    def base_seed(self) -> int:
        return self.seed if self.seed is not None else get_settings().seed

    def resolve(self) -> Model:
        model = resolve_model(self.model, self.params)
        guard = 4 * model.K * (1 + math.ceil(math.sqrt(self.t_max)))
        if self.enforce_finite_size and self.L < guard:
            raise InputError(f"L={self.L} is below the finite-size guard {guard} for t_max={self.t_max}")
        return model


class StructureFunction(BaseModel):
    """S(x, t) = chi^{-1} <eta_x(t); eta_0(0)> on the box, replica-averaged"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    L: int
    d: int
    rho: float
    times: List[float]
    mean: np.ndarray = Field(..., description="Shape (times, L^d)")
    stderr: np.ndarray
    replicas: int

    def offsets(self) -> np.ndarray:
        """Signed coordinates in (-L/2, L/2] for every flat site, shape (L^d, d)"""
        coords = np.array(np.unravel_index(np.arange(self.L ** self.d), (self.L,) * self.d)).T
        return np.where(coords > self.L // 2, coords - self.L, coords)

    def moments(self) -> pd.DataFrame:
        """Sum of S and the first moment per axis with standard errors"""
        x = self.offsets()
        rows = []
        for k, t in enumerate(self.times):
            row: Dict[str, float] = {"t": t, "sum": float(self.mean[k].sum()), "sum_se": float(math.sqrt(np.sum(self.stderr[k] ** 2)))}
            for axis in range(self.d):
                row[f"first_{axis}"] = float(np.sum(x[:, axis] * self.mean[k]))
            rows.append(row)
        return pd.DataFrame(rows)

    def to_frame(self) -> pd.DataFrame:
        x = self.offsets()
        frames = []
        for k, t in enumerate(self.times):
            frame = pd.DataFrame({f"x{axis}": x[:, axis] for axis in range(self.d)})
            frame.insert(0, "t", t)
            frame["S"] = self.mean[k]
            frame["stderr"] = self.stderr[k]
            frames.append(frame)
        return pd.concat(frames, ignore_index=True)


class DiffusivityCurve(BaseModel):
    times: List[float]
    D: List[List[float]] = Field(..., description="D_ii(t) per axis")
    stderr: List[List[float]]
    j1: List[float] = Field(..., description="j_i'(rho) used for centring")
    method: str

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"t": self.times})
        for axis, (values, errors) in enumerate(zip(self.D, self.stderr)):
            frame[f"D_{axis}"] = values
            frame[f"D_{axis}_se"] = errors
        return frame


class GreenKuboEstimate(BaseModel):
    lambdas: List[float]
    dhat: List[float]
    stderr: List[float]
    w_term: List[float]
    v_term: List[float]
    refused: List[bool] = Field(..., description="lambda below the resolution 10/T")
    tail_bound: List[float]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.model_dump())


class EventLog(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    records: np.ndarray
    accepted: int
    proposed: int

    @property
    def acceptance(self) -> float:
        return self.accepted / self.proposed if self.proposed else 0.0


class JumpTables:
    """Flat lookup arrays for the compiled kernels"""

    def __init__(self, model: Model, L: int):
        self.d = model.d
        self.N = L ** model.d
        jumps = [(y, table) for y, table in sorted(model.rates.items()) if not table.is_zero]
        if not jumps:
            raise InputError(f"model {model.name} has no jumps")
        width = max(len(table.window) for _, table in jumps)
        sites = torus_sites(L, model.d)
        J = len(jumps)
        self.displacements = np.array([y for y, _ in jumps], dtype=np.int64)
        self.targets = np.empty((J, self.N), dtype=np.int64)
        self.windows = np.zeros((J, max(width, 1), self.N), dtype=np.int64)
        self.offsets = np.zeros((J, max(width, 1), model.d), dtype=np.int64)
        self.wlen = np.array([len(table.window) for _, table in jumps], dtype=np.int64)
        self.tables = np.zeros((J, 1 << width), dtype=np.float64)
        self.max_rates = np.array([float(table.max_rate) for _, table in jumps])
        for j, (y, table) in enumerate(jumps):
            values = [float(v) for v in table.values]
            self.tables[j, : len(values)] = values
            for x in sites:
                i = flat_index(x, L)
                self.targets[j, i] = flat_index(add(x, y), L)
                for b, z in enumerate(table.window):
                    self.windows[j, b, i] = flat_index(add(x, z), L)
            for b, z in enumerate(table.window):
                self.offsets[j, b] = z
        self.cum_max = np.cumsum(self.max_rates)


@njit(cache=True, nogil=True)
def _evolve_kernel(occ, targets, windows, wlen, tables, max_rates, cum_max, t_start, t_end,
                   sample_times, snapshots, seed, log_time, log_site, log_code, record):
    np.random.seed(seed)
    N = occ.shape[0]
    J = targets.shape[0]
    per_site = cum_max[J - 1]
    total = N * per_site
    t = t_start
    k = 0
    n_log = 0
    accepted = 0
    proposed = 0
    overflow = False
    S = sample_times.shape[0]
    while True:
        t += np.random.exponential(1.0 / total)
        while k < S and sample_times[k] < t and sample_times[k] <= t_end:
            snapshots[k, :] = occ
            k += 1
        if t > t_end:
            break
        proposed += 1
        x = np.random.randint(0, N)
        u = np.random.random() * per_site
        j = 0
        while j < J - 1 and cum_max[j] <= u:
            j += 1
        y = targets[j, x]
        if occ[x] == 1 and occ[y] == 0:
            pattern = 0
            for b in range(wlen[j]):
                pattern |= np.int64(occ[windows[j, b, x]]) << b
            # u is uniform on the jump's own segment of length max_rates[j]
            if u - (cum_max[j] - max_rates[j]) < tables[j, pattern]:
                occ[x] = 0
                occ[y] = 1
                accepted += 1
                if record:
                    if n_log < log_time.shape[0]:
                        log_time[n_log] = t
                        log_site[n_log] = x
                        log_code[n_log] = j
                        n_log += 1
                    else:
                        overflow = True
    while k < S:
        snapshots[k, :] = occ
        k += 1
    return n_log, accepted, proposed, overflow


@njit(cache=True, nogil=True)
def _fires(occ, x, y, j, windows, wlen, tables, level):
    if occ[x] == 0 or occ[y] == 1:
        return False
    pattern = 0
    for b in range(wlen[j]):
        pattern |= np.int64(occ[windows[j, b, x]]) << b
    return level < tables[j, pattern]


@njit(cache=True, nogil=True)
def _drop_discrepancy(site, slot_of, site_of, pos, sign, n):
    i = slot_of[site]
    last = n - 1
    site_of[i] = site_of[last]
    pos[i, :] = pos[last, :]
    sign[i] = sign[last]
    slot_of[site_of[i]] = i
    slot_of[site] = -1
    return last


@njit(cache=True, nogil=True)
def _discrepancy_moments(pos, sign, n, out):
    d = pos.shape[1]
    for a in range(d):
        first = 0.0
        second = 0.0
        for i in range(n):
            c = float(pos[i, a])
            first += sign[i] * c
            second += sign[i] * c * c
        out[0, a] = first
        out[1, a] = second


@njit(cache=True, nogil=True)
def _coupled_kernel(occ_a, occ_b, targets, windows, offsets, wlen, displacements, tables, max_rates, cum_max,
                    t_end, sample_times, moments, seed):
    """
    Basic coupling of two configurations driven by the same candidate clock:
    both jump when the shared level lies below both rates, one jumps when it
    lies between them. Discrepancies carry a sign (+1 where only occ_b is
    occupied) and an unwrapped position. Returns the largest discrepancy count,
    or -1 if a new discrepancy had no neighbour to take its position from.
    """
    np.random.seed(seed)
    N = occ_a.shape[0]
    J = targets.shape[0]
    d = displacements.shape[1]
    per_site = cum_max[J - 1]
    total = N * per_site
    slot_of = np.full(N, -1, dtype=np.int64)
    site_of = np.zeros(N, dtype=np.int64)
    pos = np.zeros((N, d), dtype=np.int64)
    sign = np.zeros(N, dtype=np.int64)
    base = np.zeros(d, dtype=np.int64)
    n = 0
    for s in range(N):
        if occ_a[s] != occ_b[s]:
            slot_of[s] = n
            site_of[n] = s
            sign[n] = np.int64(occ_b[s]) - np.int64(occ_a[s])
            n += 1
    most = n
    t = 0.0
    k = 0
    S = sample_times.shape[0]
    while True:
        t += np.random.exponential(1.0 / total)
        while k < S and sample_times[k] < t and sample_times[k] <= t_end:
            _discrepancy_moments(pos, sign, n, moments[k])
            k += 1
        if t > t_end:
            break
        x = np.random.randint(0, N)
        u = np.random.random() * per_site
        j = 0
        while j < J - 1 and cum_max[j] <= u:
            j += 1
        y = targets[j, x]
        level = u - (cum_max[j] - max_rates[j])
        fire_a = _fires(occ_a, x, y, j, windows, wlen, tables, level)
        fire_b = _fires(occ_b, x, y, j, windows, wlen, tables, level)
        if not fire_a and not fire_b:
            continue
        # unwrapped coordinate of x, read off a discrepancy that is already tracked
        found = True
        if slot_of[x] >= 0:
            base[:] = pos[slot_of[x], :]
        elif slot_of[y] >= 0:
            base[:] = pos[slot_of[y], :] - displacements[j, :]
        else:
            found = False
            for b in range(wlen[j]):
                s = windows[j, b, x]
                if slot_of[s] >= 0:
                    base[:] = pos[slot_of[s], :] - offsets[j, b, :]
                    found = True
                    break
        if fire_a:
            occ_a[x] = 0
            occ_a[y] = 1
        if fire_b:
            occ_b[x] = 0
            occ_b[y] = 1
        if fire_a and fire_b:
            continue
        if not found:
            return -1
        for s in (x, y):
            if slot_of[s] >= 0:
                n = _drop_discrepancy(s, slot_of, site_of, pos, sign, n)
        for s in (x, y):
            delta = np.int64(occ_b[s]) - np.int64(occ_a[s])
            if delta != 0:
                slot_of[s] = n
                site_of[n] = s
                sign[n] = delta
                pos[n, :] = base
                if s == y:
                    pos[n, :] += displacements[j, :]
                n += 1
        if n > most:
            most = n
    while k < S:
        _discrepancy_moments(pos, sign, n, moments[k])
        k += 1
    return most


def replica_streams(base_seed: int, replicas: int) -> List[Tuple[np.random.Generator, int]]:
    """Per-replica (initial-state generator, kernel seed), independent of scheduling"""
    out = []
    for child in np.random.SeedSequence(base_seed).spawn(replicas):
        init, kernel = child.spawn(2)
        out.append((np.random.default_rng(init), int(kernel.generate_state(1, dtype=np.uint32)[0])))
    return out


def kmc_evolve(
    model: Model,
    state: Configuration,
    horizon: float,
    seed: int,
    sample_times: Optional[List[float]] = None,
    record: bool = False,
    tables: Optional[JumpTables] = None,
) -> Tuple[Configuration, np.ndarray, EventLog]:
    """Evolve a configuration for the given time; returns final state, snapshots and event log"""
    if state.d != model.d:
        raise InputError(f"configuration is {state.d}-dimensional, model is {model.d}-dimensional")
    tables = tables or JumpTables(model, state.L)
    occ = state.occupancy.astype(np.uint8).copy()
    times = np.asarray(sample_times or [], dtype=np.float64)
    snapshots = np.zeros((len(times), occ.shape[0]), dtype=np.uint8)
    capacity = int(1.2 * tables.N * tables.cum_max[-1] * horizon) + 1024 if record else 0
    if capacity > 50_000_000:
        raise ResourceError(f"event log of {capacity} records is too large; disable recording or shorten the run")
    log_time = np.zeros(capacity, dtype=np.float64)
    log_site = np.zeros(capacity, dtype=np.uint32)
    log_code = np.zeros(capacity, dtype=np.int16)
    n_log, accepted, proposed, overflow = _evolve_kernel(
        occ, tables.targets, tables.windows, tables.wlen, tables.tables, tables.max_rates, tables.cum_max,
        0.0, float(horizon), times, snapshots, np.uint32(seed), log_time, log_site, log_code, record,
    )
    if overflow:
        raise ResourceError("event log capacity exceeded")
    records = np.zeros(n_log, dtype=EVENT_DTYPE)
    records["time"] = log_time[:n_log]
    records["site"] = log_site[:n_log]
    records["code"] = log_code[:n_log]
    ratio = accepted / proposed if proposed else 0.0
    logger.debug(f"kmc: {proposed} candidates, {accepted} accepted (ratio {ratio:.3f})")
    final = Configuration(L=state.L, d=state.d, occupancy=occ)
    return final, snapshots, EventLog(records=records, accepted=int(accepted), proposed=int(proposed))


def write_event_log(path: Union[str, Path], log: EventLog) -> Path:
    """Little-endian records (time f8, site u4, displacement code i2), no header"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    log.records.astype(EVENT_DTYPE).tofile(path)
    return path


def read_event_log(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    if path.stat().st_size % EVENT_DTYPE.itemsize:
        raise InputError(f"{path} is not a whole number of event records")
    return np.fromfile(path, dtype=EVENT_DTYPE)


def _run_replicas(func, streams: List[Tuple[np.random.Generator, int]]) -> List[Any]:
    threads = get_settings().threads
    if threads == 1 or len(streams) == 1:
        return [func(i, rng, seed) for i, (rng, seed) in enumerate(streams)]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        futures = [executor.submit(func, i, rng, seed) for i, (rng, seed) in enumerate(streams)]
        return [f.result() for f in futures]


def _mean_and_error(samples: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mean = samples.mean(axis=0)
    if samples.shape[0] < 2:
        return mean, np.full_like(mean, np.nan)
    return mean, samples.std(axis=0, ddof=1) / math.sqrt(samples.shape[0])


def _sample_grid(config: SimConfig) -> List[float]:
    times = list(config.sample_times) or [0.0, config.t_max]
    if times[0] != 0.0:
        times = [0.0] + times
    return times


def estimate_structure_function(config: SimConfig) -> StructureFunction:
    """Translation- and replica-averaged space-time covariance from Bernoulli initial data"""
    model = config.resolve()
    tables = JumpTables(model, config.L)
    times = _sample_grid(config)
    shape = (config.L,) * model.d
    chi = config.rho * (1 - config.rho)
    logger.info(f"Structure function for {model.name}: L={config.L}, {config.replicas} replicas, t_max={config.t_max}")

    def one(index: int, rng: np.random.Generator, seed: int) -> np.ndarray:
        state = Configuration.bernoulli(config.L, model.d, config.rho, rng)
        _, snapshots, _ = kmc_evolve(model, state, times[-1], seed, times, tables=tables)
        start = np.fft.fftn((snapshots[0].astype(float) - config.rho).reshape(shape))
        out = np.empty((len(times), config.L ** model.d))
        for k in range(len(times)):
            current = np.fft.fftn((snapshots[k].astype(float) - config.rho).reshape(shape))
            cov = np.fft.ifftn(current * np.conj(start)).real / config.L ** model.d
            out[k] = cov.ravel() / chi
        return out

    samples = np.stack(_run_replicas(one, replica_streams(config.base_seed, config.replicas)))
    mean, stderr = _mean_and_error(samples)
    return StructureFunction(L=config.L, d=model.d, rho=config.rho, times=times, mean=mean, stderr=stderr, replicas=config.replicas)


def flux_slope(model: Model, rho: float) -> List[float]:
    """j_i'(rho) per axis from the macroscopic flux polynomial"""
    return [float(symbolic_derivative(j, 1, rho)) for j in macroscopic_flux(model)]


def is_attractive(model: Model) -> bool:
    """Every rate is nondecreasing in each window occupancy, checked over all patterns"""
    for table in model.rates.values():
        width = len(table.window)
        for pattern in range(1 << width):
            for b in range(width):
                if not pattern >> b & 1 and table.values[pattern | 1 << b] < table.values[pattern]:
                    return False
    return True


def second_class_moments(config: SimConfig) -> Tuple[List[float], np.ndarray, int]:
    """
    Signed first and second moments of the discrepancies between eta and eta + delta_0
    under basic coupling, shape (replicas, times, 2, d), and the largest number of
    discrepancies seen. Summing over discrepancies gives S(x, t) = E[zeta_t(x)] - E[eta_t(x)]
    whatever extra pairs the coupling creates.
    """
    model = config.resolve()
    if not is_attractive(model):
        raise InputError(f"model {model.name} is not flagged attractive; second-class tracking is refused")
    tables = JumpTables(model, config.L)
    times = _sample_grid(config)
    sample = np.asarray(times, dtype=np.float64)
    origin_index = 0

    def one(index: int, rng: np.random.Generator, seed: int) -> Tuple[np.ndarray, int]:
        state = Configuration.bernoulli(config.L, model.d, config.rho, rng)
        occ_a = state.occupancy.astype(np.uint8).copy()
        occ_a[origin_index] = 0
        occ_b = occ_a.copy()
        occ_b[origin_index] = 1
        moments = np.zeros((len(times), 2, model.d), dtype=np.float64)
        most = _coupled_kernel(
            occ_a, occ_b, tables.targets, tables.windows, tables.offsets, tables.wlen, tables.displacements,
            tables.tables, tables.max_rates, tables.cum_max, float(times[-1]), sample, moments, np.uint32(seed),
        )
        if most < 0:
            raise NumericalError(f"replica {index} lost track of a discrepancy")
        return moments, int(most)

    logger.info(f"Second-class tracking for {model.name}: {config.replicas} replicas")
    results = _run_replicas(one, replica_streams(config.base_seed, config.replicas))
    most = max(r[1] for r in results)
    if most > 1:
        logger.debug(f"Coupling created extra discrepancy pairs; at most {most} at once")
    return times, np.stack([r[0] for r in results]), most


def estimate_diffusivity(config: SimConfig, structure: Optional[StructureFunction] = None) -> DiffusivityCurve:
    """D_ii(t) = t^{-1} [sum_x x_i^2 S(x,t) - (j_i' t)^2], or the same moments from the coupled discrepancies"""
    model = config.resolve()
    j1 = flux_slope(model, config.rho)
    if config.mode == "second_class":
        times, moments, _ = second_class_moments(config)
        replicas = moments.shape[0]
        D, err = [], []
        for axis in range(model.d):
            values, errors = [], []
            for k, t in enumerate(times):
                if t <= 0:
                    continue
                first = moments[:, k, 0, axis]
                second = moments[:, k, 1, axis]
                m1 = float(first.mean())
                values.append((float(second.mean()) - m1 ** 2) / t)
                # delta method on mean(second) - mean(first)^2
                q = second - 2 * m1 * first
                errors.append(float(q.std(ddof=1)) / math.sqrt(replicas) / t if replicas > 1 else float("nan"))
            D.append(values)
            err.append(errors)
        kept = [t for t in times if t > 0]
        return DiffusivityCurve(times=kept, D=D, stderr=err, j1=j1, method="second_class")

    structure = structure or estimate_structure_function(config)
    x = structure.offsets()
    D, err = [], []
    for axis in range(model.d):
        values, errors = [], []
        for k, t in enumerate(structure.times):
            if t <= 0:
                continue
            second = float(np.sum(x[:, axis] ** 2 * structure.mean[k]))
            se = float(math.sqrt(np.sum((x[:, axis] ** 2 * structure.stderr[k]) ** 2)))
            values.append((second - (j1[axis] * t) ** 2) / t)
            errors.append(se / t)
        D.append(values)
        err.append(errors)
    kept = [t for t in structure.times if t > 0]
    return DiffusivityCurve(times=kept, D=D, stderr=err, j1=j1, method="structure_function")


def laplace_dhat(curve: DiffusivityCurve, lambdas: List[float], axis: int = 0) -> Tuple[List[float], List[float]]:
    """
    lambda^2 int_0^inf e^{-lambda t} t D(t) dt from a measured D(t), by trapezoid
    over the sampled window; beyond the last time D is frozen at its final value.
    Returns the transform and the frozen-tail contribution per lambda.
    """
    if not curve.times:
        raise InputError("diffusivity curve has no positive sample times")
    t = np.concatenate([[0.0], np.asarray(curve.times, dtype=float)])
    D = np.asarray(curve.D[axis], dtype=float)
    tD = np.concatenate([[0.0], t[1:] * D])
    T, D_T = t[-1], D[-1]
    values, tails = [], []
    for lam in lambdas:
        body = lam ** 2 * integrate.trapezoid(np.exp(-lam * t) * tD, t)
        tail = D_T * math.exp(-lam * T) * (lam * T + 1)
        values.append(float(body + tail))
        tails.append(float(tail))
    return values, tails


def laplace_consistency(curve: DiffusivityCurve, estimate: GreenKuboEstimate, axis: int = 0) -> pd.DataFrame:
    """Laplace transform of D(t) next to the Green-Kubo D-hat on the same lambdas"""
    from_curve, tails = laplace_dhat(curve, estimate.lambdas, axis)
    frame = pd.DataFrame({
        "lambda": estimate.lambdas,
        "from_diffusivity": from_curve,
        "tail": tails,
        "from_green_kubo": estimate.dhat,
    })
    frame["residual"] = frame["from_diffusivity"] - frame["from_green_kubo"]
    worst = frame["residual"].abs().max()
    logger.info(f"Laplace consistency: largest |residual| {worst:.3g} over {len(frame)} lambdas")
    return frame


def _observable_series(p: poly.Poly, snapshots: np.ndarray, L: int, d: int) -> np.ndarray:
    """sum_x tau_x p on every snapshot"""
    shape = (L,) * d
    grids = snapshots.reshape((snapshots.shape[0],) + shape).astype(float)
    out = np.zeros(snapshots.shape[0])
    axes = tuple(range(1, d + 1))
    for key, value in p.items():
        term = np.ones_like(grids)
        for site in key:
            term = term * np.roll(grids, shift=tuple(-c for c in site), axis=axes)
        out += float(value) * term.reshape(snapshots.shape[0], -1).sum(axis=1)
    return out


def _autocorrelation(series: np.ndarray, max_lag: int) -> np.ndarray:
    n = len(series)
    padded = np.zeros(2 * n)
    padded[:n] = series
    spectrum = np.fft.rfft(padded)
    raw = np.fft.irfft(spectrum * np.conj(spectrum))[: max_lag + 1]
    return raw / (n - np.arange(max_lag + 1))


def gk_flux_autocorrelation(config: SimConfig, lambdas: List[float], axis: int = 0, bundle: Optional[FluxBundle] = None) -> GreenKuboEstimate:
    """
    D-hat(lambda) = C_ii + (2/chi)(L^d)^{-1} int_0^T e^{-lambda t} [<Phi_w(0) Phi_w(t)> - <Phi_v(0) Phi_v(t)>] dt
    from time-averaged equilibrium correlations of the summed local fluxes
    """
    model = config.resolve()
    ctx = DensityContext(rho=config.rho)
    bundle = bundle or microscopic_flux(model, ctx)
    tables = JumpTables(model, config.L)
    n_steps = int(round(config.t_max / config.dt))
    sample = [k * config.dt for k in range(n_steps + 1)]
    max_lag = n_steps // 4
    horizon = max_lag * config.dt
    w_poly = bundle.w[axis].to_monomials()
    v_poly = bundle.v[axis].to_monomials()
    volume = config.L ** model.d
    logger.info(f"Green-Kubo estimate for {model.name}: {config.replicas} replicas, T={config.t_max}, lag window {horizon}")

    lags = np.arange(max_lag + 1) * config.dt
    kernels = np.exp(-np.outer(lambdas, lags))

    def one(index: int, rng: np.random.Generator, seed: int) -> Tuple[np.ndarray, np.ndarray, float, float]:
        state = Configuration.bernoulli(config.L, model.d, config.rho, rng)
        _, snapshots, _ = kmc_evolve(model, state, config.t_max, seed, sample, tables=tables)
        # phi_w stays uncentred: its mean given the particle number is nonzero on a finite box and belongs
        # to the resolvent. v has zero reduced sum in every degree, so centring phi_v only removes noise.
        phi_w = _observable_series(w_poly, snapshots, config.L, model.d)
        phi_v = _observable_series(v_poly, snapshots, config.L, model.d)
        phi_v = phi_v - phi_v.mean()
        cw = _autocorrelation(phi_w, max_lag) / volume
        cv = _autocorrelation(phi_v, max_lag) / volume
        return (integrate.trapezoid(kernels * cw, lags, axis=1), integrate.trapezoid(kernels * cv, lags, axis=1),
                float(cw[-1]), float(cv[-1]))

    results = _run_replicas(one, replica_streams(config.base_seed, config.replicas))
    w_all = np.stack([r[0] for r in results])
    v_all = np.stack([r[1] for r in results])
    w_last = float(np.mean([r[2] for r in results]))
    v_last = float(np.mean([r[3] for r in results]))
    chi = float(ctx.chi)
    C = float(bundle.C[axis])
    out: Dict[str, List[Any]] = {k: [] for k in ("dhat", "stderr", "w_term", "v_term", "refused", "tail_bound")}
    for i, lam in enumerate(lambdas):
        refused = lam < 10.0 / horizon
        w_samples = w_all[:, i]
        v_samples = v_all[:, i]
        d_samples = C + 2 / chi * (w_samples - v_samples)
        tail = math.exp(-lam * horizon) * (abs(w_last) + abs(v_last)) / lam
        out["dhat"].append(float("nan") if refused else float(d_samples.mean()))
        out["stderr"].append(float("nan") if refused or len(d_samples) < 2 else float(d_samples.std(ddof=1) / math.sqrt(len(d_samples))))
        out["w_term"].append(float(w_samples.mean()))
        out["v_term"].append(float(v_samples.mean()))
        out["refused"].append(refused)
        out["tail_bound"].append(2 / chi * tail)
        if refused:
            logger.warning(f"lambda={lam} is below the resolution 10/T={10.0 / horizon:.3g}; refused")
        elif out["stderr"][-1] > 0.05 * abs(out["dhat"][-1]):
            logger.warning(f"lambda={lam}: standard error {out['stderr'][-1]:.3g} exceeds 5% of D-hat; "
                           "raise replicas or t_max")
    return GreenKuboEstimate(lambdas=[float(x) for x in lambdas], **out)
