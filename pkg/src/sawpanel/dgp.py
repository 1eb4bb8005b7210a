"""Simulation designs with known truth and the Monte Carlo harness.

Six data generating processes cover multiple regressors with distinct jump
sets, an endogenous regressor with an outside instrument, heteroscedasticity
across units and periods, autocorrelated errors, jumping time effects, and
the no-jump null.  Signal strength scales down with the cross-section via
``a_n``: slope segments alternate between ``+a_n / 3`` and ``-a_n / 3`` with
jump locations on the grid ``floor(j (T - 1) / (S + 1))``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .jumps import hausdorff
from .panel import PanelDataset
from .pipeline import PanelFit, PipelineOptions, fit_panel

A_N_MAP = {30: 7.0, 60: 5.0, 120: 4.0, 300: 3.0}

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(state: int) -> int:
    state = (state + _GOLDEN) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def replication_seed(master: int, rep: int) -> int:
    """Deterministic per-replication seed, a SplitMix-style mix of
    (master seed, replication index)."""
    return _splitmix64(_splitmix64(master & _MASK64) ^ ((rep + 1) * _GOLDEN & _MASK64))


@dataclass(frozen=True)
class DgpSpec:
    """One simulation configuration.

    ``jumps`` overrides the per-regressor jump count of the single-regressor
    designs (2..5); the defaults mirror the reported tables.  ``noise_param``
    states whether the second argument of a normal law is read as variance
    (default) or standard deviation; ``noise_scale`` multiplies every error
    draw (0 gives noise-free panels).
    """

    dgp: int
    n: int
    t: int
    seed: int
    jumps: int | None = None
    noise_param: str = "variance"
    noise_scale: float = 1.0

    def __post_init__(self):
        if self.dgp not in range(1, 7):
            raise ValueError(f"dgp must be 1..6, got {self.dgp}")
        if self.noise_param not in ("variance", "sd"):
            raise ValueError("noise_param must be variance|sd")

    @property
    def a_n(self) -> float:
        if self.n in A_N_MAP:
            return A_N_MAP[self.n]
        nearest = min(A_N_MAP, key=lambda k: (abs(k - self.n), k))
        return A_N_MAP[nearest]

    @property
    def a_n_exact(self) -> bool:
        return self.n in A_N_MAP

    @property
    def jump_counts(self) -> tuple[int, ...]:
        if self.dgp == 1:
            return (2, 3)
        if self.dgp == 6:
            return (0,)
        return (self.jumps if self.jumps is not None else 3,)

    def _std(self, second: float) -> float:
        value = math.sqrt(second) if self.noise_param == "variance" else second
        return value * self.noise_scale


@dataclass(frozen=True)
class DgpTruth:
    """Ground truth of one generated panel."""

    beta: np.ndarray
    taus: tuple[tuple[int, ...], ...]
    theta: np.ndarray
    alpha: np.ndarray
    mu: float
    a_n: float
    a_n_exact: bool


def true_beta(s: int, t: int, a_n: float) -> tuple[np.ndarray, list[int]]:
    """Alternating step path with ``s`` jumps on the floor grid.

    Segment ``j`` (1-based) takes the value ``(a_n / 3) * (-1)**j``; jump
    locations are ``floor(j (t - 1) / (s + 1))`` for ``j = 1..s``.
    """
    taus = [math.floor(j * (t - 1) / (s + 1)) for j in range(1, s + 1)]
    path = np.empty(t)
    bounds = [0, *taus, t]
    for j in range(s + 1):
        path[bounds[j] : bounds[j + 1]] = (a_n / 3.0) * (-1.0) ** (j + 1)
    return path, taus


def _ar1(rng: np.random.Generator, rho: np.ndarray, sd: float, t: int) -> np.ndarray:
    """Unit-specific AR(1) errors started from the stationary distribution."""
    n = rho.shape[0]
    e = np.empty((n, t))
    denom = np.sqrt(np.clip(1.0 - rho**2, 1e-12, None))
    e[:, 0] = rng.standard_normal(n) * sd / denom
    for s in range(1, t):
        e[:, s] = rho * e[:, s - 1] + rng.standard_normal(n) * sd
    return e


def generate(spec: DgpSpec) -> tuple[PanelDataset, DgpTruth]:
    """Draw one panel; deterministic given the spec (seed included)."""
    rng = np.random.default_rng(spec.seed)
    n, t, a_n = spec.n, spec.t, spec.a_n
    counts = spec.jump_counts
    p = len(counts)
    beta = np.empty((t, p))
    taus = []
    for idx, s in enumerate(counts):
        if spec.dgp == 6:
            beta[:, idx] = 1.0
            taus.append(())
        else:
            path, tau = true_beta(s, t, a_n)
            beta[:, idx] = path
            taus.append(tuple(tau))

    alpha = rng.standard_normal(n)
    theta = np.zeros(t)
    z = None

    if spec.dgp == 1:
        x = 0.5 * alpha[:, None, None] + rng.standard_normal((n, t, 2))
        err = rng.standard_normal((n, t)) * spec._std(2.0)
    elif spec.dgp == 2:
        zcol = 0.5 * alpha[:, None] + rng.standard_normal((n, t))
        e = rng.standard_normal((n, t)) * spec._std(0.5)
        x = (3.0 * zcol + e)[:, :, None]
        z = zcol[:, :, None]
        err = e
    elif spec.dgp in (3, 5):
        x = (0.5 * alpha[:, None] + rng.standard_normal((n, t)))[:, :, None]
        e = rng.standard_normal((n, t)) * spec._std(0.5)
        hi = 3.0 if spec.dgp == 3 else 2.0
        sig2 = rng.uniform(1.0, hi, size=(n, t))
        err = np.sqrt(sig2) * e
        if spec.dgp == 5:
            s_theta = t // 10
            theta, _ = true_beta(s_theta, t, 7.0)  # signal fixed at 7, not n-dependent
            theta = np.asarray(theta)
    elif spec.dgp in (4, 6):
        x = (0.5 * alpha[:, None] + rng.standard_normal((n, t)))[:, :, None]
        rho = rng.uniform(0.25, 0.75, size=n)
        sd = spec._std(3.0 if spec.dgp == 4 else 4.0)
        err = _ar1(rng, rho, sd, t)
    else:  # pragma: no cover
        raise ValueError(spec.dgp)

    y = alpha[:, None] + theta[None, :] + np.einsum("itp,tp->it", x, beta) + err
    panel = PanelDataset(y=y, x=x, z=z)
    truth = DgpTruth(
        beta=beta,
        taus=tuple(taus),
        theta=theta,
        alpha=alpha,
        mu=0.0,
        a_n=a_n,
        a_n_exact=spec.a_n_exact,
    )
    return panel, truth


def default_options(spec: DgpSpec) -> PipelineOptions:
    """Pipeline defaults per design: two-stage instruments where endogenous."""
    if spec.dgp == 2:
        return PipelineOptions(instruments="two_stage")
    return PipelineOptions()


@dataclass(frozen=True)
class McRecord:
    """Per-replication outcome; failures carry the error text instead."""

    rep: int
    ok: bool
    counts: tuple[int, ...] = ()
    hd_over_t: tuple[float, ...] = ()
    beta_err: tuple[float, ...] = ()
    error: str = ""


@dataclass(frozen=True)
class McResult:
    """Replication records plus mean/sd aggregates per statistic."""

    spec: DgpSpec
    reps: int
    records: tuple[McRecord, ...]
    options: PipelineOptions

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.records if not r.ok)

    def _stack(self, attr: str) -> np.ndarray:
        rows = [getattr(r, attr) for r in self.records if r.ok]
        return np.asarray(rows, dtype=float)

    def aggregates(self) -> dict:
        """Mean and sd per regressor for counts, scaled Hausdorff distance
        and scaled squared coefficient-path error."""
        out = {}
        for attr, name in (
            ("counts", "S"),
            ("hd_over_t", "HD_T"),
            ("beta_err", "beta_err_T"),
        ):
            data = self._stack(attr)
            for p in range(data.shape[1] if data.size else 0):
                col = data[:, p]
                sd = float(col.std(ddof=1)) if col.size > 1 else 0.0
                out[f"{name}{p + 1}"] = (float(col.mean()), sd)
        return out

    def table_row(self) -> dict:
        """Flat row for the metrics table, statistics formatted 'mean (sd)'."""
        row = {
            "dgp": self.spec.dgp,
            "T": self.spec.t,
            "n": self.spec.n,
            "reps": self.reps,
            "failed": self.n_failed,
        }
        for key, (mean, sd) in self.aggregates().items():
            row[key] = f"{mean:.4f} ({sd:.4f})"
        return row


def _metrics(fit: PanelFit, truth: DgpTruth, t: int) -> tuple[tuple, tuple, tuple]:
    counts = tuple(int(v) for v in fit.report.counts)
    hd = tuple(
        hausdorff(fit.report.locations[p], truth.taus[p], horizon=t) / t
        for p in range(len(truth.taus))
    )
    path = fit.post.beta_path()
    err = tuple(float(np.mean((path[:, p] - truth.beta[:, p]) ** 2)) for p in range(path.shape[1]))
    return counts, hd, err


def _run_one(args) -> McRecord:
    spec, rep, options = args
    rep_spec = replace(spec, seed=replication_seed(spec.seed, rep))
    try:
        panel, truth = generate(rep_spec)
        fit = fit_panel(panel, options)
        counts, hd, err = _metrics(fit, truth, spec.t)
        return McRecord(rep=rep, ok=True, counts=counts, hd_over_t=hd, beta_err=err)
    except Exception as exc:  # noqa: BLE001 - failures become counted records
        return McRecord(rep=rep, ok=False, error=f"{type(exc).__name__}: {exc}")


def run_monte_carlo(
    spec: DgpSpec,
    reps: int,
    options: PipelineOptions | None = None,
    threads: int = 1,
) -> McResult:
    """Run the full pipeline over independent replications.

    Replication ``r`` uses the derived seed ``replication_seed(seed, r)``,
    so results are identical for any degree of parallelism; failed
    replications are recorded and excluded from the aggregates.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    opts = options if options is not None else default_options(spec)
    tasks = [(spec, rep, opts) for rep in range(reps)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(_run_one, tasks, chunksize=max(1, reps // (4 * threads))))
    else:
        records = [_run_one(task) for task in tasks]
    records.sort(key=lambda r: r.rep)
    return McResult(spec=spec, reps=reps, records=tuple(records), options=opts)
