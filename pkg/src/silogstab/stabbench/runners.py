"""Experiment runners: training traces, gradient-scale sweeps and the NaN table."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional, Sequence, Union

import numpy as np
from scipy import stats

from .. import headnet, losskit, optimkit, simgen
from ..losskit import EmptyInputError, LossConfig, to_f32_epsilon
from ..optimkit import LrSchedule
from .monitor import scan
from .report import SimReport, TableReport, TraceRecord, build_id

__all__ = [
    "ConfigError",
    "SqrtDivergenceConfig",
    "SweepConfig",
    "VarianceNanConfig",
    "run_sqrt_divergence",
    "run_sweep",
    "run_gradscale_sweep",
    "run_eps_sweep",
    "run_variance_nan_table",
    "binomial_nan_expectation",
    "DEFAULT_SIGMA_GRID",
    "DEFAULT_EPS_GRID",
    "DEFAULT_VALID_RATES",
]

DEFAULT_SIGMA_GRID = (0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0)
DEFAULT_EPS_GRID = (1e-24, 1e-12, 1e-6, 1e-3, 1.0)
DEFAULT_VALID_RATES = tuple(round(0.0005 + 0.0001 * i, 4) for i in range(10))

EpsLiteral = Union[float, str]


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def _manifest(runner: str, cfg) -> dict:
    return {
        "runner": runner,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "generator": simgen.GENERATOR_ID,
        "build": build_id(),
    }


# -- training trace -----------------------------------------------------------


@dataclass(frozen=True)
class SqrtDivergenceConfig:
    """One training run of the sigmoid head on a fixed synthetic batch.

    ``padding="valid"`` gives one logit per 3x3 map (10 pixels per batch);
    with ``"same"`` the 90-pixel batch never reaches an exactly-zero loss in
    binary32, so the late-phase sqrt NaN cannot appear.
    """

    loss: LossConfig = field(default_factory=LossConfig)
    schedule: LrSchedule = field(default_factory=lambda: LrSchedule.constant(1e-3))
    seed: int = 0
    iterations: int = 1000
    batch: int = 10
    n_h: int = 3
    n_w: int = 3
    n_in: int = 128
    k: int = 3
    sigma_w: float = 0.1
    dataset: str = "KITTI"
    M: float = 80.0
    padding: str = "valid"
    halt_on_nan: bool = False
    resample_per_iter: bool = False

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if min(self.batch, self.n_h, self.n_w, self.n_in, self.k) < 1:
            raise ConfigError("batch, map size, channels and kernel must be >= 1")
        if self.sigma_w < 0:
            raise ConfigError("sigma_w must be >= 0")
        if self.dataset not in simgen.DATASETS:
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        if self.padding not in ("same", "valid"):
            raise ConfigError(f"unknown padding {self.padding!r}")
        if self.padding == "valid" and min(self.n_h, self.n_w) < self.k:
            raise ConfigError("valid padding needs maps at least as large as the kernel")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["loss"] = self.loss.to_dict()
        d["schedule"] = self.schedule.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SqrtDivergenceConfig":
        d = dict(d)
        if "loss" in d:
            d["loss"] = LossConfig.from_dict(d["loss"])
        if "schedule" in d:
            d["schedule"] = LrSchedule.from_dict(d["schedule"])
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def _draw_batch(cfg, rng, out_h, out_w):
    x = simgen.gen_features((cfg.batch, cfg.n_h, cfg.n_w, cfg.n_in), rng)
    gt, mask = simgen.gen_ground_truth(simgen.dataset_stats(cfg.dataset), (cfg.batch, out_h, out_w), rng)
    return x, gt, mask


def run_sqrt_divergence(cfg: SqrtDivergenceConfig) -> SimReport:
    """Train the head with Adam and record loss, gradient variance and NaN events.

    NaN/inf is checked in the loss and gradient tensors before each update.
    With ``halt_on_nan`` the run stops at the first event, without stepping.
    """
    rng = simgen.RngStream(cfg.seed, 0).generator()
    head = headnet.init_weights(
        headnet.InitScheme("normal", cfg.sigma_w), cfg.n_in, cfg.k, cfg.k, rng, cfg.M, cfg.padding
    )
    out_h, out_w = head.output_shape(cfg.n_h, cfg.n_w)
    x, gt, mask = _draw_batch(cfg, rng, out_h, out_w)

    params = {"W": head.W, "b": head.b}
    state = optimkit.AdamState(lr=cfg.schedule.lr)
    report = SimReport(manifest=_manifest("sim-sqrt", cfg))
    report.manifest["loss_style"] = cfg.loss.style
    skipped = 0

    for t in range(cfg.iterations):
        if cfg.resample_per_iter and t > 0:
            x, gt, mask = _draw_batch(cfg, rng, out_h, out_w)
        state.lr = optimkit.lr_at(cfg.schedule, t)
        h = headnet.SigmoidHead(params["W"], params["b"], cfg.M, cfg.padding)
        try:
            res = headnet.loss_and_grads(h, x, gt, mask, cfg.loss)
        except EmptyInputError:
            skipped += 1
            continue
        with np.errstate(invalid="ignore", over="ignore"):
            grad_var = float(np.var(res.grad_W.astype(np.float64)))
        event = scan(t, {"loss": res.loss, "grad_z": res.grad_z, "grad_W": res.grad_W, "grad_b": res.grad_b})
        report.trace.append(TraceRecord(t, state.lr, float(res.loss), grad_var, event is not None))
        if event is not None:
            report.nan_events.append(event)
            if cfg.halt_on_nan:
                break
        params = optimkit.adam_step(state, params, {"W": res.grad_W, "b": res.grad_b})

    report.finalize()
    report.summary["skipped_batches"] = skipped
    report.summary["first_below_1e-7"] = report.first_below(1e-7)
    return report


# -- gradient-scale sweeps ----------------------------------------------------


def _eps_label(e: EpsLiteral) -> str:
    return e if isinstance(e, str) else repr(float(e))


@dataclass(frozen=True)
class SweepConfig:
    """Grid of (epsilon, sigma_w) points, each evaluated over ``replicas`` draws.

    ``paired=True`` reuses one data draw and one unit-variance kernel per
    replica across the whole grid (common random numbers), so differences
    between grid points are not swamped by sampling noise.
    """

    dataset: str = "KITTI"
    sigma_grid: tuple = (0.01, 0.1, 0.3, 0.5, 1.0, 2.0)
    eps_grid: tuple = (0.0,)
    replicas: int = 100
    seed: int = 0
    batch: int = 10
    n_h: int = 100
    n_w: int = 100
    n_in: int = 128
    k: int = 3
    lam: float = losskit.DEFAULT_LAMBDA
    style: str = "mean"
    estimator: str = "biased"
    sqrt_wrap: bool = True
    M: Optional[float] = None
    padding: str = "same"
    paired: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if not self.sigma_grid or not self.eps_grid:
            raise ConfigError("sigma_grid and eps_grid must be non-empty")
        if any(s < 0 for s in self.sigma_grid):
            raise ConfigError("sigma values must be >= 0")
        if self.dataset not in simgen.DATASETS:
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        try:
            for e in self.eps_grid:
                if not to_f32_epsilon(e) >= 0:
                    raise ConfigError(f"epsilon must be >= 0, got {e!r}")
            LossConfig(self.lam, self.style, self.estimator, self.sqrt_wrap)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        object.__setattr__(self, "sigma_grid", tuple(float(s) for s in self.sigma_grid))
        object.__setattr__(self, "eps_grid", tuple(self.eps_grid))
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def max_depth(self) -> float:
        if self.M is not None:
            return self.M
        return 10.0 if self.dataset == "NYU-Depth V2" else 80.0

    def loss_config(self, eps: EpsLiteral) -> LossConfig:
        return LossConfig(self.lam, self.style, self.estimator, self.sqrt_wrap, to_f32_epsilon(eps))

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["sigma_grid"] = list(self.sigma_grid)
        d["eps_grid"] = list(self.eps_grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("sigma_grid", "eps_grid"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def _replica(cfg: SweepConfig, r: int) -> list[tuple[float, bool]]:
    """(gradient variance, NaN occurred) for every grid point, eps-major."""
    rng = simgen.RngStream(cfg.seed, r).generator()
    st = simgen.dataset_stats(cfg.dataset)
    M = cfg.max_depth
    probe = headnet.SigmoidHead(np.zeros((cfg.k, cfg.k, cfg.n_in, 1), np.float32), 0.0, M, cfg.padding)
    out_h, out_w = probe.output_shape(cfg.n_h, cfg.n_w)

    def draw():
        x = simgen.gen_features((cfg.batch, cfg.n_h, cfg.n_w, cfg.n_in), rng)
        gt, mask = simgen.gen_ground_truth(st, (cfg.batch, out_h, out_w), rng)
        w0 = rng.standard_normal((cfg.k, cfg.k, cfg.n_in, 1))
        return x, gt, mask, w0

    shared = draw() if cfg.paired else None
    out = []
    for eps in cfg.eps_grid:
        loss_cfg = cfg.loss_config(eps)
        for sigma in cfg.sigma_grid:
            x, gt, mask, w0 = shared if cfg.paired else draw()
            head = headnet.SigmoidHead((sigma * w0).astype(np.float32), 0.0, M, cfg.padding)
            try:
                res = headnet.loss_and_grads(head, x, gt, mask, loss_cfg)
            except EmptyInputError:
                out.append((math.nan, True))
                continue
            with np.errstate(invalid="ignore", over="ignore"):
                gv = float(np.var(res.grad_W.astype(np.float64)))
            bad = not (np.isfinite(res.loss) and np.all(np.isfinite(res.grad_W)) and np.isfinite(res.grad_b))
            out.append((gv, bad))
    return out


def _replica_star(args):
    return _replica(*args)


SWEEP_COLUMNS = (
    "dataset",
    "epsilon",
    "epsilon_f32",
    "sigma_w",
    "replicas",
    "mean_grad_var",
    "std_grad_var",
    "nan_count",
    "nan_fraction",
)


def run_sweep(cfg: SweepConfig, runner: str = "sim-sweep") -> TableReport:
    """Mean gradient variance and NaN fraction at every (epsilon, sigma_w) grid point.

    The mean is over replicas whose loss and gradients stayed finite.
    Replicas may run in parallel; results are aggregated in replica order.
    """
    jobs = [(cfg, r) for r in range(cfg.replicas)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            per_rep = list(ex.map(_replica_star, jobs))
    else:
        per_rep = [_replica(*j) for j in jobs]

    gv = np.array([[p[0] for p in rep] for rep in per_rep])
    bad = np.array([[p[1] for p in rep] for rep in per_rep])
    report = TableReport(manifest=_manifest(runner, cfg), columns=SWEEP_COLUMNS)
    report.manifest["max_depth"] = cfg.max_depth
    col = 0
    for eps in cfg.eps_grid:
        for sigma in cfg.sigma_grid:
            ok = ~bad[:, col]
            vals = gv[ok, col]
            mean = float(vals.mean()) if vals.size else math.nan
            std = float(vals.std()) if vals.size else math.nan
            nan_count = int(bad[:, col].sum())
            report.rows.append(
                (cfg.dataset, _eps_label(eps), float(to_f32_epsilon(eps)), sigma, cfg.replicas,
                 mean, std, nan_count, nan_count / cfg.replicas)
            )
            col += 1
    return report


def run_gradscale_sweep(
    dataset: str = "KITTI",
    sigma_grid: Sequence[float] = DEFAULT_SIGMA_GRID,
    eps: EpsLiteral = 0.0,
    replicas: int = 100,
    **kw,
) -> TableReport:
    cfg = SweepConfig(dataset=dataset, sigma_grid=tuple(sigma_grid), eps_grid=(eps,), replicas=replicas, **kw)
    return run_sweep(cfg, runner="sim-gradscale")


def run_eps_sweep(
    dataset: str = "KITTI",
    eps_grid: Sequence[EpsLiteral] = DEFAULT_EPS_GRID,
    sigma_grid: Sequence[float] = DEFAULT_SIGMA_GRID,
    replicas: int = 100,
    **kw,
) -> TableReport:
    cfg = SweepConfig(dataset=dataset, sigma_grid=tuple(sigma_grid), eps_grid=tuple(eps_grid), replicas=replicas, **kw)
    return run_sweep(cfg, runner="sim-eps")


# -- variance NaN table -------------------------------------------------------


@dataclass(frozen=True)
class VarianceNanConfig:
    valid_rates: tuple = DEFAULT_VALID_RATES
    trials: int = 10_000
    n_h: int = 100
    n_w: int = 100
    dataset: str = "KITTI"
    lam: float = losskit.DEFAULT_LAMBDA
    skip_guard: bool = False
    seed: int = 0
    chunk: int = 500

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if any(not 0.0 <= r <= 1.0 for r in self.valid_rates):
            raise ConfigError("valid rates must lie in [0, 1]")
        if self.dataset not in simgen.DATASETS:
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        object.__setattr__(self, "valid_rates", tuple(float(r) for r in self.valid_rates))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["valid_rates"] = list(self.valid_rates)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "VarianceNanConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "valid_rates" in d:
            d["valid_rates"] = tuple(d["valid_rates"])
        return cls(**d)


def binomial_nan_expectation(n_pixels: int, rate: float, trials: int) -> dict:
    """Expected NaN counts and their binomial standard deviations.

    Unbiased is NaN iff n <= 1, biased iff n == 0, with n ~ Binomial(n_pixels, rate).
    """
    p_unb = float(stats.binom.cdf(1, n_pixels, rate))
    p_bia = float(stats.binom.pmf(0, n_pixels, rate))
    return {
        "expected_unbiased": trials * p_unb,
        "expected_biased": trials * p_bia,
        "sd_unbiased": math.sqrt(trials * p_unb * (1 - p_unb)),
        "sd_biased": math.sqrt(trials * p_bia * (1 - p_bia)),
    }


NAN_TABLE_COLUMNS = (
    "valid_rate",
    "trials",
    "nan_unbiased",
    "nan_biased",
    "expected_unbiased",
    "sd_unbiased",
    "expected_biased",
    "sd_biased",
    "n0_trials",
    "n1_trials",
    "skipped",
)


def run_variance_nan_table(cfg: VarianceNanConfig) -> TableReport:
    """Count NaN losses of the var-style loss under each estimator as sparsity varies.

    One prediction/ground-truth pair is drawn for the run; every trial
    masks it with a fresh Bernoulli(valid_rate) grid. With ``skip_guard``
    off, n == 0 trials count as NaN for both estimators; with it on they
    are skipped and counted in ``skipped``.
    """
    base = simgen.RngStream(cfg.seed, 0).generator()
    shape = (cfg.n_h, cfg.n_w)
    gt, gt_valid = simgen.gen_ground_truth(simgen.dataset_stats(cfg.dataset), shape, base)
    pred = (np.abs(gt) * np.exp(0.1 * base.standard_normal(shape))).astype(np.float32)
    support = int(gt_valid.sum())

    report = TableReport(manifest=_manifest("sim-variance-nan", cfg), columns=NAN_TABLE_COLUMNS)
    report.manifest["support_pixels"] = support
    report.extras = {"n": {}, "nan_unbiased": {}, "nan_biased": {}}
    biased = LossConfig(cfg.lam, "var", "biased")
    unbiased = LossConfig(cfg.lam, "var", "unbiased")

    for ri, rate in enumerate(cfg.valid_rates):
        rng = simgen.RngStream(cfg.seed, ri + 1).generator()
        ns = np.empty(cfg.trials, dtype=np.int64)
        nan_u = np.zeros(cfg.trials, dtype=bool)
        nan_b = np.zeros(cfg.trials, dtype=bool)
        skipped = 0
        done = 0
        while done < cfg.trials:
            m = min(cfg.chunk, cfg.trials - done)
            masks = simgen.gen_sparse_mask((m,) + shape, rate, rng).grid & gt_valid
            for j in range(m):
                t = done + j
                d = losskit.log_diff(pred, gt, masks[j])
                ns[t] = d.n
                if d.n == 0:
                    if cfg.skip_guard:
                        skipped += 1
                    else:
                        nan_u[t] = nan_b[t] = True
                    continue
                nan_u[t] = losskit.silog(d, unbiased).is_nan
                nan_b[t] = losskit.silog(d, biased).is_nan
            done += m
        exp = binomial_nan_expectation(support, rate, cfg.trials)
        report.rows.append(
            (rate, cfg.trials, int(nan_u.sum()), int(nan_b.sum()),
             exp["expected_unbiased"], exp["sd_unbiased"], exp["expected_biased"], exp["sd_biased"],
             int((ns == 0).sum()), int((ns == 1).sum()), skipped)
        )
        report.extras["n"][rate] = ns
        report.extras["nan_unbiased"][rate] = nan_u
        report.extras["nan_biased"][rate] = nan_b
    return report


def with_overrides(cfg, **kw):
    """``dataclasses.replace`` that ignores ``None`` values."""
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(cfg, **kw) if kw else cfg
