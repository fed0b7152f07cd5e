"""Reproduction harness: Normal cases, the divergence phase plane, the
Levy-driven volatility comparison and the population-count comparison.

Every random stream is a child of ``StudyConfig.seed`` (see
:mod:`hscore.rng`), keyed by purpose, case, replication and model, so a
study gives the same numbers whether replications run serially or in a
process pool (``HSCORE_THREADS`` workers).
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .datasets import kangaroo_data_path, read_dataset
from .models import get_model, simulate_dataset
from .rng import child_rng, child_seed
from .scoring import divergence_boundaries, fisher_divergence_gap_normal, kl_gap_normal
from .smc import SmcConfig, run_smc
from .smc2 import Smc2Config, run_smc2
from .trace import PrequentialTrace

NORMAL_CASES = {1: (1.0, 1.0), 2: (0.0, 5.0), 3: (4.0, 3.0), 4: (0.0, 1.0)}
SV_TRUE_THETA = (0.01, 0.5, 0.0625, 0.0, 0.0)

# stream purposes for child seeds
_DATA, _PERM, _RUN = 0, 1, 2

SCALES = {
    "normal": {"paper": dict(T=1000, replications=5, n_theta=1024)},
    "sv": {
        "paper": dict(T=1000, replications=15, n_theta=1024, n_x=128, kde_draws=1024, kde_bandwidth=0.1),
        "desk": dict(T=200, replications=3, n_theta=256, n_x=64, kde_draws=1024, kde_bandwidth=0.1),
    },
    "kangaroo": {
        "paper": dict(replications=5, n_theta=16384, n_x=32, delta_t=0.001),
        "desk": dict(replications=3, n_theta=2048, n_x=32, delta_t=0.01),
    },
}


@dataclass(frozen=True)
class StudyConfig:
    """Settings shared by the studies; ``None`` means the scale default."""

    seed: int = 0
    replications: Optional[int] = None
    T: Optional[int] = None
    n_theta: Optional[int] = None
    n_x: Optional[int] = None
    n_x_max: int = 1024
    kde_draws: Optional[int] = None
    kde_bandwidth: Optional[float] = None
    delta_t: Optional[float] = None
    ess_threshold_ratio: float = 0.5
    mh_steps: int = 3
    mixture_components: int = 5
    permutation: str = "random"
    slope_window: Optional[tuple] = None

    def __post_init__(self):
        if self.permutation not in ("identity", "random"):
            raise ValueError("permutation must be 'identity' or 'random'")

    def resolved(self, study: str, scale: str) -> "StudyConfig":
        defaults = SCALES[study][scale]
        return replace(self, **{k: v for k, v in defaults.items() if getattr(self, k) is None})


@dataclass
class StudyResult:
    """Per-replication traces keyed by ``(replication, model)`` plus derived
    factors and a JSON-ready summary."""

    study: str
    traces: dict = field(default_factory=dict)
    factors: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    @property
    def replications(self):
        return sorted({r for r, _ in self.traces})

    def h_factor(self, rep, m_num, m_den):
        """``H(m_num) - H(m_den)`` cumulated over time."""
        return self.traces[(rep, m_num)].h_cum - self.traces[(rep, m_den)].h_cum

    def log_bf(self, rep, m_num, m_den):
        """Log-Bayes factor of ``m_num`` against ``m_den``."""
        return self.traces[(rep, m_num)].log_evidence_cum - self.traces[(rep, m_den)].log_evidence_cum


def slope_estimate(values, window=None, t=None) -> float:
    """Least-squares slope of ``values`` against ``t`` over ``window``.

    ``t`` defaults to ``1..len(values)``; ``window = (lo, hi)`` selects
    ``lo <= t <= hi`` and defaults to the last half of the series.
    """
    v = np.asarray(values, dtype=float)
    t = np.arange(1.0, v.size + 1.0) if t is None else np.asarray(t, dtype=float)
    if window is None:
        window = (t[0] + 0.5 * (t[-1] - t[0]), t[-1])
    lo, hi = window
    sel = (t >= lo) & (t <= hi) & np.isfinite(v)
    if sel.sum() < 3:
        raise ValueError(f"window {window} holds fewer than 3 points")
    return float(np.polyfit(t[sel], v[sel], 1)[0])


def _workers():
    try:
        return max(1, int(os.environ.get("HSCORE_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, jobs):
    n = _workers()
    if n == 1 or len(jobs) == 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, jobs))


def _smc_job(job):
    model_id, options, data, perm, cfg = job
    return run_smc(get_model(model_id, **options), data, SmcConfig(**cfg), permutation=perm)


def _smc2_job(job):
    model_id, options, data, times, cfg = job
    return run_smc2(get_model(model_id, **options), data, Smc2Config(**cfg), times=times)


def normal_case_data(case: int, T: int, seed: int):
    mu, s2 = NORMAL_CASES[case]
    return child_rng(seed, _DATA, case).normal(mu, math.sqrt(s2), size=T)


def run_normal_cases(case: int, config: StudyConfig = StudyConfig(), data=None, sigma0_sq=10.0) -> StudyResult:
    """Both Normal models on data from case ``case`` (1 to 4).

    Each replication uses its own random ordering of the same data (or the
    identity) and its own sampler seed. ``data`` overrides the generated
    series.
    """
    if case not in NORMAL_CASES:
        raise ValueError("case must be 1, 2, 3 or 4")
    cfg = config.resolved("normal", "paper")
    y = normal_case_data(case, cfg.T, cfg.seed) if data is None else np.asarray(data, dtype=float).ravel()
    jobs = []
    keys = []
    for r in range(cfg.replications):
        perm = child_rng(cfg.seed, _PERM, case, r).permutation(y.size) if cfg.permutation == "random" else None
        for m, (model_id, opts) in enumerate((("normal_m1", {"sigma0_sq": sigma0_sq}), ("normal_m2", {}))):
            smc = dict(
                n_theta=cfg.n_theta,
                ess_threshold_ratio=cfg.ess_threshold_ratio,
                mh_steps_per_temper=cfg.mh_steps,
                mixture_components=cfg.mixture_components,
                seed=child_seed(cfg.seed, _RUN, case, r, m),
            )
            jobs.append((model_id, opts, y, perm, smc))
            keys.append((r, model_id))
    result = StudyResult(f"normal_case{case}", dict(zip(keys, _map(_smc_job, jobs))))
    mu, s2 = NORMAL_CASES[case]
    _summarize_pair(result, "normal_m2", "normal_m1", cfg.slope_window)
    result.summary.update(
        case=case,
        mu_star=mu,
        sigma2_star=s2,
        theory_h_slope=fisher_divergence_gap_normal(mu, s2),
        theory_log_bf_slope=kl_gap_normal(mu, s2),
        T=int(y.size),
        n_theta=cfg.n_theta,
    )
    return result


def _summarize_pair(result, m2, m1, window):
    """H-factor ``H(m2) - H(m1)`` and log-BF of ``m1`` against ``m2``."""
    h_slopes, bf_slopes = [], []
    for r in result.replications:
        hf = result.h_factor(r, m2, m1)
        bf = result.log_bf(r, m1, m2)
        t = result.traces[(r, m1)].t
        result.factors[r] = {"t": t, "h_factor": hf, "log_bf": bf}
        h_slopes.append(slope_estimate(hf, window))
        bf_slopes.append(slope_estimate(bf, window))
    result.summary.update(
        h_factor_slopes=h_slopes,
        log_bf_slopes=bf_slopes,
        mean_h_factor_slope=float(np.mean(h_slopes)),
        mean_log_bf_slope=float(np.mean(bf_slopes)),
        final_h_factor=[float(result.factors[r]["h_factor"][-1]) for r in result.replications],
        final_log_bf=[float(result.factors[r]["log_bf"][-1]) for r in result.replications],
    )


@dataclass
class PhasePlane:
    mu_grid: np.ndarray
    sigma2_grid: np.ndarray
    h_gap: np.ndarray
    kl_gap: np.ndarray
    b_h: np.ndarray
    b_kl: np.ndarray

    @property
    def sign_h(self):
        return np.sign(self.h_gap)

    @property
    def sign_kl(self):
        return np.sign(self.kl_gap)

    @property
    def disagree(self):
        return self.sign_h * self.sign_kl < 0

    def classify(self, mu, sigma2):
        """``(sign of D_H gap, sign of KL gap)`` at one point; positive means
        the criterion favours M1."""
        return int(np.sign(fisher_divergence_gap_normal(mu, sigma2))), int(np.sign(kl_gap_normal(mu, sigma2)))


def run_phase_plane(mu_grid=None, sigma2_grid=None) -> PhasePlane:
    """Signs of the two divergence gaps on a ``(sigma2, mu)`` grid, with the
    boundary curves ``mu = b(sigma2)`` where each gap changes sign."""
    mu_grid = np.linspace(0.0, 5.0, 201) if mu_grid is None else np.asarray(mu_grid, dtype=float)
    sigma2_grid = np.linspace(0.05, 6.0, 239) if sigma2_grid is None else np.asarray(sigma2_grid, dtype=float)
    h = np.array([[fisher_divergence_gap_normal(m, s) for m in mu_grid] for s in sigma2_grid])
    k = np.array([[kl_gap_normal(m, s) for m in mu_grid] for s in sigma2_grid])
    bounds = np.array([divergence_boundaries(s) for s in sigma2_grid])
    return PhasePlane(mu_grid, sigma2_grid, h, k, bounds[:, 0], bounds[:, 1])


def sv_data(T: int, seed: int):
    spec = get_model("levy_sv_m1")
    return simulate_dataset(spec, np.array(SV_TRUE_THETA), T, child_rng(seed, _DATA, 101))


def _smc2_cfg(cfg, seed_keys, **extra):
    out = dict(
        n_theta=cfg.n_theta,
        n_x_init=cfg.n_x,
        n_x_max=max(cfg.n_x_max, cfg.n_x),
        ess_threshold_ratio=cfg.ess_threshold_ratio,
        mh_steps=cfg.mh_steps,
        mixture_components=cfg.mixture_components,
        seed=child_seed(cfg.seed, _RUN, *seed_keys),
    )
    out.update(extra)
    return out


def run_sv_study(config: StudyConfig = StudyConfig(), scale: str = "desk", data=None) -> StudyResult:
    """Single- against two-factor volatility model on data simulated from
    the single-factor model; H-scores use kernel density estimates."""
    cfg = config.resolved("sv", scale)
    y = sv_data(cfg.T, cfg.seed) if data is None else np.asarray(data, dtype=float).reshape(-1, 1)
    jobs, keys = [], []
    for r in range(cfg.replications):
        for m, model_id in enumerate(("levy_sv_m1", "levy_sv_m2")):
            extra = dict(hscore_mode="kde", kde_draws=cfg.kde_draws, kde_bandwidth=cfg.kde_bandwidth)
            jobs.append((model_id, {}, y, None, _smc2_cfg(cfg, (101, r, m), **extra)))
            keys.append((r, model_id))
    result = StudyResult("levy_sv", dict(zip(keys, _map(_smc2_job, jobs))))
    _summarize_pair(result, "levy_sv_m2", "levy_sv_m1", cfg.slope_window)
    finals = result.summary["final_h_factor"]
    result.summary.update(
        scale=scale,
        T=int(y.shape[0]),
        n_theta=cfg.n_theta,
        mean_final_h_factor=float(np.mean(finals)),
        mean_final_log_bf=float(np.mean(result.summary["final_log_bf"])),
        kde_unreliable_rows={f"{r}/{m}": tr.flags.count("kde_unreliable") for (r, m), tr in result.traces.items()},
    )
    return result


KANGAROO_MODELS = (
    ("kangaroo_m1", "kangaroo_m1", {}),
    ("kangaroo_m2", "kangaroo_m2", {}),
    ("kangaroo_m3", "kangaroo_m3", {}),
    ("kangaroo_m2_wide", "kangaroo_m2", {"r_range": 100.0}),
)


def run_kangaroo_study(config: StudyConfig = StudyConfig(), scale: str = "desk", data_path=None) -> StudyResult:
    """The three population models with the discrete H-score, plus M2 with
    the growth-rate prior widened from Unif(-10, 10) to Unif(-100, 100)."""
    cfg = config.resolved("kangaroo", scale)
    path = kangaroo_data_path() if data_path is None else Path(data_path)
    ds = read_dataset(path)
    jobs, keys = [], []
    for r in range(cfg.replications):
        for m, (label, model_id, opts) in enumerate(KANGAROO_MODELS):
            opts = dict(opts)
            if model_id == "kangaroo_m1":
                opts["delta_t"] = cfg.delta_t
            jobs.append((model_id, opts, ds.y, ds.t, _smc2_cfg(cfg, (202, r, m))))
            keys.append((r, label))
    result = StudyResult("kangaroo", dict(zip(keys, _map(_smc2_job, jobs))))
    labels = [k[0] for k in KANGAROO_MODELS]
    reps = result.replications
    h = {lab: np.array([result.traces[(r, lab)].h_cum[-1] for r in reps]) for lab in labels}
    le = {lab: np.array([result.traces[(r, lab)].log_evidence_cum[-1] for r in reps]) for lab in labels}
    ranking = sorted(("kangaroo_m1", "kangaroo_m2", "kangaroo_m3"), key=lambda lab: h[lab].mean())
    result.summary.update(
        scale=scale,
        data_path=str(path),
        n_theta=cfg.n_theta,
        final_h={lab: v.tolist() for lab, v in h.items()},
        final_log_evidence={lab: v.tolist() for lab, v in le.items()},
        h_ranking=ranking,
        widening_log_evidence_shift=float(le["kangaroo_m2_wide"].mean() - le["kangaroo_m2"].mean()),
        widening_h_shift=float(h["kangaroo_m2_wide"].mean() - h["kangaroo_m2"].mean()),
        widening_h_pooled_se=pooled_se(h["kangaroo_m2_wide"], h["kangaroo_m2"]),
    )
    return result


def pooled_se(a, b) -> float:
    """Standard error of ``mean(a) - mean(b)`` for independent samples."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(math.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size))


def write_study_csv(result: StudyResult, path, header=()) -> Path:
    """One row per ``(replication, model, t)`` with the cumulative scores."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["study", "replication", "model", "t", "log_evidence_cum", "h_cum"])
        for (rep, model), tr in sorted(result.traces.items()):
            for t, le, hc in zip(tr.t, tr.log_evidence_cum, tr.h_cum):
                w.writerow([result.study, rep, model, repr(float(t)), repr(float(le)), repr(float(hc))])
    return path


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        return None if not math.isfinite(float(v)) else float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def write_summary_json(result: StudyResult, path, extra=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"study": result.study, "version": __version__, **_jsonable(result.summary)}
    if extra:
        payload.update(_jsonable(extra))
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path
