"""Monte Carlo harness: run experiments, aggregate, checkpoint, resume.

Every (DGP, replication) task derives its own random stream from the
master seed by counter-style key derivation, so results are bit-identical
across worker counts and scheduling orders.  Replication-level estimates
are collected per DGP, reduced to moments in a fixed order, and flushed
to a versioned checkpoint after every completed DGP.
"""

from __future__ import annotations

import csv
import json
import os
import zipfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import estimators as est
from . import dgp as dgplib
from .calibration import synthetic_params_path

CHECKPOINT_VERSION = 1
RESULTS_HEADER = [
    "dgp_id", "policy", "scheme", "method", "horizon", "mean", "bias",
    "variance", "median_bias", "iqr", "n_ok", "n_fail", "scale",
]
MOMENT_FIELDS = ["mean", "bias", "variance", "median_bias", "iqr"]

# Fixed tie-break priority for the best-method map: VAR-family first.
METHOD_PRIORITY = ("ls_var", "bc_var", "bvar", "var_avg", "svar_iv", "ls_lp", "pen_lp")

DEFAULT_LAMBDA_GRID = (0.0,) + tuple(np.logspace(-3.0, 5.0, 20))


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings for one Monte Carlo experiment."""

    master_seed: int = 12345
    params_path: str = "synthetic"
    policies: tuple = ("monetary", "fiscal")
    scheme: str = "observed_shock"
    n_dgps: int = 10
    T: int = 200
    n_mc: int = 100
    burn_in: int = dgplib.DEFAULT_BURN_IN
    p: int = 4
    lag_rule: str = "fixed"          # "fixed" or "aic_floor"
    p_max_aic: int = 8
    h_bar: int = 19
    methods: tuple = ("ls_lp", "ls_var")
    lambda_grid: tuple = DEFAULT_LAMBDA_GRID
    omega_grid: tuple = tuple(np.round(np.arange(0.0, 1.0 + 1e-9, 0.01), 2))
    iv_r2: dict = field(default_factory=lambda: dict(dgplib.DEFAULT_IV_R2))
    filter_min_lag_tail: Optional[float] = None
    filter_max_invertibility: Optional[float] = None
    analytic_rho: tuple = (0.2, 0.6, 0.9)
    analytic_alpha: tuple = (1.0, 5.0, 10.0)
    analytic_sigma2: float = 1.0
    workers: int = 1
    out_dir: str = "."

    def __post_init__(self):
        if self.n_mc < 2:
            raise ValueError("n_mc must be at least 2")
        if self.h_bar < 3:
            raise ValueError("h_bar must be at least 3")
        if self.n_dgps < 1 or self.T < 50 or self.p < 1 or self.workers < 1:
            raise ValueError("n_dgps, T, p, and workers must be positive (T >= 50)")
        if self.scheme not in dgplib.SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        unknown = set(self.methods) - set(METHOD_PRIORITY)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")
        if any(p not in dgplib.POLICIES for p in self.policies):
            raise ValueError(f"unknown policy in {self.policies}")
        if any(not 0.0 <= w <= 1.0 for w in self.omega_grid):
            raise ValueError("omega grid must lie in [0, 1]")
        if "svar_iv" in self.methods and self.scheme != "iv":
            raise ValueError("svar_iv requires the iv scheme")
        if self.lag_rule not in ("fixed", "aic_floor"):
            raise ValueError(f"unknown lag rule {self.lag_rule!r}")

    def resolved_params_path(self) -> str:
        if self.params_path == "synthetic":
            return synthetic_params_path()
        return self.params_path

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("policies", "methods"):
            d[key] = list(d[key])
        for key in ("lambda_grid", "omega_grid", "analytic_rho", "analytic_alpha"):
            d[key] = [float(x) for x in d[key]]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("policies", "methods", "lambda_grid", "omega_grid",
                    "analytic_rho", "analytic_alpha"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class DGPRecord:
    dgp_id: int
    policy: str
    scheme: str
    spec: dgplib.DGPSpec
    truth: np.ndarray
    scale: float
    summary: dict


@dataclass
class ResultsStore:
    """Reduced per-(DGP, method, horizon) moments plus per-DGP metadata."""

    methods: tuple
    h_bar: int
    records: list = field(default_factory=list)
    moments: Optional[np.ndarray] = None   # (n_dgps, n_methods, h+1, 5)
    counts: Optional[np.ndarray] = None    # (n_dgps, n_methods, h+1, 2) ok/fail

    def n_dgps(self) -> int:
        return len(self.records)

    def method_index(self, method: str) -> int:
        return self.methods.index(method)

    def scales(self) -> np.ndarray:
        return np.array([r.scale for r in self.records])


def derive_rng(master_seed: int, *key) -> np.random.Generator:
    """Deterministic stream from (master seed, integer key words)."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


_DRAW_STREAM = 0
_REP_STREAM = 1


def draw_experiment_dgps(config: ExperimentConfig, params=None):
    """Draw the experiment's DGPs, applying any population-statistic filters.

    Candidate draws use their own counter-derived streams, so acceptance
    or rejection of earlier candidates never shifts later ones.
    """
    if params is None:
        params = dgplib.load_dfm_params(config.resolved_params_path())
    records = []
    attempt = 0
    max_attempts = 200 * config.n_dgps + 100
    while len(records) < config.n_dgps:
        if attempt >= max_attempts:
            raise RuntimeError(
                f"could not draw {config.n_dgps} admissible DGPs in {max_attempts} attempts"
            )
        policy = config.policies[len(records) % len(config.policies)]
        rng = derive_rng(config.master_seed, _DRAW_STREAM, attempt)
        attempt += 1
        spec = dgplib.draw_dgp_spec(
            params, policy, config.scheme, rng, iv_r2=config.iv_r2.get(policy),
        )
        summary = dgplib.summary_stats(params, spec, h_bar=config.h_bar, T_ref=config.T)
        if config.filter_min_lag_tail is not None \
                and summary["lag_tail_fraction"] <= config.filter_min_lag_tail:
            continue
        if config.filter_max_invertibility is not None \
                and summary["invertibility"] >= config.filter_max_invertibility:
            continue
        truth = dgplib.true_irf(params, spec, config.h_bar).values
        scale = float(np.sqrt(np.mean(truth**2)))
        if scale <= 0.0:
            continue
        records.append(DGPRecord(
            dgp_id=len(records), policy=policy, scheme=config.scheme,
            spec=spec, truth=truth, scale=scale, summary=summary,
        ))
    return params, records


def _estimate_once(method: str, data, config: ExperimentConfig, rng) -> np.ndarray:
    p = config.p
    if config.lag_rule == "aic_floor":
        p = max(est.select_lag_aic(data, config.p_max_aic), p)
    h = config.h_bar
    if method == "ls_lp":
        return est.lp_estimate(data, p, h).values
    if method == "pen_lp":
        return est.penalized_lp_estimate(data, p, h, config.lambda_grid, rng=rng).values
    if method == "ls_var":
        return est.var_irf(est.var_fit(data, p), data.roles, h, data.scheme).values
    if method == "bc_var":
        model = est.pope_bias_correct(est.var_fit(data, p))
        return est.var_irf(model, data.roles, h, data.scheme, method="bc_var").values
    if method == "bvar":
        model = est.bvar_posterior_mean(data, p)
        return est.var_irf(model, data.roles, h, data.scheme, method="bvar").values
    if method == "var_avg":
        return est.var_average_estimate(data, h).values
    if method == "svar_iv":
        return est.svar_iv_estimate(data, p, h).values
    raise ValueError(f"unknown method {method!r}")


def run_replication(params, record: DGPRecord, config: ExperimentConfig,
                    rep_id: int) -> np.ndarray:
    """One (DGP, replication) task: simulate once, run every method.

    Returns (n_methods, h_bar + 1); a method that raises contributes a
    row of NaNs and is counted as a failure during reduction.
    """
    rng = derive_rng(config.master_seed, _REP_STREAM, record.dgp_id, rep_id)
    data = dgplib.simulate_data(params, record.spec, config.T, config.burn_in, rng)
    out = np.full((len(config.methods), config.h_bar + 1), np.nan)
    for mi, method in enumerate(config.methods):
        method_rng = derive_rng(config.master_seed, _REP_STREAM, record.dgp_id, rep_id, mi + 2)
        try:
            out[mi] = _estimate_once(method, data, config, method_rng)
        except (ValueError, np.linalg.LinAlgError, RuntimeError):
            pass
    return out


def _worker_chunk(args):
    params, record, config, rep_ids = args
    return [run_replication(params, record, config, r) for r in rep_ids]


def _reduce_dgp(estimates: np.ndarray, truth: np.ndarray):
    """Collapse (n_mc, n_methods, h+1) estimates into stored moments."""
    n_mc, n_methods, H = estimates.shape
    moments = np.full((n_methods, H, len(MOMENT_FIELDS)), np.nan)
    counts = np.zeros((n_methods, H, 2), dtype=np.int64)
    for mi in range(n_methods):
        vals = estimates[:, mi, :]
        ok = np.all(np.isfinite(vals), axis=1)
        n_ok = int(ok.sum())
        counts[mi, :, 0] = n_ok
        counts[mi, :, 1] = n_mc - n_ok
        if n_ok == 0:
            continue
        good = vals[ok]
        mean = good.mean(axis=0)
        moments[mi, :, 0] = mean
        moments[mi, :, 1] = mean - truth
        moments[mi, :, 2] = good.var(axis=0)
        moments[mi, :, 3] = np.median(good, axis=0) - truth
        q75, q25 = np.percentile(good, [75, 25], axis=0)
        moments[mi, :, 4] = q75 - q25
    return moments, counts


def run_experiment(config: ExperimentConfig,
                   checkpoint_path: Optional[str] = None) -> ResultsStore:
    """Run the full experiment, checkpointing after each completed DGP.

    If ``checkpoint_path`` exists and matches the configuration, completed
    DGPs are loaded from it and only the remainder is computed; the final
    store is bit-identical to an uninterrupted run.
    """
    params, records = draw_experiment_dgps(config)
    n_methods = len(config.methods)
    H = config.h_bar + 1
    store = ResultsStore(methods=tuple(config.methods), h_bar=config.h_bar, records=records)
    store.moments = np.full((config.n_dgps, n_methods, H, len(MOMENT_FIELDS)), np.nan)
    store.counts = np.zeros((config.n_dgps, n_methods, H, 2), dtype=np.int64)
    completed = np.zeros(config.n_dgps, dtype=bool)

    if checkpoint_path and os.path.exists(checkpoint_path):
        prev = checkpoint_read(checkpoint_path)
        if prev.methods == store.methods and prev.h_bar == store.h_bar \
                and prev.moments.shape == store.moments.shape:
            done = np.array([np.all(prev.counts[i].sum(axis=-1) == config.n_mc)
                             for i in range(prev.moments.shape[0])])
            store.moments[done] = prev.moments[done]
            store.counts[done] = prev.counts[done]
            completed[done] = True

    pool = ProcessPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    try:
        for record in records:
            i = record.dgp_id
            if completed[i]:
                continue
            rep_ids = list(range(config.n_mc))
            if pool is None:
                rows = [run_replication(params, record, config, r) for r in rep_ids]
            else:
                chunk = max(1, config.n_mc // (4 * config.workers))
                tasks = [
                    (params, record, config, rep_ids[a:a + chunk])
                    for a in range(0, config.n_mc, chunk)
                ]
                rows = []
                for part in pool.map(_worker_chunk, tasks):
                    rows.extend(part)
            estimates = np.stack(rows)
            store.moments[i], store.counts[i] = _reduce_dgp(estimates, record.truth)
            completed[i] = True
            if checkpoint_path:
                checkpoint_write(store, checkpoint_path)
    finally:
        if pool is not None:
            pool.shutdown()
    return store


# ---------------------------------------------------------------------------
# Loss, aggregation, maps
# ---------------------------------------------------------------------------

def loss(bias: float, variance: float, omega: float) -> float:
    """Weighted bias-variance loss: omega * bias^2 + (1 - omega) * variance."""
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    if not 0.0 <= omega <= 1.0:
        raise ValueError("omega must lie in [0, 1]")
    return omega * bias**2 + (1.0 - omega) * variance


AGG_STATISTICS = ("abs_bias", "std", "abs_median_bias", "iqr")


def aggregate_curves(store: ResultsStore, statistic: str) -> np.ndarray:
    """Cross-DGP median of a scale-normalized statistic, per (method, horizon).

    Each DGP's statistic is divided by that DGP's root-mean-square true
    response before taking the median; DGPs with a zero scale are dropped.
    """
    if statistic not in AGG_STATISTICS:
        raise ValueError(f"unknown statistic {statistic!r}")
    if store.n_dgps() == 0:
        raise ValueError("empty results store")
    scales = store.scales()
    keep = scales > 0
    if statistic == "abs_bias":
        values = np.abs(store.moments[..., 1])
    elif statistic == "std":
        values = np.sqrt(store.moments[..., 2])
    elif statistic == "abs_median_bias":
        values = np.abs(store.moments[..., 3])
    else:
        values = store.moments[..., 4]
    normalized = values[keep] / scales[keep, None, None]
    return np.nanmedian(normalized, axis=0)


def _normalized_losses(store: ResultsStore, omega_grid) -> np.ndarray:
    """(n_dgps, n_methods, h+1, n_omega) normalized losses."""
    scales = store.scales()[:, None, None]
    bias = store.moments[..., 1] / scales
    var = store.moments[..., 2] / scales**2
    om = np.asarray(omega_grid, dtype=float)
    return om[None, None, None, :] * (bias**2)[..., None] \
        + (1.0 - om)[None, None, None, :] * var[..., None]


def headtohead_map(store: ResultsStore, method_a: str, method_b: str,
                   omega_grid) -> np.ndarray:
    """Fraction of DGPs where method A's normalized loss beats method B's.

    Entry (h, omega); ties count for method B.
    """
    la = _normalized_losses(store, omega_grid)
    ia, ib = store.method_index(method_a), store.method_index(method_b)
    wins = la[:, ia] < la[:, ib]
    valid = np.isfinite(la[:, ia]) & np.isfinite(la[:, ib])
    with np.errstate(invalid="ignore"):
        return wins.sum(axis=0) / np.maximum(valid.sum(axis=0), 1)


def best_method_map(store: ResultsStore, omega_grid) -> np.ndarray:
    """Method minimizing the cross-DGP average normalized loss, per (h, omega).

    Exact ties break by a fixed priority that prefers the VAR family.
    Returns an array of method-name strings of shape (h+1, n_omega).
    """
    if len(store.methods) < 1:
        raise ValueError("need at least one method")
    losses = np.nanmean(_normalized_losses(store, omega_grid), axis=0)
    prio = {m: METHOD_PRIORITY.index(m) for m in store.methods}
    order = sorted(range(len(store.methods)), key=lambda mi: prio[store.methods[mi]])
    H, W = losses.shape[1], losses.shape[2]
    out = np.empty((H, W), dtype=object)
    for h in range(H):
        for wi in range(W):
            best_mi, best_val = order[0], np.inf
            for mi in order:
                v = losses[mi, h, wi]
                if np.isfinite(v) and v < best_val - 0.0:
                    best_val, best_mi = v, mi
            out[h, wi] = store.methods[best_mi]
    return out


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _spec_to_dict(spec) -> dict:
    if spec is None:
        return None
    return {
        "variable_indices": list(spec.variable_indices),
        "response_index": spec.response_index,
        "normalization_index": spec.normalization_index,
        "innovation_index": spec.innovation_index,
        "scheme": spec.scheme,
        "policy": spec.policy,
        "shock_col": list(spec.shock_col),
        "iv_params": None if spec.iv_params is None else
        {"rho_z": spec.iv_params.rho_z, "sigma_nu2": spec.iv_params.sigma_nu2},
    }


def _spec_from_dict(d):
    if d is None:
        return None
    iv = d.get("iv_params")
    return dgplib.DGPSpec(
        variable_indices=tuple(d["variable_indices"]),
        response_index=d["response_index"],
        normalization_index=d["normalization_index"],
        innovation_index=d["innovation_index"],
        scheme=d["scheme"],
        policy=d["policy"],
        shock_col=np.asarray(d["shock_col"]),
        iv_params=None if iv is None else dgplib.IVParams(**iv),
    )


def checkpoint_write(store: ResultsStore, path) -> None:
    """Versioned binary snapshot; floats round-trip exactly."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "methods": list(store.methods),
        "h_bar": store.h_bar,
        "records": [
            {
                "dgp_id": r.dgp_id, "policy": r.policy, "scheme": r.scheme,
                "spec": _spec_to_dict(r.spec), "scale": r.scale, "summary": r.summary,
            }
            for r in store.records
        ],
    }
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        np.savez(
            fh,
            format_version=np.array([CHECKPOINT_VERSION]),
            meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8),
            truth=np.stack([r.truth for r in store.records]),
            moments=store.moments,
            counts=store.counts,
        )
    os.replace(tmp, path)


def checkpoint_read(path) -> ResultsStore:
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head != b"PK":
        raise CheckpointError(f"corrupt checkpoint {path}: bad magic at byte offset 0")
    try:
        with np.load(path, allow_pickle=False) as z:
            version = int(z["format_version"][0])
            if version != CHECKPOINT_VERSION:
                raise CheckpointError(f"unsupported checkpoint version {version}")
            meta = json.loads(bytes(z["meta"]).decode("utf-8"))
            truth = z["truth"]
            moments = z["moments"]
            counts = z["counts"]
    except (zipfile.BadZipFile, KeyError, OSError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc
    records = [
        DGPRecord(
            dgp_id=r["dgp_id"], policy=r["policy"], scheme=r["scheme"],
            spec=_spec_from_dict(r["spec"]), truth=truth[i],
            scale=r["scale"], summary=r["summary"],
        )
        for i, r in enumerate(meta["records"])
    ]
    return ResultsStore(
        methods=tuple(meta["methods"]), h_bar=meta["h_bar"],
        records=records, moments=moments, counts=counts,
    )


def write_results_csv(store: ResultsStore, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULTS_HEADER)
        for r in store.records:
            for mi, method in enumerate(store.methods):
                for h in range(store.h_bar + 1):
                    mom = store.moments[r.dgp_id, mi, h]
                    cnt = store.counts[r.dgp_id, mi, h]
                    writer.writerow([
                        r.dgp_id, r.policy, r.scheme, method, h,
                        *(repr(float(x)) for x in mom),
                        int(cnt[0]), int(cnt[1]), repr(float(r.scale)),
                    ])


def read_results_csv(path):
    """Rows of the results file as dicts; rejects unknown schemas."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RESULTS_HEADER:
            raise ValueError(f"unknown results schema in {path}: header {header}")
        rows = []
        for raw in reader:
            row = dict(zip(RESULTS_HEADER, raw))
            for key in ("mean", "bias", "variance", "median_bias", "iqr", "scale"):
                row[key] = float(row[key])
            for key in ("dgp_id", "horizon", "n_ok", "n_fail"):
                row[key] = int(row[key])
            rows.append(row)
    return rows
