"""
Run configurations, JSON run reports and CSV sweeps behind the command line.
"""
import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import __version__
from .approximate import ApproximationRequest, approximate, plain_power_baseline
from .errors import ContractViolation, GapLRAError
from .io import read_matrix
from .matrix import GramOperator, as_columns_matrix, child_seed
from .oracle import best_rank_k, exact_svd
from .solvers import BACKENDS, ShiftedSystem, solve_accelerated_svrg, solve_cg, solve_direct, solve_svrg
from .subspace import estimate_eigenvalues
from .synthetic import SyntheticSpec, plant, spectrum_with_stable_rank, stable_rank

SCHEMA = "gaplra.run/1"
SWEEP_AXES = ("gap", "stable_rank", "n", "epsilon", "backend")
SWEEP_COLUMNS = (
    "axis", "value", "seed", "status", "message", "d", "n", "stable_rank", "backend",
    "frobenius_error", "spectral_error", "ratio_frobenius", "ratio_spectral",
    "gram_applies", "inverse_applies", "column_samples", "epochs", "solver_error", "seconds",
)
SOLVER_AXES = ("gap", "stable_rank", "n")
SOLVER_RHS = 3


@dataclass
class RunConfig:
    """One CLI invocation. Exactly one of ``input_path`` / ``synthetic`` is set."""

    k: int
    p: int
    epsilon: float = 1e-2
    input_path: str = None
    synthetic: dict = None
    delta: float = None
    backend: str = "direct"
    seed: int = 0
    oracle: bool = False
    plain_power_baseline: bool = False
    deterministic: bool = False
    out: str = None
    solver_gap: float = 0.05
    solver_tol: float = 1e-8

    def validate(self):
        if (self.input_path is None) == (self.synthetic is None):
            raise ContractViolation("give exactly one of an input file or a synthetic spec")
        if self.backend not in BACKENDS:
            raise ContractViolation(f"unknown backend {self.backend!r}; choose from {BACKENDS}")

    def echo(self):
        out = asdict(self)
        out.pop("out")
        return out


def load_matrix(cfg):
    """Return (X, exact singular values or None)."""
    if cfg.input_path is not None:
        return read_matrix(cfg.input_path), None
    spec = SyntheticSpec(**cfg.synthetic)
    X, sigma = plant(spec, seed=cfg.seed)
    return X, sigma


def _strip_seconds(costs):
    return {ph: {k: v for k, v in c.items() if k != "seconds"} for ph, c in costs.items()}


def _seconds(costs):
    return {ph: c.get("seconds", 0.0) for ph, c in costs.items()}


def _summary(res):
    return {
        "frobenius_error": res.frobenius_error,
        "spectral_error": res.spectral_error,
        "spectral_estimated": res.spectral_estimated,
        "plan": res.plan.to_dict(),
        "costs": _strip_seconds(res.cost_report),
    }


def _ratio(achieved, optimal):
    if optimal == 0.0:
        return None
    return achieved / optimal


def digest(report):
    """sha256 over the report with wall-clock fields removed."""
    stable = {k: v for k, v in report.items() if k not in ("wall_clock", "digest")}
    if stable.get("baseline"):
        stable["baseline"] = {k: v for k, v in stable["baseline"].items() if k != "wall_clock"}
    blob = json.dumps(stable, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def run(cfg):
    """Execute one configuration and return the JSON-ready report (also written to ``cfg.out``)."""
    cfg.validate()
    X, sigma = load_matrix(cfg)
    req = ApproximationRequest(X, cfg.k, cfg.p, cfg.epsilon, backend=cfg.backend, seed=cfg.seed,
                               delta=cfg.delta)
    res = approximate(req)
    report = {
        "schema": SCHEMA,
        "version": __version__,
        "config": cfg.echo(),
        "seed": cfg.seed,
        "matrix": {"d": X.d, "n": X.n, "nnz": X.nnz, "frobenius_norm": X.frobenius_norm()},
        "result": _summary(res),
        "optimal": None,
        "ratio": None,
        "within_bound": None,
        "baseline": None,
        "wall_clock": _seconds(res.cost_report),
    }
    if cfg.oracle:
        t0 = time.perf_counter()
        sv = exact_svd(X)
        _, fro, spec = best_rank_k(sv, cfg.k)
        report["optimal"] = {"frobenius_error": fro, "spectral_error": spec}
        rf, rs = _ratio(res.frobenius_error, fro), _ratio(res.spectral_error, spec)
        report["ratio"] = {"frobenius": rf, "spectral": rs}
        bound = 1.0 + cfg.epsilon
        report["within_bound"] = bool((rf is None or rf <= bound) and (rs is None or rs <= bound))
        report["wall_clock"]["oracle"] = time.perf_counter() - t0
    if cfg.plain_power_baseline:
        base = plain_power_baseline(X, cfg.k, cfg.p, cfg.epsilon, delta=res.plan.delta,
                                    mu=res.plan.mu, seed=cfg.seed)
        report["baseline"] = dict(_summary(base), wall_clock=_seconds(base.cost_report))
    report["digest"] = digest(report)
    if cfg.out:
        with open(cfg.out, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return report


# --- sweeps ----------------------------------------------------------------


def solver_benchmark(X, gap, backend, seed=0, lambda1=None, tol=1e-8, rhs=SOLVER_RHS):
    """Solve (lambda I - X X^T) x = b at lambda = lambda_1 (1 + gap) for a few random b.

    Returns summed column samples and epochs, and the worst relative D-norm
    error against the dense solve (NaN when d is too large for it).
    """
    X = as_columns_matrix(X)
    if lambda1 is None:
        est = estimate_eigenvalues(GramOperator(X), 1, 0.01, seed=child_seed(seed, 0))
        lambda1 = est.values[0] / 0.99
    system = ShiftedSystem(X, lambda1 * (1.0 + gap), lambda1)
    rng = np.random.default_rng(child_seed(seed, 1))
    samples = epochs = 0
    worst = 0.0
    for i in range(rhs):
        b = rng.standard_normal(X.d)
        if backend == "direct":
            rep = solve_direct(system, b)
        elif backend == "cg":
            rep = solve_cg(system, b, tol=tol)
        else:
            solver = solve_svrg if backend == "svrg" else solve_accelerated_svrg
            rep = solver(system, b, tol=tol, seed=child_seed(seed, 2, i))
        samples += rep.column_samples
        epochs += rep.epochs
        if X.d <= 2000:
            ref = solve_direct(system, b).solution
            worst = max(worst, system.d_norm(rep.solution - ref) / system.d_norm(ref))
        else:
            worst = float("nan")
    return {"column_samples": samples, "epochs": epochs, "solver_error": worst}


def _row_config(cfg, axis, value):
    """Configuration and matrix recipe for one sweep row."""
    if axis == "epsilon":
        return replace(cfg, epsilon=float(value)), cfg.synthetic
    if axis == "backend":
        return replace(cfg, backend=str(value)), cfg.synthetic
    synth = dict(cfg.synthetic) if cfg.synthetic is not None else None
    if axis in ("stable_rank", "n"):
        if synth is None:
            raise ContractViolation(f"axis {axis!r} needs a synthetic template")
        if axis == "n":
            synth["n"] = int(float(value))
        else:
            count = len(SyntheticSpec(**synth).spectrum())
            sigma = spectrum_with_stable_rank(count, float(value), decay=synth.get("extra", {}).get("decay", 0.9))
            synth.update(singular_values=[float(v) for v in sigma], top=0, tail_count=0)
    return replace(cfg, synthetic=synth), synth


def sweep_row(cfg, axis, value, seed):
    row = dict.fromkeys(SWEEP_COLUMNS, "")
    row.update(axis=axis, value=value, seed=seed, backend=cfg.backend)
    t0 = time.perf_counter()
    try:
        rcfg, _ = _row_config(cfg, axis, value)
        rcfg = replace(rcfg, seed=seed, out=None)
        rcfg.validate()
        X, sigma = load_matrix(rcfg)
        row.update(d=X.d, n=X.n, backend=rcfg.backend)
        if sigma is not None:
            row["stable_rank"] = stable_rank(sigma)
        if axis in SOLVER_AXES:
            gap = float(value) if axis == "gap" else cfg.solver_gap
            lam1 = float(sigma[0] ** 2) if sigma is not None else None
            row.update(solver_benchmark(X, gap, rcfg.backend, seed=seed, lambda1=lam1,
                                        tol=rcfg.solver_tol))
        else:
            rep = run(rcfg)
            res = rep["result"]
            total = res["costs"]["total"]
            row.update(frobenius_error=res["frobenius_error"], spectral_error=res["spectral_error"],
                       gram_applies=total["gram_applies"], inverse_applies=total["inverse_applies"],
                       column_samples=total["column_samples"])
            if rep["ratio"]:
                row.update(ratio_frobenius=rep["ratio"]["frobenius"], ratio_spectral=rep["ratio"]["spectral"])
        row["status"] = "ok"
    except (GapLRAError, ValueError, OSError) as exc:
        row.update(status=type(exc).__name__, message=str(exc))
    row["seconds"] = time.perf_counter() - t0
    return row


def _row_task(args):
    return sweep_row(*args)


def worker_count():
    raw = os.environ.get("GAPLRA_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ContractViolation(f"GAPLRA_THREADS must be an integer, got {raw!r}") from None


def sweep(cfg, axis, values, seeds=1, out=None, workers=None):
    """One CSV row per (value, seed); failures are recorded in the row and the sweep goes on.

    Row seeds derive from (cfg.seed, row index). Returns the CSV text.
    """
    if axis not in SWEEP_AXES:
        raise ContractViolation(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    tasks = []
    for i, value in enumerate(values):
        for j in range(seeds):
            tasks.append((cfg, axis, value, child_seed(cfg.seed, i, j) % 2**31))
    workers = workers or worker_count()
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_row_task, tasks))
    else:
        rows = [_row_task(t) for t in tasks]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(v) for k, v in row.items()})
    text = buf.getvalue()
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    return text


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return v
