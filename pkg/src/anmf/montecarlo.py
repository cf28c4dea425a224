"""Monte Carlo estimation of false-alarm and detection rates.

Each trial draws fresh secondary data, builds the covariance estimate and
(optionally) the blind design from it, then evaluates the statistic on one
H0 and one H1 primary vector. Every trial owns its RNG substreams, so the
records depend only on ``(seed, trial index)``, never on scheduling.
"""
from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import dataclass
import math

import numpy as np

from anmf.clutter import CALIBRATION_STREAM, MAIN_STREAM, generate_primary, generate_secondary, trial_rng
from anmf.design import GRID_STEP, KAPPA, design_rscm, design_rte, population_optimum
from anmf.detector import HermitianFactor, anmf_statistics
from anmf.errors import InvalidParameterError, NumericalError
from anmf.estimators import rscm
from anmf.theory import theory_report

MAX_FAILURE_FRACTION = 0.01
Z95 = 1.959963984540054
CSV_COLUMNS = ("method", "a", "eta_target", "threshold", "rho_mean", "pfa_emp", "pfa_ci",
               "pd_emp", "pd_ci", "pd_theory")


@dataclass(frozen=True)
class TrialRecord:
    """One trial: the design used and the statistics ``t`` under H0 and H1.

    ``r_hat`` is parallel to the scenario's ``eta_grid`` and ``t_h1`` to the
    amplitudes of the run. A failed trial carries ``error`` and NaN values.
    """

    trial_index: int
    rho_used: float
    sigma_hat: float
    r_hat: tuple
    t_h0: float
    t_h1: tuple
    error: str | None = None

    @property
    def failed(self):
        return self.error is not None


def _parse_rho_mode(rho_mode):
    if isinstance(rho_mode, str):
        if rho_mode == "optimal":
            return rho_mode
        try:
            return float(rho_mode)
        except ValueError:
            raise InvalidParameterError(f"rho mode must be 'optimal' or a number, got {rho_mode!r}") from None
    return float(rho_mode)


def _design(scenario, method, rho_mode, X, grid_step, kappa):
    """Return (DesignOutput, estimate) for one secondary batch."""
    if method == "rscm":
        d = design_rscm(X, scenario.p, scenario.eta_grid, rho_mode, kappa, grid_step)
        return d, rscm(X, d.rho_star)
    if method == "rte":
        d, obj = design_rte(X, scenario.p, scenario.eta_grid, rho_mode, kappa, grid_step)
        return d, obj.estimate(d.rho_star)
    raise InvalidParameterError(f"method must be 'rscm' or 'rte', got {method!r}")


def run_trial(scenario, method, rho_mode, index, amplitudes, grid_step=GRID_STEP, kappa=KAPPA,
              stream=MAIN_STREAM, h1=True):
    """Run trial ``index``; numerical failures are recorded, not raised."""
    seed = scenario.seed
    rng_sec = trial_rng(seed, index, "secondary", stream)
    rng_tex = trial_rng(seed, index, "texture", stream)
    rng_pri = trial_rng(seed, index, "primary", stream)
    N = scenario.N
    try:
        batch = generate_secondary(rng_sec, scenario.C_sqrt, scenario.texture, scenario.n, texture_rng=rng_tex)
        d, A = _design(scenario, method, rho_mode, batch.secondary, grid_step, kappa)
        x0 = generate_primary(rng_pri, scenario.C_sqrt, scenario.texture, scenario.p, 0.0, "H0")
        cols = [x0]
        if h1:
            x1 = generate_primary(rng_pri, scenario.C_sqrt, scenario.texture, scenario.p, 0.0, "H0")
            # common clutter across amplitudes
            cols += [(a / np.sqrt(N)) * scenario.p + x1 for a in amplitudes]
        t = anmf_statistics(HermitianFactor(A), np.stack(cols, axis=1), scenario.p)
    except NumericalError as exc:
        nan_r = tuple(math.nan for _ in scenario.eta_grid)
        return TrialRecord(index, math.nan, math.nan, nan_r, math.nan,
                           tuple(math.nan for _ in amplitudes), error=str(exc))
    return TrialRecord(index, d.rho_star, d.sigma_hat, d.r_hat, float(t[0]), tuple(map(float, t[1:])))


def _run_chunk(args):
    scenario, method, rho_mode, indices, amplitudes, grid_step, kappa, stream, h1 = args
    return [run_trial(scenario, method, rho_mode, i, amplitudes, grid_step, kappa, stream, h1) for i in indices]


def run_trials(scenario, method="rscm", rho_mode="optimal", trials=None, amplitudes=None,
               grid_step=GRID_STEP, kappa=KAPPA, stream=MAIN_STREAM, h1=True, workers=1,
               progress=None):
    """Run ``trials`` independent trials (default ``scenario.trials``).

    ``amplitudes`` defaults to ``(scenario.a,)``; all amplitudes share the
    same H1 clutter draw. Raises :class:`NumericalError` if more than 1% of
    trials fail.
    """
    trials = scenario.trials if trials is None else int(trials)
    if trials < 0:
        raise InvalidParameterError(f"trials must be >= 0, got {trials}")
    amplitudes = (scenario.a,) if amplitudes is None else tuple(float(a) for a in amplitudes)
    if any(a < 0 for a in amplitudes):
        raise InvalidParameterError("amplitudes must be non-negative")
    rho_mode = _parse_rho_mode(rho_mode)
    if trials == 0:
        return []
    if workers > 1:
        chunks = np.array_split(np.arange(trials), workers * 4)
        jobs = [(scenario, method, rho_mode, c.tolist(), amplitudes, grid_step, kappa, stream, h1)
                for c in chunks if c.size]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = [r for chunk in pool.map(_run_chunk, jobs) for r in chunk]
    else:
        records = []
        for i in range(trials):
            records.append(run_trial(scenario, method, rho_mode, i, amplitudes, grid_step, kappa, stream, h1))
            if progress is not None:
                progress(i + 1, trials)
    failures = sum(r.failed for r in records)
    if failures > MAX_FAILURE_FRACTION * trials:
        raise NumericalError(f"{failures} of {trials} trials failed; first error: "
                             f"{next(r.error for r in records if r.failed)}")
    return records


def wald_halfwidth(p, m):
    return Z95 * np.sqrt(p * (1 - p) / m) if m > 0 else math.nan


@dataclass(frozen=True)
class RatesRow:
    method: str
    a: float
    eta_target: float
    threshold: float  # mean Gamma = r / sqrt(N) over trials
    rho_mean: float
    pfa_emp: float
    pfa_ci: float
    pd_emp: float
    pd_ci: float
    pd_theory: float

    def as_tuple(self):
        return tuple(getattr(self, c) for c in CSV_COLUMNS)


@dataclass(frozen=True)
class RatesTable:
    rows: tuple
    trials: int
    failures: int = 0

    def __len__(self):
        return len(self.rows)

    def row(self, eta, a=None):
        for r in self.rows:
            if math.isclose(r.eta_target, eta) and (a is None or math.isclose(r.a, a)):
                return r
        raise KeyError((eta, a))

    def to_csv(self, path_or_file, header_lines=()):
        write_rates_csv(path_or_file, [self], header_lines)


def theory_point(scenario, method, rho_mode, a, eta, kappa=KAPPA, grid_step=GRID_STEP):
    """Asymptotic Pd at ``eta`` for the population-optimal (or fixed) regularization."""
    if rho_mode == "optimal":
        rho, _ = population_optimum(scenario.spectrum, scenario.p, scenario.c, method, kappa, grid_step,
                                    scenario.texture)
    else:
        rho = float(rho_mode)
    rep = theory_report(method, scenario.spectrum, scenario.p, scenario.c, rho, a, scenario.texture)
    return float(rep.pd(rep.threshold(eta)))


def estimate_rates(records, eta_grid, scenario, amplitudes=None, method="", thresholds=None, pd_theory=None):
    """Empirical rates per ``(a, eta)``.

    Each record is thresholded with its own design ``r_hat`` unless
    ``thresholds`` (one ``r`` per eta, e.g. from :func:`calibrate_threshold`)
    is given. ``pd_theory`` maps ``(a, eta)`` to a predicted Pd.
    """
    ok = [r for r in records if not r.failed]
    if not ok:
        raise InvalidParameterError("no successful trials to aggregate")
    amplitudes = (scenario.a,) if amplitudes is None else tuple(amplitudes)
    eta_grid = tuple(float(e) for e in np.atleast_1d(eta_grid))
    m = len(ok)
    sqrtN = np.sqrt(scenario.N)
    s0 = sqrtN * np.array([r.t_h0 for r in ok])
    s1 = sqrtN * np.array([r.t_h1 for r in ok]).reshape(m, -1)
    rho_mean = float(np.mean([r.rho_used for r in ok]))
    rows = []
    for k, eta in enumerate(eta_grid):
        if thresholds is not None:
            r = np.full(m, float(np.atleast_1d(thresholds)[k]))
        else:
            r = np.array([rec.r_hat[scenario.eta_grid.index(eta)] for rec in ok])
        pfa = int(np.count_nonzero(s0 > r)) / m
        for j, a in enumerate(amplitudes):
            pd = int(np.count_nonzero(s1[:, j] > r)) / m
            pth = math.nan if pd_theory is None else float(pd_theory(a, eta))
            rows.append(RatesRow(method, float(a), eta, float(np.mean(r) / sqrtN), rho_mean, pfa,
                                 float(wald_halfwidth(pfa, m)), pd, float(wald_halfwidth(pd, m)), pth))
    return RatesTable(tuple(rows), m, len(records) - m)


def calibrate_threshold(scenario, method, rho, eta_grid, size=100_000, grid_step=GRID_STEP, kappa=KAPPA):
    """Empirical thresholds ``r`` with ``P(sqrt(N) t > r | H0) = eta`` for a fixed-design detector.

    Uses H0-only trials on the calibration substream, so calibration never
    shares draws with the evaluation run.
    """
    recs = run_trials(scenario, method, rho, size, amplitudes=(), grid_step=grid_step, kappa=kappa,
                      stream=CALIBRATION_STREAM, h1=False)
    s0 = np.sqrt(scenario.N) * np.array([r.t_h0 for r in recs if not r.failed])
    eta_grid = np.atleast_1d(np.asarray(eta_grid, dtype=float))
    if np.any(~(eta_grid > 0)) or np.any(~(eta_grid < 1)):
        raise InvalidParameterError(f"eta must lie in (0, 1), got {eta_grid}")
    # "higher" keeps the empirical exceedance rate at or below eta
    return np.quantile(s0, 1 - eta_grid, method="higher")


@dataclass(frozen=True)
class MethodSpec:
    """One detector configuration in a comparison run."""

    method: str = "rscm"
    rho: str | float = "optimal"
    threshold: str = "design"  # or "calibrated"
    calibration_size: int = 100_000

    @property
    def label(self):
        rho = self.rho if isinstance(self.rho, str) else f"{self.rho:g}"
        suffix = "" if self.threshold == "design" else "-cal"
        return f"{self.method}-{rho}{suffix}"


def roc_curve(scenario, methods, amplitudes=None, trials=None, grid_step=GRID_STEP, kappa=KAPPA,
              with_theory=True, workers=1):
    """Rates over ``scenario.eta_grid`` for each method, on identical data streams."""
    amplitudes = (scenario.a,) if amplitudes is None else tuple(amplitudes)
    tables = {}
    for spec in methods:
        recs = run_trials(scenario, spec.method, spec.rho, trials, amplitudes, grid_step, kappa, workers=workers)
        thresholds = None
        if spec.threshold == "calibrated":
            thresholds = calibrate_threshold(scenario, spec.method, spec.rho, scenario.eta_grid,
                                             spec.calibration_size, grid_step, kappa)
        elif spec.threshold != "design":
            raise InvalidParameterError(f"threshold mode must be 'design' or 'calibrated', got {spec.threshold!r}")
        pth = None
        if with_theory:
            cache = {}

            def pth(a, eta, spec=spec):
                key = (a, eta)
                if key not in cache:
                    cache[key] = theory_point(scenario, spec.method, spec.rho, a, eta, kappa, grid_step)
                return cache[key]

        tables[spec.label] = estimate_rates(recs, scenario.eta_grid, scenario, amplitudes, spec.label,
                                            thresholds, pth)
    return tables


def write_rates_csv(path_or_file, tables, header_lines=()):
    """CSV with one row per (method, a, eta); ``header_lines`` become ``#`` comments."""
    def _write(fh):
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for table in tables:
            for row in table.rows:
                w.writerow([v if isinstance(v, str) else repr(float(v)) for v in row.as_tuple()])

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            _write(fh)


__all__ = [
    "TrialRecord", "RatesRow", "RatesTable", "MethodSpec", "run_trial", "run_trials", "estimate_rates",
    "calibrate_threshold", "roc_curve", "theory_point", "write_rates_csv", "wald_halfwidth",
]
