import logging
import time
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence

from joblib import Parallel, delayed

from src import __version__
from src.conf.config import settings
from src.schemas.Channel_Schemas import ChannelParams, FockProbe, GaussianProbe
from src.schemas.Estimation_Schemas import MonteCarloScenario
from src.schemas.Scenario_Schemas import Cell, ResultTable, Scenario
from src.services.channels import channel_distribution
from src.services.errors import PreconditionError
from src.services.fisher import (
    displacement_moments,
    fi_displacement_exact,
    fi_exact,
    fi_squeezing_exact,
    fisher_matrix,
    linearized_sensitivity,
    linearized_sensitivity_from_distribution,
    lossy_fi,
    multiparam_bounds,
    relative_error,
    snr_displacement,
)
from src.services.gaussian import equivalent_energy, optimal_gaussian_qfi, qfi_gaussian, squeezing_db
from src.services.mle import fluctuation_study, monte_carlo_error

logger = logging.getLogger(__name__)

Row = Dict[str, Cell]


def _single_params(s: Scenario) -> ChannelParams:
    return ChannelParams(**{s.strength_key: s.strength, "eta": s.eta})


def _monte_carlo_scenario(s: Scenario) -> MonteCarloScenario:
    joint = s.estimator == "joint"
    return MonteCarloScenario(
        m=s.m,
        kind=s.channel,
        estimator=s.estimator,
        params=s.params if joint else _single_params(s),
        M=s.M,
        trials=s.trials,
        seed=s.seed,
        prior=s.prior,
        cutoff=s.cutoff_override,
    )


def _fisher(s: Scenario) -> float:
    if s.eta == 1:
        return fi_exact(s.m, s.channel, s.strength)
    return lossy_fi(s.m, s.channel, s.strength, s.eta, s.cutoff_override)


@lru_cache(maxsize=None)
def _gaussian_qfi(family: str, mean_photon: float, kind: str, strength: float) -> float:
    probe = GaussianProbe.coherent(mean_photon) if family == "coherent" else GaussianProbe.squeezed(mean_photon)
    return qfi_gaussian(probe, kind, strength, cross_check=False)


def _base_row(s: Scenario) -> Row:
    return {"m": s.m, "M": s.M, s.strength_key: s.strength, "eta": s.eta}


def _joint_row(s: Scenario, n_jobs: Optional[int]) -> Row:
    stats = monte_carlo_error(_monte_carlo_scenario(s), n_jobs)
    H = fisher_matrix(s.m, s.N_c, s.N_s, eta=s.eta, cutoff=s.cutoff_override)
    bound_Nc, bound_Ns = multiparam_bounds(H, s.M)
    return {
        "m": s.m,
        "M": s.M,
        "N_c": s.N_c,
        "N_s": s.N_s,
        "mse_Nc": stats.Nc.mse,
        "stderr_Nc": stats.Nc.stderr_bar,
        "mse_Ns": stats.Ns.mse,
        "stderr_Ns": stats.Ns.stderr_bar,
        "cov_NcNs": stats.covariance[2],
        "bound_Nc": bound_Nc,
        "bound_Ns": bound_Ns,
    }


def run_fisher_scan(s: Scenario, n_jobs: Optional[int] = None) -> Row:
    F = lossy_fi(s.m, s.channel, s.strength, s.eta, s.cutoff_override)
    row = _base_row(s)
    row.update(
        fi=F,
        fi_lossless=fi_exact(s.m, s.channel, s.strength),
        cr_bound=1.0 / (s.M * F),
        relative_error=relative_error(F, s.strength),
    )
    return row


def run_mle_sim(s: Scenario, n_jobs: Optional[int] = None) -> Row:
    if s.estimator == "joint":
        return _joint_row(s, n_jobs)
    stats = monte_carlo_error(_monte_carlo_scenario(s), n_jobs)
    row = _base_row(s)
    row.update(
        mse=stats.mse,
        stderr_bar=stats.stderr_bar,
        cr_bound=1.0 / (s.M * _fisher(s)),
        bias=stats.bias,
        boundary_hits=stats.boundary_hits,
        failures=stats.failures,
    )
    return row


def run_loss_sim(s: Scenario, n_jobs: Optional[int] = None) -> Row:
    row = run_mle_sim(s, n_jobs)
    row.update(
        lossless_bound=1.0 / (s.M * fi_exact(s.m, s.channel, s.strength)),
        vacuum_bound=1.0 / (s.M * fi_exact(0, s.channel, s.strength)),
        coherent_bound=1.0 / (s.M * _gaussian_qfi("coherent", float(s.m), s.channel, s.strength)),
        squeezed_bound=1.0 / (s.M * _gaussian_qfi("squeezed", float(s.m), s.channel, s.strength)),
    )
    return row


def run_gaussian_compare(s: Scenario, n_jobs: Optional[int] = None) -> Row:
    F_fock = fi_exact(s.m, s.channel, s.strength)
    row: Row = {"m": s.m, s.strength_key: s.strength, "fock_bound": 1.0 / (s.M * F_fock)}
    row.update(
        squeezed_bound=1.0 / (s.M * _gaussian_qfi("squeezed", float(s.m), s.channel, s.strength)),
        coherent_bound=1.0 / (s.M * _gaussian_qfi("coherent", float(s.m), s.channel, s.strength)),
        squeezing_db=squeezing_db(s.m),
    )
    if s.split_points:
        _, best, _ = optimal_gaussian_qfi(float(s.m), s.channel, s.strength, s.split_points)
        row["optimal_gaussian_bound"] = 1.0 / (s.M * best)
    if s.family is not None:
        row["equivalent_energy"] = equivalent_energy(F_fock, s.family, s.channel, s.strength)
    return row


def run_multiparam(s: Scenario, n_jobs: Optional[int] = None) -> Row:
    H = fisher_matrix(s.m, s.N_c, s.N_s, eta=s.eta, cutoff=s.cutoff_override)
    bound_Nc, bound_Ns = multiparam_bounds(H, s.M)
    row: Row = {
        "m": s.m,
        "N_c": s.N_c,
        "N_s": s.N_s,
        "bound_Nc": bound_Nc,
        "bound_Ns": bound_Ns,
        "single_param_bound_Nc": 1.0 / (s.M * fi_displacement_exact(s.m, s.N_c)),
        "single_param_bound_Ns": 1.0 / (s.M * fi_squeezing_exact(s.m, s.N_s)),
        "offdiag_ratio": H.offdiag_ratio,
    }
    if s.estimator == "joint":
        joint = _joint_row(s, n_jobs)
        row.update({key: joint[key] for key in ("mse_Nc", "stderr_Nc", "mse_Ns", "stderr_Ns")})
    return row


def run_fluctuation(s: Scenario, n_jobs: Optional[int] = None) -> Row:
    report = fluctuation_study(s.strength, s.sigma, _monte_carlo_scenario(s), s.fluctuation_mode, n_jobs)
    row = _base_row(s)
    row.update(
        sigma2=report.sigma2,
        realized_variance=report.realized_variance,
        mse=report.mse,
        cr_bound=report.cr_value,
        excess_error=report.excess_error,
        stderr_bar=report.stderr_bar,
    )
    return row


def run_moments(s: Scenario, n_jobs: Optional[int] = None) -> Row:
    report = displacement_moments(s.m, s.N_c, s.cutoff_override)
    return {
        "m": s.m,
        "N_c": s.N_c,
        "mean": report.mean,
        "variance": report.variance,
        "variance_printed": linearized_sensitivity(s.m, s.N_c, "first"),
        "snr": snr_displacement(s.m, s.N_c),
        "sensitivity_first_exact": linearized_sensitivity_from_distribution(s.m, s.N_c, "first"),
        "sensitivity_second": linearized_sensitivity(s.m, s.N_c, "second"),
        "sensitivity_second_exact": linearized_sensitivity_from_distribution(s.m, s.N_c, "second"),
    }


RUNNERS: Dict[str, Callable[[Scenario, Optional[int]], Row]] = {
    "fisher-scan": run_fisher_scan,
    "mle-sim": run_mle_sim,
    "loss-sim": run_loss_sim,
    "gaussian-compare": run_gaussian_compare,
    "multiparam": run_multiparam,
    "fluctuation": run_fluctuation,
    "moments": run_moments,
}


def truncation_loss(s: Scenario) -> float:
    """Вероятность, потерянная за пределами базиса, для выхода сценария при истинных параметрах."""
    params = s.params if s.kind == "multiparam" or s.estimator == "joint" else _single_params(s)
    if s.kind == "moments":
        params = ChannelParams(N_c=s.N_c)
    return channel_distribution(FockProbe(m=s.m), params, s.cutoff_override).truncation_loss


def run_row(s: Scenario, n_jobs: Optional[int] = None) -> Row:
    started = time.perf_counter()
    row = RUNNERS[s.kind](s, n_jobs)
    logger.debug("%s %s done in %.2fs", s.kind, s.name, time.perf_counter() - started)
    return row


def _metadata(name: str, scenarios: Sequence[Scenario], losses: Sequence[float]) -> Dict[str, str]:
    metadata = {
        "version": __version__,
        "scenarios": str(len(scenarios)),
        "seed": ",".join(sorted({str(s.seed) for s in scenarios})),
        "max_truncation_loss": format(max(losses, default=0.0), ".3e"),
    }
    if len(scenarios) == 1:
        metadata["scenario"] = " ".join(f"{key}={value}" for key, value in sorted(scenarios[0].echo().items()))
    else:
        metadata["scenario"] = name
    return metadata


def run_grid(
    name: str, scenarios: Sequence[Scenario], columns: Optional[Sequence[str]] = None, n_jobs: Optional[int] = None
) -> ResultTable:
    """
    Выполнить сетку сценариев и собрать таблицу.

    При n_jobs > 1 точки сетки считаются параллельно (каждая в один поток),
    порядок строк совпадает с порядком сетки.

    Args:
        name (str): Имя таблицы.
        scenarios (Sequence[Scenario]): Точки сетки.
        columns (Sequence[str]): Колонки таблицы; по умолчанию все колонки первой строки.
        n_jobs (int): Число процессов; по умолчанию settings.threads.

    Returns:
        ResultTable: Детерминированная таблица.

    Raises:
        PreconditionError: Пустая сетка или неизвестная колонка.
    """
    if not scenarios:
        raise PreconditionError(f"scenario grid '{name}' is empty")
    n_jobs = settings.threads if n_jobs is None else n_jobs
    logger.info("running %s: %d grid points", name, len(scenarios))
    if n_jobs > 1 and len(scenarios) > 1:
        rows: List[Row] = Parallel(n_jobs=n_jobs)(delayed(run_row)(s, 1) for s in scenarios)
    else:
        rows = [run_row(s, n_jobs) for s in scenarios]
    columns = list(columns or rows[0].keys())
    missing = sorted({column for row in rows for column in columns if column not in row})
    if missing:
        raise PreconditionError(f"columns {missing} not produced by kind '{scenarios[0].kind}'")
    losses = [truncation_loss(s) for s in scenarios]
    table = ResultTable(
        name=name,
        columns=columns,
        rows=[[row[column] for column in columns] for row in rows],
        metadata=_metadata(name, scenarios, losses),
    )
    logger.info("%s finished with %d rows", name, len(table.rows))
    return table


def run(scenario: Scenario, n_jobs: Optional[int] = None) -> ResultTable:
    """
    Выполнить один сценарий.

    Args:
        scenario (Scenario): Проверенный сценарий.
        n_jobs (int): Число процессов для Монте-Карло.

    Returns:
        ResultTable: Таблица из одной строки; колонки зависят от kind.
    """
    return run_grid(scenario.name, [scenario], n_jobs=n_jobs)
