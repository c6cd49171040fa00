import itertools
import logging
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from scipy.optimize import minimize_scalar
from scipy.stats import multinomial, truncnorm

from src.conf.config import settings
from src.schemas.Estimation_Schemas import (
    ErrorStats,
    Estimate,
    FluctuationReport,
    JointErrorStats,
    JointEstimate,
    MonteCarloScenario,
    TrialEnsemble,
)
from src.services.channels import ChannelModel, JointChannelModel, weak_limit_distribution
from src.services.errors import ConvergenceError, MetrologyError, PreconditionError, require
from src.services.fisher import fi_exact, lossy_fi
from src.services.hilbert import PhotonDistribution

logger = logging.getLogger(__name__)

GRID_POINTS = 64
JOINT_GRID_POINTS = 16
MAX_SWEEPS = 100
PRIOR_FLOOR = 1e-4
PRIOR_CEIL = 10.0
SQUEEZING_PRIOR_CEIL = 2.0

SeedLike = Union[int, np.random.Generator]


def trial_generator(seed: int, index: int) -> np.random.Generator:
    """Счетчиковый генератор для испытания ``index``: зависит только от (seed, index)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def _generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _as_probs(dist) -> np.ndarray:
    return np.asarray(dist.probs if isinstance(dist, PhotonDistribution) else dist, dtype=float)


def sample_counts(dist, M: int, seed: SeedLike) -> np.ndarray:
    """
    Мультиномиальная выборка исходов детектора с разрешением числа фотонов.

    Выборка берется из усеченного и перенормированного распределения, поэтому
    исходы за пределами базиса невозможны.

    Args:
        dist (PhotonDistribution | array): Распределение исходов.
        M (int): Число зондов, M >= 1.
        seed (int | np.random.Generator): Зерно или генератор.

    Returns:
        np.ndarray: Целочисленный вектор отсчетов с суммой M.
    """
    require(M >= 1, "sample_counts needs M >= 1")
    probs = _as_probs(dist)
    return _generator(seed).multinomial(M, probs / probs.sum())


def _log_probs(probs: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.clip(probs, 0.0, None))


def _loglik_from_log_probs(counts: np.ndarray, log_probs: np.ndarray) -> float:
    support = np.nonzero(counts)[0]
    if support.size and support[-1] >= log_probs.shape[-1]:
        return -np.inf
    return float(np.dot(log_probs[..., support], counts[support]))


def log_likelihood(counts, dist_at: Callable, theta: float) -> float:
    """
    Логарифм правдоподобия log L = Σ_k n_k log p(k|θ).

    Исход с n_k > 0 и p(k|θ) = 0 делает θ невозможным: возвращается -inf.
    """
    counts = np.asarray(counts)
    return _loglik_from_log_probs(counts, _log_probs(_as_probs(dist_at(theta))))


def default_prior(truth: float, kind: str = "displacement") -> Tuple[float, float]:
    """
    Априорный интервал [truth/10, 10·truth], ограниченный сверху.

    Для сжатия потолок ниже: при N_s = 2 хвост сжатого фокова состояния
    еще помещается в базис max_cutoff. Верхняя граница не меньше 2·truth.
    """
    ceil = PRIOR_CEIL if kind == "displacement" else SQUEEZING_PRIOR_CEIL
    lo = min(max(truth / 10, PRIOR_FLOOR), ceil)
    hi = max(min(max(truth * 10, PRIOR_FLOOR), ceil), 2 * truth)
    if hi <= lo:
        lo, hi = PRIOR_FLOOR, ceil
    return lo, hi


def _maximize(loglik: Callable[[float], float], grid: np.ndarray, grid_values: np.ndarray, lo: float, hi: float) -> Estimate:
    """Сетка выбирает отрезок, золотое сечение (или bounded у края) уточняет максимум."""
    tol = 1e-6 * hi
    best = int(np.argmax(grid_values))
    if not np.isfinite(grid_values[best]):
        raise ConvergenceError("likelihood vanishes on the whole prior range")

    def objective(theta: float) -> float:
        value = loglik(theta)
        return -value if np.isfinite(value) else np.inf

    if best in (0, len(grid) - 1):
        a, b = (grid[0], grid[1]) if best == 0 else (grid[-2], grid[-1])
        x = minimize_scalar(objective, bounds=(a, b), method="bounded", options={"xatol": tol / 10}).x
    else:
        a, b, c = grid[best - 1], grid[best], grid[best + 1]
        try:
            x = minimize_scalar(objective, bracket=(a, b, c), method="golden", options={"xtol": 1e-9}).x
            if not a <= x <= c:
                raise ValueError("golden section left the bracket")
        except ValueError:
            x = minimize_scalar(objective, bounds=(a, c), method="bounded", options={"xatol": tol / 10}).x
    if objective(x) > -grid_values[best]:
        x = grid[best]
    x = float(min(max(x, lo), hi))
    return Estimate(value=x, at_boundary=bool(x - lo <= tol or hi - x <= tol))


class SingleParameterEstimator:
    """
    Оценка максимального правдоподобия для одного параметра.

    Логарифмы вероятностей на 64-точечной геометрической сетке априорного
    интервала считаются один раз и переиспользуются во всех испытаниях.
    """

    def __init__(self, model: ChannelModel, prior: Tuple[float, float], grid_points: int = GRID_POINTS):
        lo, hi = prior
        require(0 < lo < hi, f"prior must satisfy 0 < lo < hi, got {prior}")
        require(hi <= model.theta_max * (1 + 1e-12), "prior exceeds the model range")
        self.model = model
        self.lo, self.hi = float(lo), float(hi)
        self.grid = np.geomspace(lo, hi, grid_points)
        self.grid_log_probs = np.array([_log_probs(model.probs(theta)) for theta in self.grid])

    def loglik(self, counts: np.ndarray, theta: float) -> float:
        return _loglik_from_log_probs(counts, _log_probs(self.model.probs(theta)))

    def estimate(self, counts) -> Estimate:
        counts = np.asarray(counts)
        support = np.nonzero(counts)[0]
        if support.size and support[-1] >= self.model.dim:
            raise ConvergenceError("counts fall outside the model basis")
        grid_values = self.grid_log_probs[:, support] @ counts[support]
        return _maximize(lambda t: self.loglik(counts, t), self.grid, grid_values, self.lo, self.hi)


def mle_single(counts, model: ChannelModel, prior: Tuple[float, float]) -> Estimate:
    """
    Оценка силы смещения или сжатия по отсчетам.

    Args:
        counts (array): Отсчеты по числу фотонов.
        model (ChannelModel): Модель канала с фиксированными m и eta.
        prior (tuple): Априорный интервал (lo, hi), 0 < lo < hi.

    Returns:
        Estimate: Значение и флаг попадания на границу интервала.
    """
    return SingleParameterEstimator(model, prior).estimate(counts)


def mle_weak(counts, m: int) -> Tuple[float, float]:
    """
    Оценки в слабом пределе:
    N_c = (n_{m-1} + n_{m+1}) / (M(2m+1)), N_s = 2(n_{m-2} + n_{m+2}) / (M(m²+m+1)).

    M - число исходов в окне m-2..m+2, остальные исходы игнорируются.
    """
    counts = np.asarray(counts)

    def n(k: int) -> int:
        return int(counts[k]) if 0 <= k < counts.size else 0

    M = sum(n(k) for k in range(m - 2, m + 3))
    if M == 0:
        return 0.0, 0.0
    Nc_est = (n(m - 1) + n(m + 1)) / (M * (2 * m + 1))
    Ns_est = 2 * (n(m - 2) + n(m + 2)) / (M * (m * m + m + 1))
    return Nc_est, Ns_est


def weak_estimator_expectation(
    m: int, N_c: float, N_s: float, M: int, enumerate_counts: bool = False
) -> Tuple[float, float]:
    """
    Точное математическое ожидание оценок mle_weak при выборке из
    пятиуровневой модели слабого канала.

    По линейности ожидания E[n_k] = M p_k; при enumerate_counts=True
    ожидание дополнительно считается прямым перебором всех исходов
    мультиномиального распределения (только для малых M).
    """
    require(M >= 1, "M must be >= 1")
    dist = weak_limit_distribution(m, N_c, N_s)
    probs = dist.probs
    if not enumerate_counts:
        return _expected_weak(probs, m)
    require(M <= 16, "explicit enumeration is limited to M <= 16")
    levels = [k for k in range(m - 2, m + 3) if k >= 0]
    law = multinomial(M, probs[levels] / probs[levels].sum())
    e_c = e_s = 0.0
    for split in itertools.product(range(M + 1), repeat=len(levels) - 1):
        rest = M - sum(split)
        if rest < 0:
            continue
        window = np.array(list(split) + [rest])
        counts = np.zeros(dist.dim, dtype=int)
        counts[levels] = window
        weight = law.pmf(window)
        Nc_est, Ns_est = mle_weak(counts, m)
        e_c += weight * Nc_est
        e_s += weight * Ns_est
    return e_c, e_s


def _expected_weak(probs: np.ndarray, m: int) -> Tuple[float, float]:
    def p(k: int) -> float:
        return float(probs[k]) if 0 <= k < probs.size else 0.0

    return (p(m - 1) + p(m + 1)) / (2 * m + 1), 2 * (p(m - 2) + p(m + 2)) / (m * m + m + 1)


def _coordinate_grid(lo: float, hi: float, points: int = JOINT_GRID_POINTS) -> np.ndarray:
    return np.geomspace(lo, hi, points)


def mle_joint(
    counts,
    m: int,
    prior_Nc: Tuple[float, float],
    prior_Ns: Tuple[float, float],
    model: Optional[JointChannelModel] = None,
) -> JointEstimate:
    """
    Совместная оценка (N_c, N_s) по распределению combined_distribution.

    Покоординатный поиск (сетка + золотое сечение по каждой координате),
    начиная с оценок слабого предела, обрезанных до априорных интервалов.
    Итерации останавливаются, когда обе координаты меняются меньше чем на
    1e-6·hi. При равенстве правдоподобий выбирается меньшее значение.

    Raises:
        ConvergenceError: Нет сходимости за 100 проходов.
    """
    (c_lo, c_hi), (s_lo, s_hi) = prior_Nc, prior_Ns
    require(0 < c_lo < c_hi and 0 < s_lo < s_hi, "priors must satisfy 0 < lo < hi")
    counts = np.asarray(counts)
    model = model or JointChannelModel(m, c_hi, s_hi)

    def loglik(N_c: float, N_s: float) -> float:
        return _loglik_from_log_probs(counts, _log_probs(model.probs(N_c, N_s)))

    start_c, start_s = mle_weak(counts, m)
    N_c = float(np.clip(start_c, c_lo, c_hi))
    N_s = float(np.clip(start_s, s_lo, s_hi))
    grid_c, grid_s = _coordinate_grid(c_lo, c_hi), _coordinate_grid(s_lo, s_hi)

    for sweep in range(1, MAX_SWEEPS + 1):
        values = np.array([loglik(x, N_s) for x in grid_c])
        est_c = _maximize(lambda x: loglik(x, N_s), grid_c, values, c_lo, c_hi)
        values = np.array([loglik(est_c.value, y) for y in grid_s])
        est_s = _maximize(lambda y: loglik(est_c.value, y), grid_s, values, s_lo, s_hi)
        shift_c, shift_s = abs(est_c.value - N_c), abs(est_s.value - N_s)
        N_c, N_s = est_c.value, est_s.value
        if shift_c <= 1e-6 * c_hi and shift_s <= 1e-6 * s_hi:
            return JointEstimate(
                Nc=N_c, Ns=N_s, Nc_at_boundary=est_c.at_boundary, Ns_at_boundary=est_s.at_boundary, sweeps=sweep
            )
    raise ConvergenceError(f"joint likelihood search did not converge in {MAX_SWEEPS} sweeps")


def _error_stats(estimates: np.ndarray, truth: float, boundary: np.ndarray) -> ErrorStats:
    ok = np.isfinite(estimates)
    errors = estimates[ok] - truth
    squared = errors ** 2
    trials = int(ok.sum())
    if trials < 2:
        raise ConvergenceError("fewer than two trials produced an estimate")
    return ErrorStats(
        mse=float(squared.mean()),
        stderr_bar=float(2 * squared.std(ddof=1) / np.sqrt(trials)),
        bias=float(errors.mean()),
        trials=trials,
        boundary_hits=int(boundary[ok].sum()),
        failures=int((~ok).sum()),
    )


class _TrialRunner:
    """Все, что нужно воркеру для блока испытаний; сериализуется для joblib."""

    def __init__(self, scenario: MonteCarloScenario):
        self.scenario = scenario
        params = scenario.params
        self.joint = scenario.estimator == "joint"
        if self.joint:
            prior_c = scenario.prior or default_prior(params.N_c, "displacement")
            prior_s = scenario.prior_Ns or default_prior(params.N_s, "squeezing")
            self.priors = (prior_c, prior_s)
            self.model = JointChannelModel(scenario.m, prior_c[1], prior_s[1], params.eta, scenario.cutoff)
            self.truth_probs = self.model.probs(params.N_c, params.N_s)
            return
        prior = scenario.prior or default_prior(scenario.truth, scenario.kind)
        theta_max = max(prior[1], scenario.truth)
        self.model = ChannelModel(scenario.m, scenario.kind, theta_max, params.eta, scenario.cutoff)
        self.truth_probs = self.model.probs(scenario.truth)
        self.estimator = SingleParameterEstimator(self.model, prior) if scenario.estimator == "mle" else None

    def probs_for(self, rng: np.random.Generator) -> np.ndarray:
        return self.truth_probs

    def counts_for(self, index: int) -> np.ndarray:
        rng = trial_generator(self.scenario.seed, index)
        return sample_counts(self.probs_for(rng), self.scenario.M, rng)

    def run_one(self, index: int) -> Tuple[float, float, bool, bool]:
        counts = self.counts_for(index)
        m = self.scenario.m
        try:
            if self.joint:
                est = mle_joint(counts, m, *self.priors, model=self.model)
                return est.Nc, est.Ns, est.Nc_at_boundary, est.Ns_at_boundary
            if self.estimator is None:
                Nc_est, Ns_est = mle_weak(counts, m)
                value = Nc_est if self.scenario.kind == "displacement" else Ns_est
                return value, np.nan, False, False
            est = self.estimator.estimate(counts)
            return est.value, np.nan, est.at_boundary, False
        except MetrologyError as exc:
            logger.debug("trial %d failed: %s", index, exc.detail)
            return np.nan, np.nan, False, False

    def run_block(self, indices: Sequence[int]) -> List[Tuple[float, float, bool, bool]]:
        return [self.run_one(i) for i in indices]


def simulate_ensemble(scenario: MonteCarloScenario) -> TrialEnsemble:
    """
    Отсчеты всех серий сценария без оценивания.

    Серия i использует тот же поток случайных чисел, что и в
    monte_carlo_error, поэтому отсчеты совпадают с теми, по которым
    строятся оценки.

    Returns:
        TrialEnsemble: trials векторов отсчетов с суммой M каждый.
    """
    runner = _TrialRunner(scenario)
    counts = [runner.counts_for(index).tolist() for index in range(scenario.trials)]
    return TrialEnsemble(counts=counts, M=scenario.M, trials=scenario.trials, seed=scenario.seed)


def _run_trials(runner: _TrialRunner, trials: int, n_jobs: Optional[int] = None) -> np.ndarray:
    n_jobs = settings.threads if n_jobs is None else n_jobs
    blocks = np.array_split(np.arange(trials), max(1, min(trials, 4 * max(n_jobs, 1))))
    if n_jobs == 1:
        results = [runner.run_block(block) for block in blocks]
    else:
        results = Parallel(n_jobs=n_jobs)(delayed(runner.run_block)(block) for block in blocks)
    return np.array([row for block in results for row in block], dtype=float)


def monte_carlo_error(scenario: MonteCarloScenario, n_jobs: Optional[int] = None) -> Union[ErrorStats, JointErrorStats]:
    """
    Монте-Карло оценка ошибки: trials независимых серий по M зондов.

    Каждая серия использует собственный поток случайных чисел, зависящий
    только от (seed, номер серии), поэтому результат не зависит от числа
    процессов. Ошибки оценщика в отдельных сериях учитываются как failures
    и не прерывают прогон.

    Args:
        scenario (MonteCarloScenario): Зонд, параметры канала, M, trials, seed, априорный интервал.
        n_jobs (int): Число процессов; по умолчанию settings.threads.

    Returns:
        ErrorStats | JointErrorStats: mse, bias, stderr_bar (и ковариация для совместной оценки).
    """
    runner = _TrialRunner(scenario)
    rows = _run_trials(runner, scenario.trials, n_jobs)
    if runner.joint:
        params = scenario.params
        stats_c = _error_stats(rows[:, 0], params.N_c, rows[:, 2].astype(bool))
        stats_s = _error_stats(rows[:, 1], params.N_s, rows[:, 3].astype(bool))
        ok = np.isfinite(rows[:, 0]) & np.isfinite(rows[:, 1])
        cov = np.cov(rows[ok, 0] - params.N_c, rows[ok, 1] - params.N_s)
        _log_summary(scenario, stats_c)
        return JointErrorStats(Nc=stats_c, Ns=stats_s, covariance=(cov[0, 0], cov[1, 1], cov[0, 1]))
    stats = _error_stats(rows[:, 0], scenario.truth, rows[:, 2].astype(bool))
    _log_summary(scenario, stats)
    return stats


def _log_summary(scenario: MonteCarloScenario, stats: ErrorStats) -> None:
    if stats.boundary_hits:
        logger.warning("%d of %d trials hit the prior boundary (m=%d, M=%d)", stats.boundary_hits, stats.trials, scenario.m, scenario.M)
    if stats.failures:
        logger.warning("%d trials failed to produce an estimate", stats.failures)


def truncated_normal(mean: float, sigma: float):
    """Нормальный закон N(mean, sigma²), усеченный на силах >= 0."""
    require(sigma > 0 and mean > 0, "truncated_normal needs mean > 0 and sigma > 0")
    return truncnorm(a=-mean / sigma, b=np.inf, loc=mean, scale=sigma)


def averaged_probs(model: ChannelModel, mean: float, sigma: float, nodes: int = 64) -> np.ndarray:
    """Распределение исходов, когда сила канала берется из усеченного нормального закона."""
    law = truncated_normal(mean, sigma)
    lo, hi = max(0.0, mean - 8 * sigma), mean + 8 * sigma
    x, w = np.polynomial.legendre.leggauss(nodes)
    thetas = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    weights = 0.5 * (hi - lo) * w * law.pdf(thetas)
    probs = sum(weight * model.probs(theta) for weight, theta in zip(weights, thetas))
    return probs / weights.sum()


class _FluctuatingRunner(_TrialRunner):
    def __init__(self, scenario: MonteCarloScenario, sigma: float, mode: str):
        self.sigma = sigma
        self.mode = mode
        mean = scenario.truth
        prior = scenario.prior or default_prior(mean, scenario.kind)
        upper = max(prior[1], mean + 8 * sigma)
        scenario = scenario.copy(update={"prior": (prior[0], upper)})
        super().__init__(scenario)
        if sigma > 0:
            self.law = truncated_normal(mean, sigma)
            if mode == "per_probe":
                self.truth_probs = averaged_probs(self.model, mean, sigma)

    def probs_for(self, rng: np.random.Generator) -> np.ndarray:
        if self.sigma == 0 or self.mode == "per_probe":
            return self.truth_probs
        theta = float(self.law.rvs(random_state=rng))
        return self.model.probs(theta)


def fluctuation_study(
    mean: float, sigma: float, scenario: MonteCarloScenario, mode: str = "per_trial", n_jobs: Optional[int] = None
) -> FluctuationReport:
    """
    Избыточная ошибка оценки при флуктуирующей силе канала.

    Сила берется из нормального распределения со средним mean и
    дисперсией sigma², обрезанного в нуле. В режиме "per_trial" одна сила
    разыгрывается на каждую серию из M зондов, в режиме "per_probe" на
    каждый зонд (что эквивалентно выборке из усредненного распределения).
    Отчет содержит mse минус 1/(M·F(mean)).

    Args:
        mean (float): Среднее значение силы.
        sigma (float): Стандартное отклонение, sigma >= 0.
        scenario (MonteCarloScenario): Остальные параметры прогона; оценщик "mle".
        mode (str): "per_trial" или "per_probe".

    Returns:
        FluctuationReport: Избыточная ошибка и ее погрешность.
    """
    require(sigma >= 0 and mean > 0, "fluctuation_study needs mean > 0 and sigma >= 0")
    if mode not in ("per_trial", "per_probe"):
        raise PreconditionError(f"unknown fluctuation mode '{mode}'")
    key = "N_c" if scenario.kind == "displacement" else "N_s"
    scenario = scenario.copy(update={"params": scenario.params.copy(update={key: mean}), "estimator": "mle"})
    runner = _FluctuatingRunner(scenario, sigma, mode)
    rows = _run_trials(runner, scenario.trials, n_jobs)
    stats = _error_stats(rows[:, 0], mean, rows[:, 2].astype(bool))
    cr_value = 1.0 / (scenario.M * _fisher_at_mean(scenario, mean))
    realized = float(runner.law.var()) if sigma > 0 else 0.0
    return FluctuationReport(
        excess_error=stats.mse - cr_value,
        stderr_bar=stats.stderr_bar,
        mse=stats.mse,
        cr_value=cr_value,
        sigma2=sigma ** 2,
        realized_variance=realized,
        mode=mode,
    )


def _fisher_at_mean(scenario: MonteCarloScenario, mean: float) -> float:
    if scenario.params.eta == 1:
        return fi_exact(scenario.m, scenario.kind, mean)
    return lossy_fi(scenario.m, scenario.kind, mean, scenario.params.eta)


def log_mse_slope(Ms: Sequence[float], mses: Sequence[float]) -> float:
    """Наклон log(mse) по log(M)."""
    slope, _ = np.polyfit(np.log(np.asarray(Ms, dtype=float)), np.log(np.asarray(mses, dtype=float)), 1)
    return float(slope)
