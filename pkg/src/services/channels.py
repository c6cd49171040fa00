import logging
import math
from typing import Optional, Tuple

import numpy as np
from scipy.special import gammaln
from scipy.stats import binom

from src.conf.config import settings
from src.schemas.Channel_Schemas import ChannelParams, FockProbe, GaussianProbe, MixtureProbe, ProbeState
from src.services.errors import ConvergenceError, PreconditionError, TruncationError, require
from src.services.hilbert import (
    CutoffLike,
    DensityOperator,
    FockCutoff,
    PhotonDistribution,
    adaptive_cutoff,
    displacement_column,
    displacement_matrix,
    hermitian_eigen,
    squeeze_column,
    squeeze_matrix,
)

logger = logging.getLogger(__name__)

KINDS = ("displacement", "squeezing")
KRAUS_RESIDUAL = 1e-12


def _check_kind(kind: str) -> None:
    if kind not in KINDS:
        raise PreconditionError(f"unknown channel kind '{kind}', expected one of {KINDS}")


def mean_photon_added(kind: str, strength: float) -> float:
    """
    Среднее число фотонов, которое операция добавляет к вакууму.

    Args:
        kind (str): "displacement" или "squeezing".
        strength (float): N_c или N_s.

    Returns:
        float: N_c для смещения, sinh²(√N_s) для сжатия.

    Example:
        >>> mean_photon_added("squeezing", 1.0)
        1.3810978455418157
    """
    _check_kind(kind)
    require(strength >= 0, "strength must be >= 0")
    if kind == "displacement":
        return float(strength)
    return math.sinh(math.sqrt(strength)) ** 2


def _output_mean(probe_mean: float, N_c: float, N_s: float) -> float:
    return probe_mean + (2 * probe_mean + 1) * math.sinh(math.sqrt(N_s)) ** 2 + N_c


def _transfer(weights: np.ndarray, dim: int, N_c: float, N_s: float) -> np.ndarray:
    """Сжатие, затем смещение диагонального входа с весами по 0..len-1."""
    support = [(k, w) for k, w in enumerate(weights) if w > 0]
    if N_s > 0:
        r = math.sqrt(N_s)
        out = sum(w * squeeze_column(dim, r, k) ** 2 for k, w in support)
    else:
        out = np.zeros(dim)
        for k, w in support:
            out[k] += w
    if N_c > 0:
        amp = math.sqrt(N_c)
        if N_s > 0:
            out = displacement_matrix(dim, amp) ** 2 @ out
        else:
            out = sum(w * displacement_column(dim, amp, k) ** 2 for k, w in support)
    return out


def _diagonal_channel(
    weights: np.ndarray, N_c: float, N_s: float, cutoff: CutoffLike, what: str
) -> PhotonDistribution:
    weights = np.asarray(weights, dtype=float)
    top = int(np.max(np.nonzero(weights)[0], initial=0))
    probe_mean = float(np.dot(np.arange(weights.size), weights))
    mean = _output_mean(probe_mean, N_c, N_s)

    def build(dim: int):
        if dim <= top:
            return None, 1.0
        probs = _transfer(weights, dim, N_c, N_s)
        dist = PhotonDistribution.from_probs(probs)
        return dist, dist.truncation_loss

    return adaptive_cutoff(build, cutoff, FockCutoff.default(top, mean), what)


def displacement_distribution(m: int, N_c: float, cutoff: CutoffLike = None) -> PhotonDistribution:
    """
    Распределение числа фотонов после фазово-рандомизированного смещения зонда |m⟩.

    p(n) = (m!/n!) e^{-N_c} N_c^{n-m} [L_m^{(n-m)}(N_c)]² для n >= m, ветка n < m
    получается из симметрии матричных элементов.

    Args:
        m (int): Число фотонов в зонде.
        N_c (float): Сила смещения (добавленная энергия в фотонах).
        cutoff (FockCutoff | int | None): Размер базиса; None включает адаптивный подбор.

    Returns:
        PhotonDistribution: Распределение с указанной потерей усечения.

    Raises:
        TruncationError: Если потеря при заданном cutoff больше 1e-8.
    """
    require(m >= 0 and N_c >= 0, "displacement_distribution needs m >= 0 and N_c >= 0")
    return _diagonal_channel(PhotonDistribution.delta(m).probs, N_c, 0.0, cutoff, "displacement")


def squeezing_distribution(m: int, N_s: float, cutoff: CutoffLike = None) -> PhotonDistribution:
    """
    Распределение числа фотонов после фазово-рандомизированного сжатия зонда |m⟩.

    Исходы с четностью, отличной от m, имеют строго нулевую вероятность.

    Args:
        m (int): Число фотонов в зонде.
        N_s (float): Сила сжатия, r = √N_s.
        cutoff (FockCutoff | int | None): Размер базиса.

    Returns:
        PhotonDistribution: Распределение с указанной потерей усечения.

    Raises:
        TruncationError: Если потеря при заданном cutoff больше 1e-8.
    """
    require(m >= 0 and N_s >= 0, "squeezing_distribution needs m >= 0 and N_s >= 0")
    return _diagonal_channel(PhotonDistribution.delta(m).probs, 0.0, N_s, cutoff, "squeezing")


def lossy_probe(m: int, eta: float) -> MixtureProbe:
    """Зонд |m⟩ после канала потерь с пропусканием eta: биномиальная смесь binomial(m, eta)."""
    require(m >= 0 and 0 < eta <= 1, "lossy_probe needs m >= 0 and eta in (0, 1]")
    return MixtureProbe(weights=list(binom.pmf(np.arange(m + 1), m, eta)))


def mixture_distribution(weights: PhotonDistribution, params: ChannelParams, cutoff: CutoffLike = None) -> PhotonDistribution:
    return _diagonal_channel(weights.probs, params.N_c, params.N_s, cutoff, "mixture")


def combined_distribution(m: int, params: ChannelParams, cutoff: CutoffLike = None) -> PhotonDistribution:
    """
    Распределение после сжатия и затем смещения: p(n|m) = Σ_k w(n|k) q(k|m).

    При eta < 1 потери действуют на зонд до канала.

    Args:
        m (int): Число фотонов в зонде.
        params (ChannelParams): N_c, N_s и eta.
        cutoff (FockCutoff | int | None): Размер базиса.

    Returns:
        PhotonDistribution: Диагональное выходное распределение.
    """
    require(m >= 0, "combined_distribution needs m >= 0")
    return channel_distribution(FockProbe(m=m), params, cutoff)


def channel_distribution(probe: ProbeState, params: ChannelParams, cutoff: CutoffLike = None) -> PhotonDistribution:
    if isinstance(probe, GaussianProbe):
        from src.services.gaussian import gaussian_output_distribution

        return gaussian_output_distribution(probe, params, cutoff)
    if isinstance(probe, FockProbe):
        weights = probe.distribution() if params.eta == 1 else lossy_probe(probe.m, params.eta).distribution()
    elif isinstance(probe, MixtureProbe):
        weights = loss_distribution(probe.distribution(), params.eta)
    else:
        raise PreconditionError(f"unsupported probe {type(probe).__name__}")
    return mixture_distribution(weights, params, cutoff)


def weak_limit_distribution(m: int, N_c: float, N_s: float) -> PhotonDistribution:
    """
    Пятиуровневая модель слабого канала на исходах m-2..m+2.

    Веса: p(m∓1) = N_c·m, N_c·(m+1); p(m∓2) = N_s·m(m-1)/4, N_s·(m+1)(m+2)/4;
    p(m) забирает остаток, чтобы сумма была ровно 1. Уровни ниже нуля
    отсутствуют и их вес равен нулю.

    Args:
        m (int): Число фотонов в зонде.
        N_c (float): Сила смещения.
        N_s (float): Сила сжатия.

    Returns:
        PhotonDistribution: Распределение на 0..m+2.

    Raises:
        PreconditionError: Если N_c(2m+1) + N_s(m²+m+1)/2 >= 0.5.
    """
    params = ChannelParams(N_c=N_c, N_s=N_s)
    require(m >= 0, "weak_limit_distribution needs m >= 0")
    load = params.weak_limit_load(m)
    if load >= 0.5:
        raise PreconditionError(f"weak-limit precondition violated: N_c(2m+1) + N_s(m^2+m+1)/2 = {load:.4g} >= 0.5")
    probs = np.zeros(m + 3)
    side = {
        m - 2: N_s * m * (m - 1) / 4,
        m - 1: N_c * m,
        m + 1: N_c * (m + 1),
        m + 2: N_s * (m + 1) * (m + 2) / 4,
    }
    for n, weight in side.items():
        if n >= 0:
            probs[n] = max(weight, 0.0)
    probs[m] = 0.0
    probs[m] = 1.0 - probs.sum()
    return PhotonDistribution(probs, FockCutoff(m + 3), 0.0)


def loss_distribution(dist: PhotonDistribution, eta: float) -> PhotonDistribution:
    """
    Потери на диагональном состоянии: биномиальное прореживание.

    p'(k) = Σ_{n>=k} p(n) C(n,k) η^k (1-η)^{n-k}.

    Args:
        dist (PhotonDistribution): Входное распределение.
        eta (float): Пропускание, 0 < eta <= 1.

    Returns:
        PhotonDistribution: Распределение того же размера.
    """
    require(0 < eta <= 1, "eta must lie in (0, 1]")
    if eta == 1:
        return dist
    n = np.arange(dist.dim)
    thinning = binom.pmf(n[:, None], n[None, :], eta)
    return PhotonDistribution(thinning @ dist.probs, dist.cutoff, dist.truncation_loss)


def loss_density(rho: DensityOperator, eta: float) -> DensityOperator:
    """
    Потери на произвольном состоянии через сумму Краусса Σ_k A_k ρ A_k†.

    (A_k ρ A_k†)_{ij} = ρ_{i+k,j+k} √(C(i+k,k) C(j+k,k)) η^{(i+j)/2} (1-η)^k.
    Сумма обрывается, когда остаток следа меньше 1e-12.

    Args:
        rho (DensityOperator): Входное состояние.
        eta (float): Пропускание, 0 < eta <= 1.

    Returns:
        DensityOperator: Выходное состояние.
    """
    require(0 < eta <= 1, "eta must lie in (0, 1]")
    if eta == 1:
        return rho
    dim = rho.dim
    matrix = rho.matrix
    out = np.zeros((dim, dim), dtype=complex)
    total = rho.trace()
    collected = 0.0
    for k in range(dim):
        i = np.arange(dim - k)
        log_coeff = 0.5 * (gammaln(i + k + 1.0) - gammaln(i + 1.0) - gammaln(k + 1.0))
        log_coeff += 0.5 * i * math.log(eta) + 0.5 * k * math.log1p(-eta)
        coeff = np.exp(log_coeff)
        term = coeff[:, None] * matrix[k:, k:] * coeff[None, :]
        out[: dim - k, : dim - k] += term
        collected += float(np.real(np.trace(term)))
        if total - collected < KRAUS_RESIDUAL:
            break
    return DensityOperator(out, rho.cutoff, rho.truncation_loss)


def _operator(kind: str, strength: float, dim: int) -> np.ndarray:
    if kind == "displacement":
        return displacement_matrix(dim, math.sqrt(strength))
    return squeeze_matrix(dim, math.sqrt(strength))


def _quadrature_sum(columns: np.ndarray, op: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """Σ_j Ψ_j Ψ_j† при Ψ_j = R(φ_j) U R†(φ_j) · columns."""
    dim = op.shape[0]
    n = np.arange(dim)
    acc = np.zeros((dim, dim), dtype=complex)
    for phi in phases:
        rotor = np.exp(1j * phi * n)
        psi = rotor[:, None] * (op @ (rotor.conj()[:, None] * columns))
        acc += psi @ psi.conj().T
    return acc


def phase_randomized_output(
    probe: DensityOperator,
    kind: str,
    strength: float,
    K: Optional[int] = None,
    adaptive: bool = True,
) -> DensityOperator:
    """
    Выход фазово-рандомизированного канала для произвольного (в т.ч. фазочувствительного) зонда.

    Интеграл по фазе заменяется равномерной квадратурой на узлах φ_j = 2πj/K;
    поворот операции сводится к сопряжению диагональной фазой, поэтому нужна
    только матрица с вещественной амплитудой. При adaptive=True число узлов
    удваивается (старые узлы переиспользуются), пока изменение выхода по
    max-норме не станет меньше settings.quadrature_tolerance.

    Args:
        probe (DensityOperator): Входное состояние.
        kind (str): "displacement" или "squeezing".
        strength (float): N_c или N_s.
        K (int): Начальное число узлов, степень двойки >= 8.
        adaptive (bool): Удваивать K до сходимости.

    Returns:
        DensityOperator: Выходное состояние.

    Raises:
        ConvergenceError: Если сходимость не достигнута при K = settings.quadrature_max_points.
        TruncationError: Если операция выносит за базис больше 1e-8 вероятности.
    """
    _check_kind(kind)
    require(strength >= 0, "strength must be >= 0")
    K = settings.quadrature_min_points if K is None else int(K)
    require(K >= 8 and K & (K - 1) == 0, f"K must be a power of two >= 8, got {K}")
    if strength == 0:
        return probe

    values, vectors = hermitian_eigen(probe.matrix)
    keep = values > 1e-15
    columns = vectors[:, keep] * np.sqrt(values[keep])
    op = _operator(kind, strength, probe.dim)

    acc = _quadrature_sum(columns, op, 2 * np.pi * np.arange(K) / K)
    current = acc / K
    while adaptive:
        if K >= settings.quadrature_max_points:
            raise ConvergenceError(f"phase quadrature did not converge at K={K}")
        new_phases = 2 * np.pi * (2 * np.arange(K) + 1) / (2 * K)
        acc = acc + _quadrature_sum(columns, op, new_phases)
        K *= 2
        refined = acc / K
        change = float(np.max(np.abs(refined - current)))
        current = refined
        logger.debug("phase quadrature K=%d change=%.3e", K, change)
        if change < settings.quadrature_tolerance:
            break

    loss = 1.0 - float(np.real(np.trace(current)))
    if loss - probe.truncation_loss > settings.truncation_tolerance:
        raise TruncationError("phase-randomized output leaves the basis", loss, probe.dim)
    return DensityOperator(current, probe.cutoff, max(loss, 0.0))


def exact_quadrature_points(dim: int) -> int:
    """Наименьшая степень двойки >= 2·dim; при таком K среднее по фазе точное."""
    return max(settings.quadrature_min_points, 1 << (2 * dim - 1).bit_length())


def loss_after_channel_distribution(m: int, N_c: float, eta: float, cutoff: CutoffLike = None) -> PhotonDistribution:
    return loss_distribution(displacement_distribution(m, N_c, cutoff), eta)


def loss_before_channel_distribution(m: int, N_c: float, eta: float, cutoff: CutoffLike = None) -> PhotonDistribution:
    return channel_distribution(FockProbe(m=m), ChannelParams(N_c=N_c, eta=eta), cutoff)


class ChannelModel:
    """
    Семейство θ -> p(·|θ) на фиксированном базисе.

    Базис подбирается один раз при theta_max, после чего все вызовы
    (конечные разности, правдоподобие) используют одну и ту же размерность.
    Потери, если eta < 1, действуют на зонд до канала.
    """

    def __init__(self, m: int, kind: str, theta_max: float, eta: float = 1.0, cutoff: CutoffLike = None):
        _check_kind(kind)
        require(m >= 0 and theta_max > 0, "ChannelModel needs m >= 0 and theta_max > 0")
        self.m = m
        self.kind = kind
        self.eta = eta
        self.theta_max = theta_max
        self.weights = (lossy_probe(m, eta).distribution() if eta < 1 else PhotonDistribution.delta(m)).probs
        reference = self._distribution(theta_max, cutoff)
        self.dim = reference.dim

    def _params(self, theta: float) -> Tuple[float, float]:
        return (theta, 0.0) if self.kind == "displacement" else (0.0, theta)

    def _distribution(self, theta: float, cutoff: CutoffLike) -> PhotonDistribution:
        N_c, N_s = self._params(theta)
        return _diagonal_channel(self.weights, N_c, N_s, cutoff, f"{self.kind} model")

    def probs(self, theta: float) -> np.ndarray:
        require(theta >= 0, "strength must be >= 0")
        N_c, N_s = self._params(theta)
        return _transfer(self.weights, self.dim, N_c, N_s)

    def __call__(self, theta: float) -> PhotonDistribution:
        return PhotonDistribution.from_probs(self.probs(theta))


class JointChannelModel:
    """(N_c, N_s) -> p(·|N_c, N_s) for the combined channel on a fixed basis."""

    def __init__(self, m: int, Nc_max: float, Ns_max: float, eta: float = 1.0, cutoff: CutoffLike = None):
        require(m >= 0 and Nc_max >= 0 and Ns_max >= 0, "JointChannelModel needs nonnegative arguments")
        self.m = m
        self.eta = eta
        self.weights = (lossy_probe(m, eta).distribution() if eta < 1 else PhotonDistribution.delta(m)).probs
        reference = _diagonal_channel(self.weights, Nc_max, Ns_max, cutoff, "joint model")
        self.dim = reference.dim

    def probs(self, N_c: float, N_s: float) -> np.ndarray:
        require(N_c >= 0 and N_s >= 0, "strengths must be >= 0")
        return _transfer(self.weights, self.dim, N_c, N_s)

    def __call__(self, N_c: float, N_s: float) -> PhotonDistribution:
        return PhotonDistribution.from_probs(self.probs(N_c, N_s))
