import logging
from typing import Callable, Optional, Tuple, Union

import numpy as np

from src.schemas.Estimation_Schemas import CRBound, FisherMatrix, MomentReport
from src.services.channels import ChannelModel, JointChannelModel, displacement_distribution
from src.services.errors import ConvergenceError, PreconditionError, SingularMatrixError, require
from src.services.hilbert import CutoffLike, DensityOperator, PhotonDistribution, fidelity, hermitian_eigen

logger = logging.getLogger(__name__)

ZERO_PROB = 1e-14
ZERO_DELTA = 1e-12
FI_STEP_RTOL = 1e-3
QFI_RTOL = 1e-2
QFI_ATOL = 1e-6
SLD_EIGEN_FLOOR = 1e-12

DistributionFamily = Callable[[float], Union[PhotonDistribution, np.ndarray]]
StateFamily = Callable[[float], DensityOperator]


def default_step(theta: float) -> float:
    return min(max(1e-5, theta * 1e-3), theta / 100)


def _aligned(*items) -> Tuple[np.ndarray, ...]:
    arrays = [np.asarray(item.probs if isinstance(item, PhotonDistribution) else item, dtype=float) for item in items]
    size = max(a.size for a in arrays)
    return tuple(np.pad(a, (0, size - a.size)) for a in arrays)


def _information_terms(p0: np.ndarray, deltas) -> Tuple[np.ndarray, list]:
    """Маска исходов для сумм Фишера; исход с нулевой вероятностью и ненулевой производной - ошибка."""
    small = p0 < ZERO_PROB
    for delta in deltas:
        if np.any(small & (np.abs(delta) >= ZERO_DELTA)):
            raise ConvergenceError("finite-difference step too large: an outcome with vanishing probability changes")
    keep = ~small
    return keep, [delta[keep] for delta in deltas]


def _central_fi(dist_at: DistributionFamily, theta: float, h: float) -> float:
    p0, plus, minus = _aligned(dist_at(theta), dist_at(theta + h), dist_at(theta - h))
    keep, (delta,) = _information_terms(p0, [plus - minus])
    derivative = delta / (2 * h)
    return float(np.sum(derivative ** 2 / p0[keep]))


def classical_fi(dist_at: DistributionFamily, theta: float, dtheta: Optional[float] = None) -> float:
    """
    Классическая информация Фишера F = Σ_n (∂p/∂θ)² / p.

    Производная берется центральной разностью на шагах dθ и dθ/2, результат
    уточняется экстраполяцией Ричардсона. Исходы с p < 1e-14 отбрасываются.

    Args:
        dist_at (callable): θ -> PhotonDistribution (или массив вероятностей).
        theta (float): Точка, theta > 0.
        dtheta (float): Шаг; по умолчанию min(max(1e-5, 1e-3·θ), θ/100).

    Returns:
        float: Информация Фишера.

    Raises:
        PreconditionError: theta <= 0 или dtheta > theta/100.
        ConvergenceError: Результат меняется больше чем на 0.1% при делении шага пополам.
    """
    require(theta > 0, "classical_fi needs theta > 0")
    h = default_step(theta) if dtheta is None else float(dtheta)
    require(0 < h <= theta / 100 * (1 + 1e-12), f"dtheta={h:.3g} must lie in (0, theta/100]")
    coarse = _central_fi(dist_at, theta, h)
    fine = _central_fi(dist_at, theta, h / 2)
    if abs(coarse - fine) > FI_STEP_RTOL * abs(fine) + 1e-12:
        raise ConvergenceError(f"classical FI step not converged: {coarse:.9g} vs {fine:.9g}")
    return (4 * fine - coarse) / 3


def fi_displacement_exact(m: int, N_c: float) -> float:
    require(m >= 0, "m must be >= 0")
    if N_c <= 0:
        raise PreconditionError("Fisher information diverges at N_c = 0")
    return (2 * m + 1) / N_c


def fi_squeezing_exact(m: int, N_s: float) -> float:
    require(m >= 0, "m must be >= 0")
    if N_s <= 0:
        raise PreconditionError("Fisher information diverges at N_s = 0")
    return (m * m + m + 1) / (2 * N_s)


def fi_exact(m: int, kind: str, strength: float) -> float:
    if kind == "displacement":
        return fi_displacement_exact(m, strength)
    if kind == "squeezing":
        return fi_squeezing_exact(m, strength)
    raise PreconditionError(f"unknown channel kind '{kind}'")


def amplitude_fi(m: int, kind: str) -> float:
    """Информация Фишера по |α| (8m+4) или по r (2(m²+m+1))."""
    if kind == "displacement":
        return 8 * m + 4
    return 2 * (m * m + m + 1)


def chain_rule_fi(F_amplitude: float, N: float) -> float:
    """
    Пересчет информации Фишера с амплитуды на энергию: F(N) = F(amp)/(4N).

    Args:
        F_amplitude (float): Информация по |α| или r.
        N (float): N_c или N_s, N > 0.

    Returns:
        float: Информация по N.
    """
    require(N > 0, "chain_rule_fi needs N > 0")
    return F_amplitude / (4 * N)


def _fidelity_qfi(state_at: StateFamily, rho0: DensityOperator, theta: float, h: float) -> float:
    return 4 * (1 - fidelity(rho0, state_at(theta + h))) / h ** 2


def qfi_fidelity(state_at: StateFamily, theta: float, dtheta: Optional[float] = None) -> float:
    """
    Квантовая информация Фишера через точность H = 4(1 - F(ρ_θ, ρ_{θ+dθ}))/dθ².

    Оценки на шагах dθ и dθ/2 объединяются экстраполяцией 2H(dθ/2) - H(dθ).

    Args:
        state_at (callable): θ -> DensityOperator на фиксированном базисе.
        theta (float): Точка.
        dtheta (float): Шаг; по умолчанию как в classical_fi.

    Returns:
        float: Квантовая информация Фишера.

    Raises:
        ConvergenceError: Оценки на двух шагах расходятся больше чем на 1%.
    """
    require(theta > 0, "qfi_fidelity needs theta > 0")
    h = default_step(theta) if dtheta is None else float(dtheta)
    rho0 = state_at(theta)
    coarse = _fidelity_qfi(state_at, rho0, theta, h)
    fine = _fidelity_qfi(state_at, rho0, theta, h / 2)
    if abs(coarse - fine) > QFI_RTOL * abs(fine) + QFI_ATOL:
        raise ConvergenceError(f"fidelity QFI not converged: {coarse:.6g} vs {fine:.6g}")
    return max(2 * fine - coarse, 0.0)


def _sld_qfi(values: np.ndarray, vectors: np.ndarray, plus: DensityOperator, minus: DensityOperator, h: float) -> float:
    drho = (plus.matrix - minus.matrix) / (2 * h)
    projected = vectors.conj().T @ drho @ vectors
    denom = values[:, None] + values[None, :]
    mask = denom > SLD_EIGEN_FLOOR
    return float(np.sum(2 * np.abs(projected[mask]) ** 2 / denom[mask]))


def qfi_sld(state_at: StateFamily, theta: float, dtheta: Optional[float] = None) -> float:
    """
    Квантовая информация Фишера через симметричную логарифмическую производную.

    H = Σ_{n,m} 2|⟨ψ_n|∂ρ|ψ_m⟩|² / (ρ_n + ρ_m) по парам с ρ_n + ρ_m > 1e-12;
    ∂ρ берется центральной разностью, шаги dθ и dθ/2 объединяются по Ричардсону.

    Raises:
        ConvergenceError: Оценки на двух шагах расходятся больше чем на 1%.
    """
    require(theta > 0, "qfi_sld needs theta > 0")
    h = default_step(theta) if dtheta is None else float(dtheta)
    values, vectors = hermitian_eigen(state_at(theta).matrix)
    coarse = _sld_qfi(values, vectors, state_at(theta + h), state_at(theta - h), h)
    fine = _sld_qfi(values, vectors, state_at(theta + h / 2), state_at(theta - h / 2), h / 2)
    if abs(coarse - fine) > QFI_RTOL * abs(fine) + QFI_ATOL:
        raise ConvergenceError(f"SLD QFI not converged: {coarse:.6g} vs {fine:.6g}")
    return max((4 * fine - coarse) / 3, 0.0)


def _matrix_entries(model: JointChannelModel, N_c: float, N_s: float, hc: float, hs: float) -> np.ndarray:
    p0 = model.probs(N_c, N_s)
    delta_c = model.probs(N_c + hc, N_s) - model.probs(N_c - hc, N_s)
    delta_s = model.probs(N_c, N_s + hs) - model.probs(N_c, N_s - hs)
    keep, (delta_c, delta_s) = _information_terms(p0, [delta_c, delta_s])
    dc, ds, p = delta_c / (2 * hc), delta_s / (2 * hs), p0[keep]
    return np.array([np.sum(dc * dc / p), np.sum(ds * ds / p), np.sum(dc * ds / p)])


def fisher_matrix(
    m: int,
    N_c: float,
    N_s: float,
    dtheta: Optional[Tuple[float, float]] = None,
    eta: float = 1.0,
    cutoff: CutoffLike = None,
) -> FisherMatrix:
    """
    Матрица Фишера для совместной оценки (N_c, N_s) по распределению
    combined_distribution.

    H_xy = Σ_n (1/p)(∂p/∂x)(∂p/∂y), производные центральными разностями,
    шаги (dθ, dθ/2) с экстраполяцией Ричардсона.

    Args:
        m (int): Число фотонов в зонде.
        N_c (float): Сила смещения, > 0.
        N_s (float): Сила сжатия, > 0.
        dtheta (tuple): Шаги по N_c и N_s.
        eta (float): Пропускание перед каналом.
        cutoff (FockCutoff | int | None): Размер базиса.

    Returns:
        FisherMatrix: Симметричная матрица 2x2.

    Raises:
        ConvergenceError: Элементы меняются больше чем на 0.1% при делении шага.
    """
    require(N_c > 0 and N_s > 0, "fisher_matrix needs N_c > 0 and N_s > 0")
    hc, hs = (default_step(N_c), default_step(N_s)) if dtheta is None else dtheta
    model = JointChannelModel(m, N_c * 1.02, N_s * 1.02, eta, cutoff)
    coarse = _matrix_entries(model, N_c, N_s, hc, hs)
    fine = _matrix_entries(model, N_c, N_s, hc / 2, hs / 2)
    scale = np.array([fine[0], fine[1], np.sqrt(abs(fine[0] * fine[1]))])
    if np.any(np.abs(coarse - fine) > FI_STEP_RTOL * scale + 1e-12):
        raise ConvergenceError("Fisher matrix step not converged")
    h_cc, h_ss, h_cs = (4 * fine - coarse) / 3
    return FisherMatrix(h_cc=h_cc, h_ss=h_ss, h_cs=h_cs)


def multiparam_bounds(H: FisherMatrix, M: int) -> Tuple[float, float]:
    """
    Границы Крамера-Рао для каждого параметра при совместной оценке.

    Δ²N_c >= h_ss/(M·det H), Δ²N_s >= h_cc/(M·det H).

    Raises:
        SingularMatrixError: det H <= 0.
    """
    require(M >= 1, "M must be >= 1")
    det = H.det
    if det <= 0:
        raise SingularMatrixError(f"Fisher matrix is singular (det={det:.3e})")
    return H.h_ss / (M * det), H.h_cc / (M * det)


def relative_error(F: float, N: float) -> float:
    require(F > 0 and N > 0, "relative_error needs F > 0 and N > 0")
    return 1.0 / (F * N)


def cr_bound(F: float, M: int) -> CRBound:
    require(F > 0 and M >= 1, "cr_bound needs F > 0 and M >= 1")
    return CRBound(variance_bound=1.0 / (M * F), M=M, F=F)


def lossy_fi(m: int, kind: str, strength: float, eta: float, cutoff: CutoffLike = None) -> float:
    """Классическая FI цепочки потери(eta) -> канал -> счет фотонов."""
    model = ChannelModel(m, kind, strength * 1.02, eta, cutoff)
    return classical_fi(model, strength)


def snr_displacement(m: int, N_c: float) -> float:
    require(N_c > 0, "snr_displacement needs N_c > 0")
    return float(np.sqrt(N_c / (2 * (m + 1))))


def linearized_sensitivity(m: int, N_c: float, moment: str = "first") -> float:
    """
    Чувствительность оценки N_c по среднему числу фотонов или по второму моменту.

    Args:
        m (int): Число фотонов в зонде.
        N_c (float): Сила смещения.
        moment (str): "first" дает 2N_c(m+1); "second" дает точное выражение
            Var(n²)/(∂⟨n²⟩/∂N_c)² с Var(n²) = 2(4m+1)N³ + (18m²+2m+3)N² + (8m³+2m²+6m+1)N.

    Returns:
        float: Линеаризованная дисперсия оценки.
    """
    require(N_c > 0, "linearized_sensitivity needs N_c > 0")
    if moment == "first":
        return 2 * N_c * (m + 1)
    if moment == "second":
        n = N_c
        variance = 2 * (4 * m + 1) * n ** 3 + (18 * m * m + 2 * m + 3) * n ** 2 + (8 * m ** 3 + 2 * m * m + 6 * m + 1) * n
        slope = 2 * (2 * m + 1) + 2 * n
        return variance / slope ** 2
    raise PreconditionError(f"moment must be 'first' or 'second', got '{moment}'")


def displacement_moments(m: int, N_c: float, cutoff: CutoffLike = None) -> MomentReport:
    dist = displacement_distribution(m, N_c, cutoff)
    second = dist.moment(2)
    return MomentReport(
        mean=dist.mean(),
        variance=dist.variance(),
        second_moment_variance=dist.moment(4) - second ** 2,
    )


def linearized_sensitivity_from_distribution(m: int, N_c: float, moment: str = "first") -> float:
    """Var(O)/(∂⟨O⟩/∂N_c)² для O = n или n², моменты берутся из displacement_distribution."""
    require(N_c > 0, "linearized_sensitivity_from_distribution needs N_c > 0")
    power = {"first": 1, "second": 2}.get(moment)
    if power is None:
        raise PreconditionError(f"moment must be 'first' or 'second', got '{moment}'")
    h = default_step(N_c)
    model = ChannelModel(m, "displacement", N_c * 1.02)
    center = model(N_c)
    slope = (model(N_c + h).moment(power) - model(N_c - h).moment(power)) / (2 * h)
    variance = center.moment(2 * power) - center.moment(power) ** 2
    return variance / slope ** 2
