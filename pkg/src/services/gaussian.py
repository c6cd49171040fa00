import logging
import math
from typing import Dict, List, Sequence, Tuple

import numpy as np

from src.schemas.Channel_Schemas import ChannelParams, GaussianProbe
from src.services.channels import (
    exact_quadrature_points,
    loss_density,
    mixture_distribution,
    phase_randomized_output,
)
from src.services.errors import ConvergenceError, PreconditionError, TruncationError, require
from src.services.fisher import classical_fi, qfi_fidelity, qfi_sld
from src.services.hilbert import (
    CutoffLike,
    DensityOperator,
    FockCutoff,
    PhotonDistribution,
    adaptive_cutoff,
    annihilation,
    displacement_matrix,
    squeeze_column,
)

logger = logging.getLogger(__name__)

FAMILIES = ("coherent", "squeezed")
SEARCH_CEILING = 50.0
MATCH_RTOL = 1e-2
CROSS_CHECK_RTOL = 1e-2


def _probe_ket(probe: GaussianProbe, dim: int) -> np.ndarray:
    work = 2 * dim + 15
    ket = displacement_matrix(work, probe.beta) @ squeeze_column(work, probe.zeta, 0)
    return ket[:dim]


def gaussian_probe_density(probe: GaussianProbe, cutoff: CutoffLike = None) -> DensityOperator:
    """
    Смещенный сжатый вакуум D(β)S(ζ)|0⟩ как матрица плотности.

    Кет строится на вдвое большем рабочем базисе и обрезается до cutoff,
    потеря нормы записывается в truncation_loss.

    Args:
        probe (GaussianProbe): Параметры β и ζ.
        cutoff (FockCutoff | int | None): Размер базиса.

    Returns:
        DensityOperator: Чистое состояние.

    Raises:
        TruncationError: Если потеря нормы при заданном cutoff больше 1e-8.
    """

    def build(dim: int):
        ket = _probe_ket(probe, dim)
        rho = DensityOperator.from_ket(ket)
        return rho, rho.truncation_loss

    start = FockCutoff.default(0, probe.mean_photon + 2 * probe.mean_photon ** 2)
    return adaptive_cutoff(build, cutoff, start, "gaussian probe")


def phase_randomized_gaussian_distribution(probe: GaussianProbe, cutoff: CutoffLike = None) -> PhotonDistribution:
    """Распределение зонда по числу фотонов; фазовая рандомизация оставляет ровно диагональ."""
    return gaussian_probe_density(probe, cutoff).number_distribution()


def _output_mean(probe: GaussianProbe, kind: str, strength: float) -> float:
    n = probe.mean_photon
    if kind == "displacement":
        return n + strength
    return n + (2 * n + 1) * math.sinh(math.sqrt(strength)) ** 2


class ChannelStateFamily:
    """
    θ -> выход фазово-рандомизированного канала для фиксированного зонда.

    Квадратура берется точной (K >= 2·dim) и одинаковой для всех θ,
    поэтому состояния семейства сравнимы между собой.
    """

    def __init__(self, rho_in: DensityOperator, kind: str):
        self.rho_in = rho_in
        self.kind = kind
        self.dim = rho_in.dim
        self.K = exact_quadrature_points(self.dim)

    def __call__(self, theta: float) -> DensityOperator:
        out = phase_randomized_output(self.rho_in, self.kind, theta, self.K, adaptive=False)
        return out.renormalized()


def gaussian_family(probe: GaussianProbe, kind: str, theta_max: float, cutoff: CutoffLike = None) -> ChannelStateFamily:
    """Семейство для гауссова зонда на базисе, вмещающем выход при theta_max."""

    def build(dim: int):
        try:
            rho_in = gaussian_probe_density(probe, dim)
            out = phase_randomized_output(rho_in, kind, theta_max, exact_quadrature_points(dim), adaptive=False)
        except TruncationError as exc:
            return None, exc.loss
        return rho_in, out.truncation_loss

    start = FockCutoff.default(0, _output_mean(probe, kind, theta_max))
    return ChannelStateFamily(adaptive_cutoff(build, cutoff, start, f"gaussian {kind} family"), kind)


def qfi_of_family(family: ChannelStateFamily, strength: float, cross_check: bool = True) -> float:
    value = qfi_fidelity(family, strength)
    if cross_check:
        check = qfi_sld(family, strength)
        if abs(value - check) > CROSS_CHECK_RTOL * max(abs(value), abs(check)) + 1e-6:
            raise ConvergenceError(f"fidelity QFI {value:.6g} disagrees with SLD QFI {check:.6g}")
    return value


def qfi_density(rho_in: DensityOperator, kind: str, strength: float, cross_check: bool = True) -> float:
    """QFI произвольного зонда в фазово-рандомизированном канале на базисе самого зонда."""
    require(strength > 0, "qfi_density needs strength > 0")
    return qfi_of_family(ChannelStateFamily(rho_in, kind), strength, cross_check)


def qfi_gaussian(probe: GaussianProbe, kind: str, strength: float, cross_check: bool = True, cutoff: CutoffLike = None) -> float:
    """
    Квантовая информация Фишера гауссова зонда в фазово-рандомизированном канале.

    Считается через точность (qfi_fidelity) и, при cross_check, сверяется
    с оценкой через SLD (qfi_sld).

    Args:
        probe (GaussianProbe): Зонд.
        kind (str): "displacement" или "squeezing".
        strength (float): N_c или N_s, > 0.
        cross_check (bool): Сверять с qfi_sld.

    Returns:
        float: Квантовая информация Фишера.

    Raises:
        ConvergenceError: Расхождение оценок больше 1% или нет сходимости по шагу.
    """
    require(strength > 0, "qfi_gaussian needs strength > 0")
    value = qfi_of_family(gaussian_family(probe, kind, strength * 1.02, cutoff), strength, cross_check)
    logger.debug("QFI %s beta=%.4g zeta=%.4g strength=%.4g -> %.6g", kind, probe.beta, probe.zeta, strength, value)
    return value


def qfi_gaussian_weak(probe: GaussianProbe, kind: str, strength: float) -> float:
    """
    QFI гауссова зонда в пределе слабого канала через моменты зонда.

    Смещение: (⟨a†a⟩ + ⟨aa†⟩ - 2|⟨a⟩|²) / N_c.
    Сжатие: (⟨a†²a²⟩ + ⟨a²a†²⟩ - 2|⟨a²⟩|²) / (4 N_s).

    Для когерентного зонда со сжатием это (2n̄+1)/(2N_s), для сжатого
    вакуума (2n̄²+2n̄+1)/(2N_s): по n̄ первая линейна, вторая квадратична.
    """
    require(strength > 0, "qfi_gaussian_weak needs strength > 0")
    if kind not in ("displacement", "squeezing"):
        raise PreconditionError(f"unknown channel kind '{kind}'")
    rho = gaussian_probe_density(probe).renormalized()
    dim = rho.dim + 2
    padded = np.zeros((dim, dim), dtype=complex)
    padded[: rho.dim, : rho.dim] = rho.matrix
    a = annihilation(dim)
    if kind == "squeezing":
        a = a @ a

    def expect(op: np.ndarray) -> complex:
        return complex(np.trace(padded @ op))

    spread = expect(a.T @ a).real + expect(a @ a.T).real - 2 * abs(expect(a)) ** 2
    return spread / strength if kind == "displacement" else spread / (4 * strength)


def family_probe(family: str, mean_photon: float) -> GaussianProbe:
    if family == "coherent":
        return GaussianProbe.coherent(mean_photon)
    if family == "squeezed":
        return GaussianProbe.squeezed(mean_photon)
    raise PreconditionError(f"unknown Gaussian family '{family}', expected one of {FAMILIES}")


def equivalent_energy(target_F: float, family: str, kind: str, strength: float) -> float:
    """
    Среднее число фотонов, при котором гауссово семейство достигает заданной QFI.

    Интервал [0, 1] расширяется удвоением до 50 фотонов, затем делится
    пополам, пока QFI не совпадет с target_F с точностью 1%. Монотонность
    QFI по n̄ проверяется на всех вычисленных точках.

    Args:
        target_F (float): Целевая информация Фишера.
        family (str): "coherent" или "squeezed".
        kind (str): "displacement" или "squeezing".
        strength (float): Сила канала.

    Returns:
        float: n̄; 0, если вакуум уже достигает цели.

    Raises:
        PreconditionError: Цель недостижима на [0, 50].
        ConvergenceError: QFI немонотонна на интервале.
    """
    require(target_F > 0, "target_F must be > 0")
    family_probe(family, 0.0)
    evaluated: Dict[float, float] = {}

    def qfi(n: float) -> float:
        if n not in evaluated:
            evaluated[n] = qfi_gaussian(family_probe(family, n), kind, strength, cross_check=False)
            ordered = [evaluated[k] for k in sorted(evaluated)]
            if any(b < a * (1 - 1e-6) for a, b in zip(ordered, ordered[1:])):
                raise ConvergenceError(f"QFI of the {family} family is not monotone in mean photon number")
        return evaluated[n]

    if qfi(0.0) >= target_F:
        return 0.0
    lo, hi = 0.0, 1.0
    while qfi(hi) < target_F:
        if hi >= SEARCH_CEILING:
            raise PreconditionError(f"target F={target_F:.6g} unreachable for the {family} family in [0, {SEARCH_CEILING:g}]")
        lo, hi = hi, min(2 * hi, SEARCH_CEILING)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        value = qfi(mid)
        if abs(value - target_F) <= MATCH_RTOL * target_F:
            return mid
        lo, hi = (mid, hi) if value < target_F else (lo, mid)
    if abs(qfi(hi) - target_F) <= MATCH_RTOL * target_F:
        return hi
    raise ConvergenceError("energy bisection did not converge")


def gaussian_output_distribution(probe: GaussianProbe, params: ChannelParams, cutoff: CutoffLike = None) -> PhotonDistribution:
    """Распределение гауссова зонда по числу фотонов после потерь, сжатия и смещения."""
    mean = probe.mean_photon + (2 * probe.mean_photon + 1) * math.sinh(math.sqrt(params.N_s)) ** 2 + params.N_c

    def build(dim: int):
        try:
            rho = loss_density(gaussian_probe_density(probe, dim), params.eta)
            K = exact_quadrature_points(dim)
            for kind, strength in (("squeezing", params.N_s), ("displacement", params.N_c)):
                rho = phase_randomized_output(rho, kind, strength, K, adaptive=False)
        except TruncationError as exc:
            return None, exc.loss
        dist = rho.number_distribution()
        return dist, dist.truncation_loss

    return adaptive_cutoff(build, cutoff, FockCutoff.default(0, mean), "gaussian output")


def phase_randomized_gaussian_fi(probe: GaussianProbe, kind: str, strength: float) -> float:
    """Классическая FI фазово-рандомизированного зонда, то есть диагональной смеси по числу фотонов."""
    weights = phase_randomized_gaussian_distribution(probe).renormalized()
    key = "N_c" if kind == "displacement" else "N_s"
    reference = mixture_distribution(weights, ChannelParams(**{key: strength * 1.02}))

    def dist_at(theta: float) -> PhotonDistribution:
        return mixture_distribution(weights, ChannelParams(**{key: theta}), reference.dim)

    return classical_fi(dist_at, strength)


def squeezing_db(m: float) -> float:
    """
    Сжатие в децибелах, эквивалентное по энергии фоковскому зонду |m⟩.

    r = asinh(√m), dB = 10·log10(e^{2r}).

    Example:
        >>> round(squeezing_db(2), 1)
        10.0
    """
    require(m >= 0, "squeezing_db needs m >= 0")
    return 20 * math.asinh(math.sqrt(m)) / math.log(10)


def fit_scaling_exponent(mean_photons: Sequence[float], values: Sequence[float]) -> float:
    slope, _ = np.polyfit(np.log(np.asarray(mean_photons, dtype=float)), np.log(np.asarray(values, dtype=float)), 1)
    return float(slope)


def qfi_scaling_exponent(family: str, kind: str, strength: float, mean_photons: Sequence[float]) -> float:
    """Наклон log QFI по log среднего числа фотонов для гауссова семейства."""
    values = [qfi_gaussian(family_probe(family, n), kind, strength, cross_check=False) for n in mean_photons]
    return fit_scaling_exponent(mean_photons, values)


def optimal_gaussian_qfi(mean_photon: float, kind: str, strength: float, points: int = 21) -> Tuple[float, float, List[float]]:
    """
    Перебор разбиения энергии между сжатием и смещением при фиксированном n̄.

    Returns:
        tuple: (лучшая доля сжатия, максимальная QFI, QFI на всей сетке долей).
    """
    require(points >= 2, "points must be >= 2")
    fractions = np.linspace(0.0, 1.0, points)
    values = [
        qfi_gaussian(GaussianProbe.split(mean_photon, float(f)), kind, strength, cross_check=False) for f in fractions
    ]
    best = int(np.argmax(values))
    return float(fractions[best]), float(values[best]), values


def predisplacement_comparison(mean_photon: float, extra_photons: float, N_s: float) -> Dict[str, float]:
    """
    Прирост QFI канала сжатия на добавленный фотон: фотоны добавляются
    предварительным смещением или дополнительным сжатием сжатого зонда.
    """
    require(extra_photons > 0, "extra_photons must be > 0")
    base_probe = GaussianProbe.squeezed(mean_photon)
    base = qfi_gaussian(base_probe, "squeezing", N_s, cross_check=False)
    displaced = GaussianProbe(beta=math.sqrt(extra_photons), zeta=base_probe.zeta)
    with_displacement = qfi_gaussian(displaced, "squeezing", N_s, cross_check=False)
    with_squeezing = qfi_gaussian(GaussianProbe.squeezed(mean_photon + extra_photons), "squeezing", N_s, cross_check=False)
    return {
        "base": base,
        "displacement_gain_per_photon": (with_displacement - base) / extra_photons,
        "squeezing_gain_per_photon": (with_squeezing - base) / extra_photons,
    }
