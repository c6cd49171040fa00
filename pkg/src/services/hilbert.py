import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, TypeVar, Union

import numpy as np
from scipy.linalg import eigh, expm, svdvals
from scipy.special import gammaln

from src.conf.config import settings
from src.services.errors import PreconditionError, TruncationError, require

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-10
PSD_CLIP = 1e-10

T = TypeVar("T")


@dataclass(frozen=True)
class FockCutoff:
    """Усеченный базис Фока: числа фотонов 0..dim-1."""

    dim: int

    def __post_init__(self):
        require(int(self.dim) == self.dim and self.dim >= 1, f"cutoff dim must be >= 1, got {self.dim}")

    @property
    def max_photon(self) -> int:
        return self.dim - 1

    @classmethod
    def default(cls, m: int, mean_photon: float = 0.0) -> "FockCutoff":
        """
        Размер базиса по умолчанию для зонда |m⟩ и среднего числа фотонов на выходе.

        Args:
            m (int): Число фотонов в зонде.
            mean_photon (float): Среднее число фотонов, добавляемое каналом.

        Returns:
            FockCutoff: dim = max(m, ⌈n̄⌉) + 10 + ⌈6·√(n̄+1)⌉.
        """
        mean_photon = max(float(mean_photon), 0.0)
        dim = max(int(m), math.ceil(mean_photon)) + 10 + math.ceil(6.0 * math.sqrt(mean_photon + 1.0))
        return cls(dim)


CutoffLike = Union[FockCutoff, int, None]


def as_cutoff(cutoff: CutoffLike) -> Optional[FockCutoff]:
    if cutoff is None or isinstance(cutoff, FockCutoff):
        return cutoff
    return FockCutoff(int(cutoff))


@dataclass(frozen=True, eq=False)
class PhotonDistribution:
    """
    Распределение по числу фотонов 0..dim-1.

    ``truncation_loss`` хранит вероятность, потерянную за пределами базиса;
    сумма ``probs`` равна 1 - truncation_loss.
    """

    probs: np.ndarray
    cutoff: FockCutoff
    truncation_loss: float = 0.0

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        require(probs.ndim == 1 and probs.size == self.cutoff.dim, "probs length must equal cutoff dim")
        require(bool(np.all(probs >= -1e-12)), f"negative probability {probs.min():.3e}")
        probs = np.clip(probs, 0.0, None)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "truncation_loss", max(float(self.truncation_loss), 0.0))

    @classmethod
    def from_probs(cls, probs, truncation_loss: Optional[float] = None) -> "PhotonDistribution":
        probs = np.asarray(probs, dtype=float)
        if truncation_loss is None:
            truncation_loss = max(1.0 - float(probs.sum()), 0.0)
        return cls(probs, FockCutoff(probs.size), truncation_loss)

    @classmethod
    def delta(cls, m: int, dim: Optional[int] = None) -> "PhotonDistribution":
        dim = m + 1 if dim is None else dim
        require(0 <= m < dim, f"photon number {m} outside cutoff {dim}")
        probs = np.zeros(dim)
        probs[m] = 1.0
        return cls(probs, FockCutoff(dim))

    @property
    def dim(self) -> int:
        return self.cutoff.dim

    def prob(self, n: int) -> float:
        if 0 <= n < self.dim:
            return float(self.probs[n])
        return 0.0

    def total(self) -> float:
        return float(self.probs.sum())

    def moment(self, k: int) -> float:
        n = np.arange(self.dim, dtype=float)
        return float(np.dot(n ** k, self.probs))

    def mean(self) -> float:
        return self.moment(1)

    def variance(self) -> float:
        mean = self.mean()
        return self.moment(2) - mean ** 2

    def padded(self, dim: int) -> "PhotonDistribution":
        require(dim >= self.dim, f"cannot shrink distribution from {self.dim} to {dim}")
        probs = np.zeros(dim)
        probs[: self.dim] = self.probs
        return PhotonDistribution(probs, FockCutoff(dim), self.truncation_loss)

    def renormalized(self) -> "PhotonDistribution":
        return PhotonDistribution(self.probs / self.total(), self.cutoff, 0.0)

    def total_variation(self, other: "PhotonDistribution") -> float:
        dim = max(self.dim, other.dim)
        return 0.5 * float(np.abs(self.padded(dim).probs - other.padded(dim).probs).sum())


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """
    Матрица плотности на усеченном пространстве Фока.

    Эрмитовость и неотрицательность проверяются при создании; след равен
    1 - truncation_loss с точностью 1e-8.
    """

    matrix: np.ndarray
    cutoff: FockCutoff
    truncation_loss: float = 0.0

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=complex)
        dim = self.cutoff.dim
        require(matrix.shape == (dim, dim), f"density matrix must be {dim}x{dim}, got {matrix.shape}")
        require(
            float(np.max(np.abs(matrix - matrix.conj().T), initial=0.0)) <= HERMITIAN_TOL,
            "density matrix is not Hermitian",
        )
        matrix = 0.5 * (matrix + matrix.conj().T)
        trace = float(np.real(np.trace(matrix)))
        require(
            abs(trace + float(self.truncation_loss) - 1.0) <= settings.truncation_tolerance,
            f"trace {trace:.12f} inconsistent with truncation loss {self.truncation_loss:.3e}",
        )
        lowest = float(np.linalg.eigvalsh(matrix)[0])
        require(lowest >= -PSD_CLIP, f"density matrix has eigenvalue {lowest:.3e}")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def fock(cls, m: int, dim: int) -> "DensityOperator":
        return cls.diagonal(PhotonDistribution.delta(m, dim))

    @classmethod
    def from_ket(cls, ket) -> "DensityOperator":
        ket = np.asarray(ket, dtype=complex)
        loss = max(1.0 - float(np.vdot(ket, ket).real), 0.0)
        return cls(np.outer(ket, ket.conj()), FockCutoff(ket.size), loss)

    @classmethod
    def diagonal(cls, dist: PhotonDistribution) -> "DensityOperator":
        return cls(np.diag(dist.probs).astype(complex), dist.cutoff, dist.truncation_loss)

    @property
    def dim(self) -> int:
        return self.cutoff.dim

    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def renormalized(self) -> "DensityOperator":
        return DensityOperator(self.matrix / self.trace(), self.cutoff, 0.0)

    def number_distribution(self) -> PhotonDistribution:
        return PhotonDistribution(np.real(np.diag(self.matrix)), self.cutoff, self.truncation_loss)

    def off_diagonal_norm(self) -> float:
        return float(np.max(np.abs(self.matrix - np.diag(np.diag(self.matrix))), initial=0.0))


def log_factorial(n):
    """
    Натуральный логарифм n!.

    Args:
        n (int | array): Неотрицательное целое или массив таких чисел.

    Returns:
        float | np.ndarray: ln(n!) через gammaln(n+1).

    Example:
        >>> log_factorial(10)  # ln(3628800)
        15.104412573075516
    """
    arr = np.asarray(n)
    require(bool(np.all(arr >= 0)), f"log_factorial needs n >= 0, got {n}")
    out = gammaln(arr + 1.0)
    return float(out) if np.ndim(out) == 0 else out


def _laguerre_table(max_degree: int, alpha, x: float) -> np.ndarray:
    """Таблица L_k^{(alpha)}(x) для k = 0..max_degree с broadcast по alpha; форма (max_degree+1, *alpha.shape)."""
    alpha = np.asarray(alpha, dtype=float)
    table = np.empty((max_degree + 1,) + alpha.shape)
    table[0] = 1.0
    if max_degree >= 1:
        table[1] = 1.0 + alpha - x
    for k in range(1, max_degree):
        table[k + 1] = ((2 * k + 1 + alpha - x) * table[k] - (k + alpha) * table[k - 1]) / (k + 1)
    return table


def laguerre_assoc(m: int, a: int, x: float) -> float:
    """
    Присоединенный многочлен Лагерра L_m^{(a)}(x).

    Считается трехчленной рекуррентной формулой по степени, начиная с
    L_0 = 1 и L_1 = 1 + a - x.

    Args:
        m (int): Степень, m >= 0.
        a (int): Параметр, a >= -m.
        x (float): Аргумент, x >= 0.

    Returns:
        float: Значение многочлена.
    """
    require(m >= 0 and a >= -m and x >= 0, f"laguerre_assoc precondition violated: m={m}, a={a}, x={x}")
    return float(_laguerre_table(int(m), float(a), float(x))[m])


def displacement_element(n: int, m: int, amp: float) -> float:
    """
    Матричный элемент ⟨n|D(amp)|m⟩ для вещественной амплитуды.

    Для n >= m используется формула через L_m^{(n-m)}(amp²), для n < m
    симметрия ⟨n|D|m⟩ = (-1)^{m-n}⟨m|D|n⟩. Отношения факториалов считаются в
    логарифмах.

    Args:
        n (int): Номер строки.
        m (int): Номер столбца.
        amp (float): Амплитуда смещения, amp >= 0.

    Returns:
        float: Значение элемента.
    """
    require(n >= 0 and m >= 0 and amp >= 0, "displacement_element needs n, m, amp >= 0")
    if amp == 0.0:
        return 1.0 if n == m else 0.0
    hi, lo = max(n, m), min(n, m)
    d = hi - lo
    x = amp * amp
    log_mag = 0.5 * (log_factorial(lo) - log_factorial(hi)) + d * math.log(amp) - 0.5 * x
    value = math.exp(log_mag) * laguerre_assoc(lo, d, x)
    if n < m and d % 2:
        value = -value
    return value


def displacement_matrix(dim: int, amp: float) -> np.ndarray:
    """Матрица ⟨n|D(amp)|m⟩ для n, m < dim."""
    if amp == 0.0:
        return np.eye(dim)
    x = amp * amp
    d = np.arange(dim)
    # за пределами lo + d < dim таблица может переполниться, эти ячейки отбрасываются
    with np.errstate(over="ignore", invalid="ignore"):
        lag = _laguerre_table(dim - 1, d, x)  # lag[lo, d]
    lo = np.arange(dim)[:, None]
    hi = lo + d[None, :]
    valid = hi < dim
    lf = gammaln(np.arange(2 * dim) + 1.0)
    log_mag = 0.5 * (lf[lo] - lf[hi]) + d[None, :] * math.log(amp) - 0.5 * x
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        upper = np.where(valid, np.exp(log_mag) * lag, 0.0)
    out = np.zeros((dim, dim))
    lo_idx, d_idx = np.nonzero(valid)
    hi_idx = lo_idx + d_idx
    out[hi_idx, lo_idx] = upper[lo_idx, d_idx]
    signs = np.where(d_idx % 2 == 1, -1.0, 1.0)
    out[lo_idx, hi_idx] = signs * upper[lo_idx, d_idx]
    return out


def displacement_column(dim: int, amp: float, m: int) -> np.ndarray:
    """Столбец ⟨n|D(amp)|m⟩ для n < dim."""
    out = np.zeros(dim)
    if amp == 0.0:
        if m < dim:
            out[m] = 1.0
        return out
    x = amp * amp
    n = np.arange(dim)
    lo, hi = np.minimum(n, m), np.maximum(n, m)
    d = hi - lo
    lag = _laguerre_table(m, d, x)[lo, n]
    log_mag = 0.5 * (gammaln(lo + 1.0) - gammaln(hi + 1.0)) + d * math.log(amp) - 0.5 * x
    out = np.exp(log_mag) * lag
    return np.where((n < m) & (d % 2 == 1), -out, out)


def _squeeze_lattice(rows: int, cols: int, r: float) -> np.ndarray:
    """
    Блок ⟨n|S(r)|m⟩, n < rows, m < cols, рекуррентно по решетке Фока.

    Нулевой столбец: S[0,0] = √sech r, S[n,0] = -√((n-1)/n)·tanh r·S[n-2,0].
    Далее по столбцам:
    S[n,m] = √((m-1)/m)·tanh r·S[n,m-2] + √(n/m)·sech r·S[n-1,m-1].
    Все слагаемые - точные элементы бесконечного оператора, поэтому блок не
    зависит от размера и не теряет точность при больших rows.
    """
    t = math.tanh(r)
    sech = 1.0 / math.cosh(r)
    root = np.sqrt(np.arange(max(rows, cols), dtype=float))
    out = np.zeros((rows, cols))
    out[0, 0] = math.sqrt(sech)
    for n in range(2, rows, 2):
        out[n, 0] = -root[n - 1] / root[n] * t * out[n - 2, 0]
    for m in range(1, cols):
        column = np.zeros(rows)
        if m >= 2:
            column += root[m - 1] / root[m] * t * out[:, m - 2]
        column[1:] += root[1:rows] / root[m] * sech * out[:-1, m - 1]
        out[:, m] = column
    return out


def squeeze_element(n: int, m: int, r: float) -> float:
    """
    Матричный элемент ⟨n|S(r)|m⟩ для S(r) = exp((r/2)(a² - a†²)).

    Элемент равен нулю, если n - m нечетно. Считается той же рекуррентой по
    решетке Фока, что и squeeze_matrix.

    Args:
        n (int): Номер строки.
        m (int): Номер столбца.
        r (float): Параметр сжатия, r >= 0.

    Returns:
        float: Значение элемента.
    """
    require(n >= 0 and m >= 0 and r >= 0, "squeeze_element needs n, m, r >= 0")
    if (n - m) % 2:
        return 0.0
    if r == 0.0:
        return 1.0 if n == m else 0.0
    return float(_squeeze_lattice(n + 1, m + 1, r)[n, m])


def squeeze_matrix(dim: int, r: float) -> np.ndarray:
    """Матрица ⟨n|S(r)|m⟩ для n, m < dim."""
    if r == 0.0:
        return np.eye(dim)
    return _squeeze_lattice(dim, dim, r)


def squeeze_column(dim: int, r: float, m: int) -> np.ndarray:
    """Столбец ⟨n|S(r)|m⟩ для n < dim; на противоположной четности нули."""
    if r == 0.0:
        out = np.zeros(dim)
        if m < dim:
            out[m] = 1.0
        return out
    return _squeeze_lattice(dim, m + 1, r)[:, m].copy()


def annihilation(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1)


def expm_generator(kind: str, amp: float, dim: int, padding: Optional[int] = None) -> np.ndarray:
    """
    Оператор смещения или сжатия как экспонента генератора на расширенном базисе.

    Используется только как эталон в тестах: генератор строится на базисе
    dim + padding, экспонента берется через scipy.linalg.expm, возвращается
    верхний левый блок dim x dim.

    Args:
        kind (str): "displacement" или "squeezing".
        amp (float): Амплитуда смещения или параметр сжатия r.
        dim (int): Размер возвращаемого блока.
        padding (int): Число дополнительных уровней, по умолчанию settings.cutoff_padding.

    Returns:
        np.ndarray: Вещественная матрица dim x dim.
    """
    padding = settings.cutoff_padding if padding is None else padding
    a = annihilation(dim + padding)
    if kind == "displacement":
        generator = amp * (a.T - a)
    elif kind == "squeezing":
        generator = 0.5 * amp * (a @ a - a.T @ a.T)
    else:
        raise PreconditionError(f"unknown operator kind '{kind}'")
    return expm(generator)[:dim, :dim]


def hermitian_eigen(matrix) -> Tuple[np.ndarray, np.ndarray]:
    """
    Спектральное разложение эрмитовой матрицы.

    Args:
        matrix (array): Комплексная эрмитова матрица (допуск 1e-10).

    Returns:
        tuple: Собственные значения по возрастанию и унитарная матрица собственных векторов.

    Raises:
        PreconditionError: Если матрица не эрмитова.
    """
    matrix = np.asarray(matrix, dtype=complex)
    require(matrix.ndim == 2 and matrix.shape[0] == matrix.shape[1], "hermitian_eigen needs a square matrix")
    skew = float(np.max(np.abs(matrix - matrix.conj().T), initial=0.0))
    require(skew <= HERMITIAN_TOL, f"matrix is not Hermitian (deviation {skew:.3e})")
    return eigh(0.5 * (matrix + matrix.conj().T))


def psd_sqrt(matrix) -> np.ndarray:
    values, vectors = hermitian_eigen(matrix)
    if values.size and values[0] < -PSD_CLIP:
        raise PreconditionError(f"matrix is not positive semidefinite (eigenvalue {values[0]:.3e})")
    values = np.clip(values, 0.0, None)
    return (vectors * np.sqrt(values)) @ vectors.conj().T


def fidelity(rho0: DensityOperator, rho1: DensityOperator) -> float:
    """
    Квантовая точность (Tr√(√ρ0 ρ1 √ρ0))².

    След корня равен ядерной норме √ρ0·√ρ1, поэтому считаются два
    квадратных корня через hermitian_eigen (отрицательные собственные
    значения до -1e-10 обнуляются) и сумма сингулярных чисел произведения.

    Args:
        rho0 (DensityOperator): Первое состояние.
        rho1 (DensityOperator): Второе состояние.

    Returns:
        float: Значение в [0, 1].

    Raises:
        PreconditionError: Если размеры базисов не совпадают.
    """
    if rho0.dim != rho1.dim:
        raise PreconditionError(f"cutoff mismatch: {rho0.dim} != {rho1.dim}")
    product = psd_sqrt(rho0.matrix) @ psd_sqrt(rho1.matrix)
    root_trace = float(svdvals(product).sum())
    return min(max(root_trace ** 2, 0.0), 1.0)


def adaptive_cutoff(
    build: Callable[[int], Tuple[T, float]],
    cutoff: CutoffLike,
    start: FockCutoff,
    what: str = "distribution",
) -> T:
    """
    Подбор размера базиса для построителя ``build(dim) -> (объект, потеря)``.

    Явно заданный cutoff проверяется на допуск settings.truncation_tolerance.
    Без него базис начинается со ``start`` и растет в 1.5 раза, пока
    потеря не станет меньше settings.truncation_target.

    Raises:
        TruncationError: Если допуск не достигнут.
    """
    cutoff = as_cutoff(cutoff)
    if cutoff is not None:
        result, loss = build(cutoff.dim)
        if loss > settings.truncation_tolerance:
            raise TruncationError(f"{what} truncated too aggressively", loss, cutoff.dim)
        return result

    dim = min(start.dim, settings.max_cutoff)
    while True:
        result, loss = build(dim)
        if loss <= settings.truncation_target:
            return result
        if dim >= settings.max_cutoff:
            if loss <= settings.truncation_tolerance:
                logger.warning("%s: cutoff %d reached with loss %.3e", what, dim, loss)
                return result
            raise TruncationError(f"{what} does not fit the maximum cutoff", loss, dim)
        grown = min(settings.max_cutoff, math.ceil(dim * 1.5))
        logger.debug("%s: loss %.3e at dim=%d, growing to %d", what, loss, dim, grown)
        dim = grown
