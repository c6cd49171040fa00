from typing import Optional

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3


class MetrologyError(Exception):
    """
    Базовое исключение пакета.

    Как и HTTPException, несет человекочитаемое описание ``detail`` и код
    завершения ``exit_code``, который CLI возвращает в оболочку.
    """

    exit_code: int = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class PreconditionError(MetrologyError, ValueError):
    exit_code = EXIT_VALIDATION


class ConfigParseError(PreconditionError):
    def __init__(self, detail: str, line_no: Optional[int] = None, key: Optional[str] = None):
        if line_no is not None:
            detail = f"line {line_no}: {detail}"
        super().__init__(detail)
        self.line_no = line_no
        self.key = key


class SingularMatrixError(PreconditionError):
    pass


class ConvergenceError(MetrologyError, ArithmeticError):
    exit_code = EXIT_CONVERGENCE


class TruncationError(ConvergenceError):
    def __init__(self, detail: str, loss: float, dim: int):
        super().__init__(f"{detail} (lost mass {loss:.3e} at dim={dim})")
        self.loss = loss
        self.dim = dim


def require(condition: bool, detail: str) -> None:
    if not condition:
        raise PreconditionError(detail)
