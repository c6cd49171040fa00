import logging
from pathlib import Path
from typing import Dict, Mapping, Optional, Union

from pydantic import ValidationError

from src.schemas.Scenario_Schemas import Scenario
from src.services.errors import ConfigParseError, PreconditionError

logger = logging.getLogger(__name__)


def _split_line(raw: str, line_no: int):
    line = raw.split("#", 1)[0].strip()
    if not line:
        return None
    if "=" not in line:
        raise ConfigParseError("expected `key = value`", line_no=line_no)
    key, value = (part.strip() for part in line.split("=", 1))
    if not key:
        raise ConfigParseError("missing key before `=`", line_no=line_no)
    if not value:
        raise ConfigParseError(f"missing value for `{key}`", line_no=line_no, key=key)
    return key, value


def scenario_from_mapping(values: Mapping[str, object], line_numbers: Optional[Dict[str, int]] = None) -> Scenario:
    """
    Построить Scenario из словаря значений и перевести ошибки pydantic в PreconditionError.

    Args:
        values (Mapping): Значения полей сценария (строки или числа).
        line_numbers (dict): Номер строки файла для каждого ключа, если есть.

    Returns:
        Scenario: Проверенный сценарий.

    Raises:
        ConfigParseError: Нет `kind`, неизвестный ключ или неверное значение;
                          в сообщении указан ключ и, если известен, номер строки.
    """
    line_numbers = line_numbers or {}
    if "kind" not in values:
        raise ConfigParseError("`kind` required", key="kind")
    for key in values:
        if key not in Scenario.__fields__:
            raise ConfigParseError(f"unknown key `{key}`", line_no=line_numbers.get(key), key=key)
    try:
        return Scenario(**values)
    except ValidationError as exc:
        error = exc.errors()[0]
        key = str(error["loc"][0])
        if key == "__root__":
            raise ConfigParseError(error["msg"]) from exc
        raise ConfigParseError(f"invalid `{key}`: {error['msg']}", line_no=line_numbers.get(key), key=key) from exc


def parse_config(text: str) -> Scenario:
    """
    Разобрать текст сценария: по одной паре `key = value` на строку, `#` начинает комментарий.

    Args:
        text (str): Содержимое файла в UTF-8.

    Returns:
        Scenario: Сценарий со значениями по умолчанию для отсутствующих ключей.

    Raises:
        ConfigParseError: Синтаксическая ошибка (с номером строки), неизвестный
                          или повторный ключ, неверное значение (с именем ключа).

    Example:
        >>> parse_config("kind = mle-sim\\nm = 3\\nN_c = 1.0").m
        3
    """
    values: Dict[str, str] = {}
    line_numbers: Dict[str, int] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        pair = _split_line(raw, line_no)
        if pair is None:
            continue
        key, value = pair
        if key in values:
            raise ConfigParseError(f"duplicate key `{key}`", line_no=line_no, key=key)
        values[key] = value
        line_numbers[key] = line_no
    scenario = scenario_from_mapping(values, line_numbers)
    logger.debug("parsed scenario %s (%s)", scenario.name, scenario.kind)
    return scenario


def repo_read_config(path: Union[str, Path]) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise PreconditionError(f"cannot read scenario file {path}: {exc}") from exc
    return parse_config(text)
