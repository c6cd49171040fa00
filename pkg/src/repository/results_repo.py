import csv
import io
import logging
from pathlib import Path
from typing import List, Union

from src.conf.config import settings
from src.schemas.Scenario_Schemas import Cell, ResultTable
from src.services.errors import PreconditionError

logger = logging.getLogger(__name__)


def format_cell(value: Cell) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format(value, f".{settings.float_digits}g")
    return str(value)


def render_table(table: ResultTable) -> str:
    """
    CSV-представление таблицы.

    Сначала строки метаданных `# key: value` в порядке ключей, затем заголовок
    и строки данных; числа с плавающей точкой печатаются с float_digits
    значащими цифрами, поэтому одинаковые таблицы дают одинаковые байты.
    """
    buffer = io.StringIO()
    buffer.write(f"# table: {table.name}\n")
    for key in sorted(table.metadata):
        buffer.write(f"# {key}: {table.metadata[key]}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([format_cell(value) for value in row])
    return buffer.getvalue()


def _parse_cell(text: str) -> Cell:
    for convert in (int, float):
        try:
            return convert(text)
        except ValueError:
            continue
    return text


def parse_table(text: str) -> ResultTable:
    """Чтение таблицы, записанной render_table."""
    name, metadata, body = "", {}, []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            if key == "table":
                name = value
            else:
                metadata[key] = value
        elif line:
            body.append(line)
    if not body:
        raise PreconditionError("result table has no header row")
    reader = csv.reader(body)
    columns = next(reader)
    rows: List[List[Cell]] = [[_parse_cell(cell) for cell in row] for row in reader]
    return ResultTable(name=name, columns=columns, rows=rows, metadata=metadata)


def repo_write_table(table: ResultTable, path: Union[str, Path]) -> Path:
    """
    Записать таблицу результатов в CSV-файл.

    Args:
        table (ResultTable): Таблица.
        path (str | Path): Путь к файлу; "-" означает stdout.

    Returns:
        Path: Путь к записанному файлу.

    Raises:
        PreconditionError: Файл нельзя записать.
    """
    text = render_table(table)
    if str(path) == "-":
        print(text, end="")
        return Path("-")
    target = Path(path)
    try:
        with target.open("w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise PreconditionError(f"cannot write {target}: {exc}") from exc
    logger.info("wrote %d rows to %s", len(table.rows), target)
    return target
