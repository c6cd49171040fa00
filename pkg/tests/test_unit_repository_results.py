import pytest

from src.repository.results_repo import format_cell, parse_table, render_table, repo_write_table
from src.schemas.Scenario_Schemas import ResultTable
from src.services.errors import PreconditionError


def test_format_cell():
    assert format_cell(True) == "1"
    assert format_cell(3) == "3"
    assert format_cell(1.0 / 3.0) == "0.333333333"
    assert format_cell(2.857142857142857e-4) == "0.000285714286"
    assert format_cell("displacement") == "displacement"


def test_render_table(fake_table):
    text = render_table(fake_table)
    lines = text.splitlines()
    assert lines[0] == "# table: fake"
    assert lines[1] == "# seed: 42"
    assert lines[2] == "# version: 0.1.0"
    assert lines[3] == "m,N_c,mse"
    assert lines[4] == "3,0.1,0.333333333"
    assert text.endswith("\n")


def test_render_is_deterministic(fake_table):
    assert render_table(fake_table) == render_table(fake_table.copy(deep=True))


def test_parse_table(fake_table):
    parsed = parse_table(render_table(fake_table))
    assert parsed.name == "fake"
    assert parsed.columns == ["m", "N_c", "mse"]
    assert parsed.metadata == {"seed": "42", "version": "0.1.0"}
    assert parsed.column("m") == [3, 3]
    assert parsed.column("N_c") == [0.1, 1.0]


def test_parse_table_without_header():
    with pytest.raises(PreconditionError):
        parse_table("# table: empty\n")


def test_row_width_checked():
    with pytest.raises(ValueError):
        ResultTable(name="bad", columns=["a", "b"], rows=[[1]])


def test_float_cells_keep_their_type():
    table = ResultTable(name="t", columns=["x"], rows=[[0.25], [2]])
    assert table.column("x") == [0.25, 2]
    assert isinstance(table.rows[0][0], float)


def test_repo_write_table(tmp_path, fake_table):
    path = repo_write_table(fake_table, tmp_path / "out.csv")
    assert path.read_text(encoding="utf-8") == render_table(fake_table)


def test_repo_write_table_stdout(capsys, fake_table):
    repo_write_table(fake_table, "-")
    assert capsys.readouterr().out == render_table(fake_table)


def test_repo_write_table_bad_path(tmp_path, fake_table):
    with pytest.raises(PreconditionError):
        repo_write_table(fake_table, tmp_path / "missing" / "out.csv")
