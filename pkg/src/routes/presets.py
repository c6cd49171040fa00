import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.repository.config_repo import scenario_from_mapping
from src.routes.scenarios import run_grid
from src.schemas.Scenario_Schemas import ResultTable, Scenario
from src.services.errors import PreconditionError

logger = logging.getLogger(__name__)

M_GRID = (50, 100, 200, 500, 1000, 2000, 5000)
LOSS_RATES = (0.05, 0.1, 0.2, 0.3, 0.4, 0.5)
FLUCTUATION_SIGMA2 = (1e-4, 3e-4, 1e-3, 3e-3, 1e-2)

MC_COLUMNS = ("mse", "stderr_bar", "cr_bound")


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    grid: Tuple[Dict[str, object], ...]
    columns: Tuple[str, ...]

    def scenarios(self, seed: Optional[int] = None, trials: Optional[int] = None) -> List[Scenario]:
        overrides = {key: value for key, value in (("seed", seed), ("trials", trials)) if value is not None}
        return [scenario_from_mapping({"name": self.name, **point, **overrides}) for point in self.grid]


def _grid(base: Dict[str, object], **axes: Sequence[object]) -> Tuple[Dict[str, object], ...]:
    points = [dict(base)]
    for key, values in axes.items():
        points = [{**point, key: value} for point in points for value in values]
    return tuple(points)


def _eta_grid(rates: Sequence[float]) -> List[float]:
    return [float(np.round(1.0 - rate, 10)) for rate in rates]


PRESETS: Dict[str, Preset] = {
    preset.name: preset
    for preset in (
        Preset(
            "fig1a",
            "displacement MLE error against M, |3>, N_c in {0.1, 1, 2}",
            _grid({"kind": "mle-sim", "m": 3, "trials": 3000}, N_c=(0.1, 1.0, 2.0), M=M_GRID),
            ("M", "N_c") + MC_COLUMNS,
        ),
        Preset(
            "fig1b",
            "displacement MLE error against N_c for m = 0..4, M = 500",
            _grid({"kind": "mle-sim", "M": 500, "trials": 3000}, m=range(5), N_c=(0.1, 0.3, 0.5, 1.0, 1.5, 2.0)),
            ("m", "N_c") + MC_COLUMNS,
        ),
        Preset(
            "fig2",
            "Fock bound against same-energy squeezed and coherent bounds, displacement",
            _grid({"kind": "gaussian-compare", "M": 1}, m=range(1, 7), N_c=(0.1, 0.3, 0.5, 1.0, 2.0)),
            ("m", "N_c", "fock_bound", "squeezed_bound", "coherent_bound", "squeezing_db"),
        ),
        Preset(
            "fig3a",
            "lossy displacement MLE error against M, |3>, N_c = 1",
            _grid({"kind": "mle-sim", "m": 3, "N_c": 1.0, "trials": 1000}, eta=(1.0, 0.9, 0.7), M=M_GRID),
            ("M", "eta") + MC_COLUMNS,
        ),
        Preset(
            "fig3b",
            "lossy displacement MLE error against loss rate, |3>, M = 500",
            _grid({"kind": "loss-sim", "m": 3, "M": 500, "trials": 1000}, N_c=(0.1, 1.0, 2.0), eta=_eta_grid(LOSS_RATES)),
            ("eta", "N_c") + MC_COLUMNS + ("lossless_bound", "coherent_bound", "squeezed_bound", "vacuum_bound"),
        ),
        Preset(
            "fig4a",
            "squeezing MLE error against M, |3>, N_s in {0.1, 0.3, 0.5}",
            _grid({"kind": "mle-sim", "channel": "squeezing", "m": 3, "trials": 3000}, N_s=(0.1, 0.3, 0.5), M=M_GRID),
            ("M", "N_s") + MC_COLUMNS,
        ),
        Preset(
            "fig4b",
            "squeezing MLE error against N_s for m = 0..4, M = 500",
            _grid(
                {"kind": "mle-sim", "channel": "squeezing", "M": 500, "trials": 3000},
                m=range(5),
                N_s=(0.05, 0.1, 0.2, 0.3, 0.4, 0.5),
            ),
            ("m", "N_s") + MC_COLUMNS,
        ),
        Preset(
            "fig5a",
            "squeezed-state mean photon number matching the Fock bound, squeezing channel",
            _grid({"kind": "gaussian-compare", "channel": "squeezing", "family": "squeezed", "M": 1}, m=range(1, 6), N_s=(0.1, 0.25, 0.5)),
            ("m", "N_s", "fock_bound", "equivalent_energy"),
        ),
        Preset(
            "fig5b",
            "coherent-state mean photon number matching the Fock bound, squeezing channel",
            _grid({"kind": "gaussian-compare", "channel": "squeezing", "family": "coherent", "M": 1}, m=range(1, 6), N_s=(0.1, 0.25, 0.5)),
            ("m", "N_s", "fock_bound", "equivalent_energy"),
        ),
        Preset(
            "fig6a",
            "lossy squeezing MLE error against M, |3>, N_s = 0.25",
            _grid({"kind": "mle-sim", "channel": "squeezing", "m": 3, "N_s": 0.25, "trials": 1000}, eta=(1.0, 0.9, 0.7), M=M_GRID),
            ("M", "eta") + MC_COLUMNS,
        ),
        Preset(
            "fig6b",
            "lossy squeezing MLE error against loss rate, |3>, N_s = 0.25, M = 500",
            _grid({"kind": "loss-sim", "channel": "squeezing", "m": 3, "N_s": 0.25, "M": 500, "trials": 1000}, eta=_eta_grid(LOSS_RATES)),
            ("eta", "N_s") + MC_COLUMNS + ("lossless_bound", "coherent_bound", "squeezed_bound", "vacuum_bound"),
        ),
        Preset(
            "fig7a",
            "simultaneous estimation bounds, N_c = N_s = 0.01",
            _grid({"kind": "multiparam", "N_c": 0.01, "N_s": 0.01, "M": 1}, m=range(6)),
            ("m", "bound_Nc", "bound_Ns", "single_param_bound_Nc", "single_param_bound_Ns", "offdiag_ratio"),
        ),
        Preset(
            "fig7b",
            "simultaneous estimation bounds, N_c = N_s = 0.05",
            _grid({"kind": "multiparam", "N_c": 0.05, "N_s": 0.05, "M": 1}, m=range(6)),
            ("m", "bound_Nc", "bound_Ns", "single_param_bound_Nc", "single_param_bound_Ns", "offdiag_ratio"),
        ),
        Preset(
            "flucC",
            "excess displacement error from a fluctuating N_c, |3>, N_c = 1, M = 500",
            _grid({"kind": "fluctuation", "m": 3, "N_c": 1.0, "M": 500, "trials": 1000}, sigma=[float(np.sqrt(v)) for v in FLUCTUATION_SIGMA2]),
            ("N_c", "sigma2", "realized_variance", "excess_error", "stderr_bar"),
        ),
        Preset(
            "flucC-squeezing",
            "excess squeezing error from a fluctuating N_s, |3>, N_s = 0.25, M = 500",
            _grid(
                {"kind": "fluctuation", "channel": "squeezing", "m": 3, "N_s": 0.25, "M": 500, "trials": 1000},
                sigma=[float(np.sqrt(v)) for v in FLUCTUATION_SIGMA2],
            ),
            ("N_s", "sigma2", "realized_variance", "excess_error", "stderr_bar"),
        ),
        Preset(
            "appB",
            "photon-number moments and linearized sensitivities of the displaced Fock state",
            _grid({"kind": "moments"}, m=range(6), N_c=(0.5, 1.0, 2.0)),
            (),
        ),
    )
}


def preset_names() -> List[str]:
    return list(PRESETS)


def get_preset(name: str) -> Preset:
    """
    Найти пресет по имени.

    Raises:
        PreconditionError: Неизвестное имя; в сообщении перечислены все пресеты.
    """
    preset = PRESETS.get(name)
    if preset is None:
        raise PreconditionError(f"unknown preset '{name}'; available presets: {', '.join(PRESETS)}")
    return preset


def run_preset(
    name: str,
    seed: Optional[int] = None,
    trials: Optional[int] = None,
    n_jobs: Optional[int] = None,
    runner: Callable[..., ResultTable] = run_grid,
) -> ResultTable:
    """
    Развернуть пресет в сетку сценариев и выполнить ее.

    Args:
        name (str): Имя пресета (fig1a ... fig7b, flucC, appB).
        seed (int): Переопределяет seed всех точек сетки.
        trials (int): Переопределяет число серий Монте-Карло.
        n_jobs (int): Число процессов.

    Returns:
        ResultTable: Таблица с колонками пресета.
    """
    preset = get_preset(name)
    scenarios = preset.scenarios(seed=seed, trials=trials)
    logger.info("preset %s: %s", name, preset.description)
    return runner(name, scenarios, preset.columns or None, n_jobs)
