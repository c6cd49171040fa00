from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, Extra, root_validator, validator

from src.schemas.Channel_Schemas import ChannelParams

SCENARIO_KINDS = ("fisher-scan", "mle-sim", "loss-sim", "gaussian-compare", "multiparam", "fluctuation", "moments")
CHANNELS = ("displacement", "squeezing")
ESTIMATORS = ("mle", "weak", "joint")
FAMILIES = ("coherent", "squeezed")
FLUCTUATION_MODES = ("per_trial", "per_probe")

Cell = Union[int, float, str]


class Scenario(BaseModel):
    name: str = "custom"
    kind: str
    channel: str = "displacement"
    m: int = 3
    N_c: float = 0.0
    N_s: float = 0.0
    eta: float = 1.0
    M: int = 500
    trials: int = 1000
    seed: int = 0
    prior_lo: Optional[float] = None
    prior_hi: Optional[float] = None
    sigma: float = 0.0
    cutoff_override: Optional[int] = None
    estimator: str = "mle"
    family: Optional[str] = None
    split_points: int = 0
    fluctuation_mode: str = "per_trial"

    class Config:
        extra = Extra.forbid
        allow_mutation = False

    @validator("kind")
    def validate_kind(cls, kind):
        if kind not in SCENARIO_KINDS:
            raise ValueError(f"kind must be one of {', '.join(SCENARIO_KINDS)}")
        return kind

    @validator("channel")
    def validate_channel(cls, channel):
        if channel not in CHANNELS:
            raise ValueError("channel must be 'displacement' or 'squeezing'")
        return channel

    @validator("m")
    def validate_m(cls, m):
        if m < 0:
            raise ValueError("m must be >= 0")
        return m

    @validator("N_c", "N_s", "sigma")
    def validate_nonnegative(cls, value):
        if value < 0:
            raise ValueError("must be >= 0")
        return value

    @validator("eta")
    def validate_eta(cls, eta):
        if not 0 < eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        return eta

    @validator("M")
    def validate_M(cls, M):
        if M < 1:
            raise ValueError("M must be >= 1")
        return M

    @validator("trials")
    def validate_trials(cls, trials):
        if trials < 2:
            raise ValueError("trials must be >= 2")
        return trials

    @validator("seed")
    def validate_seed(cls, seed):
        if not 0 <= seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        return seed

    @validator("prior_lo", "prior_hi")
    def validate_prior_bound(cls, value):
        if value is not None and value <= 0:
            raise ValueError("prior bounds must be > 0")
        return value

    @validator("cutoff_override")
    def validate_cutoff(cls, cutoff):
        if cutoff is not None and cutoff < 1:
            raise ValueError("cutoff_override must be >= 1")
        return cutoff

    @validator("estimator")
    def validate_estimator(cls, estimator):
        if estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {', '.join(ESTIMATORS)}")
        return estimator

    @validator("family")
    def validate_family(cls, family):
        if family is not None and family not in FAMILIES:
            raise ValueError("family must be 'coherent' or 'squeezed'")
        return family

    @validator("split_points")
    def validate_split_points(cls, points):
        if points != 0 and points < 2:
            raise ValueError("split_points must be 0 or >= 2")
        return points

    @validator("fluctuation_mode")
    def validate_mode(cls, mode):
        if mode not in FLUCTUATION_MODES:
            raise ValueError("fluctuation_mode must be 'per_trial' or 'per_probe'")
        return mode

    @root_validator(skip_on_failure=True)
    def validate_strengths(cls, values):
        kind, channel = values["kind"], values["channel"]
        if kind in ("multiparam",) or values["estimator"] == "joint":
            if values["N_c"] <= 0 or values["N_s"] <= 0:
                raise ValueError(f"{kind} needs N_c > 0 and N_s > 0")
        elif kind == "moments":
            if values["N_c"] <= 0:
                raise ValueError("moments needs N_c > 0")
        else:
            key = "N_c" if channel == "displacement" else "N_s"
            if values[key] <= 0:
                raise ValueError(f"{kind} on the {channel} channel needs {key} > 0")
        lo, hi = values.get("prior_lo"), values.get("prior_hi")
        if (lo is None) != (hi is None):
            raise ValueError("prior_lo and prior_hi must be given together")
        if lo is not None and lo >= hi:
            raise ValueError("prior_lo must be < prior_hi")
        if kind == "loss-sim" and values["eta"] == 1:
            raise ValueError("loss-sim needs eta < 1")
        if values["estimator"] == "weak" and values["eta"] < 1:
            raise ValueError("the weak estimator assumes a lossless probe")
        return values

    @property
    def strength_key(self) -> str:
        return "N_c" if self.channel == "displacement" else "N_s"

    @property
    def strength(self) -> float:
        return self.N_c if self.channel == "displacement" else self.N_s

    @property
    def prior(self) -> Optional[Tuple[float, float]]:
        return None if self.prior_lo is None else (self.prior_lo, self.prior_hi)

    @property
    def params(self) -> ChannelParams:
        return ChannelParams(N_c=self.N_c, N_s=self.N_s, eta=self.eta)

    def echo(self) -> Dict[str, Any]:
        return {key: value for key, value in self.dict().items() if value is not None}


class ResultTable(BaseModel):
    name: str
    columns: List[str]
    rows: List[List[Cell]]
    metadata: Dict[str, str] = {}

    class Config:
        smart_union = True

    @root_validator(skip_on_failure=True)
    def validate_shape(cls, values):
        width = len(values["columns"])
        for index, row in enumerate(values["rows"]):
            if len(row) != width:
                raise ValueError(f"row {index} has {len(row)} cells, expected {width}")
        return values

    def column(self, name: str) -> List[Cell]:
        index = self.columns.index(name)
        return [row[index] for row in self.rows]
