from typing import List, Optional, Tuple

from pydantic import BaseModel, root_validator, validator

from src.schemas.Channel_Schemas import ChannelParams

PSD_SLACK = 1e-10


class FisherMatrix(BaseModel):
    h_cc: float
    h_ss: float
    h_cs: float

    @root_validator(skip_on_failure=True)
    def validate_psd(cls, values):
        h_cc, h_ss, h_cs = values["h_cc"], values["h_ss"], values["h_cs"]
        if h_cc < -PSD_SLACK or h_ss < -PSD_SLACK:
            raise ValueError("Fisher matrix diagonal must be >= 0")
        if h_cc * h_ss - h_cs ** 2 < -PSD_SLACK * max(1.0, h_cc * h_ss):
            raise ValueError("Fisher matrix is not positive semidefinite")
        return values

    @property
    def det(self) -> float:
        return self.h_cc * self.h_ss - self.h_cs ** 2

    @property
    def offdiag_ratio(self) -> float:
        denom = self.h_cc * self.h_ss
        return self.h_cs ** 2 / denom if denom > 0 else 0.0

    class Config:
        allow_mutation = False


class CRBound(BaseModel):
    variance_bound: float
    M: int
    F: float

    @validator("variance_bound")
    def validate_bound(cls, bound):
        if bound <= 0:
            raise ValueError("variance bound must be > 0")
        return bound

    class Config:
        allow_mutation = False


class MomentReport(BaseModel):
    mean: float
    variance: float
    second_moment_variance: float


class ErrorStats(BaseModel):
    mse: float
    stderr_bar: float
    bias: float
    trials: int
    boundary_hits: int = 0
    failures: int = 0

    class Config:
        allow_mutation = False


class JointErrorStats(BaseModel):
    Nc: ErrorStats
    Ns: ErrorStats
    covariance: Tuple[float, float, float]

    class Config:
        allow_mutation = False


class Estimate(BaseModel):
    value: float
    at_boundary: bool = False


class JointEstimate(BaseModel):
    Nc: float
    Ns: float
    Nc_at_boundary: bool = False
    Ns_at_boundary: bool = False
    sweeps: int = 0


class MonteCarloScenario(BaseModel):
    m: int
    kind: str = "displacement"
    estimator: str = "mle"
    params: ChannelParams
    M: int
    trials: int
    seed: int = 0
    prior: Optional[Tuple[float, float]] = None
    prior_Ns: Optional[Tuple[float, float]] = None
    cutoff: Optional[int] = None

    @validator("m")
    def validate_m(cls, m):
        if m < 0:
            raise ValueError("m must be >= 0")
        return m

    @validator("kind")
    def validate_kind(cls, kind):
        if kind not in ("displacement", "squeezing"):
            raise ValueError("kind must be 'displacement' or 'squeezing'")
        return kind

    @validator("estimator")
    def validate_estimator(cls, estimator):
        if estimator not in ("mle", "weak", "joint"):
            raise ValueError("estimator must be one of 'mle', 'weak', 'joint'")
        return estimator

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

    @validator("prior", "prior_Ns")
    def validate_prior(cls, prior):
        if prior is not None and not 0 < prior[0] < prior[1]:
            raise ValueError("prior must satisfy 0 < lo < hi")
        return prior

    @property
    def truth(self) -> float:
        return self.params.N_c if self.kind == "displacement" else self.params.N_s


class FluctuationReport(BaseModel):
    excess_error: float
    stderr_bar: float
    mse: float
    cr_value: float
    sigma2: float
    realized_variance: float
    mode: str


class TrialEnsemble(BaseModel):
    counts: List[List[int]]
    M: int
    trials: int
    seed: int

    @root_validator(skip_on_failure=True)
    def validate_counts(cls, values):
        counts, M = values["counts"], values["M"]
        if len(counts) != values["trials"]:
            raise ValueError("one count vector per trial is required")
        if any(sum(row) != M for row in counts):
            raise ValueError("every trial must hold exactly M outcomes")
        return values
