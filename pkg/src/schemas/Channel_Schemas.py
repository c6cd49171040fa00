import math
from typing import List, Union

from pydantic import BaseModel, validator

from src.services.hilbert import PhotonDistribution


class ChannelParams(BaseModel):
    N_c: float = 0.0
    N_s: float = 0.0
    eta: float = 1.0

    @validator("N_c", "N_s")
    def validate_strength(cls, value):
        if not math.isfinite(value) or value < 0:
            raise ValueError("strength must be a finite number >= 0")
        return value

    @validator("eta")
    def validate_eta(cls, eta):
        if not 0 < eta <= 1:
            raise ValueError("transmissivity eta must lie in (0, 1]")
        return eta

    def weak_limit_load(self, m: int) -> float:
        return self.N_c * (2 * m + 1) + self.N_s * (m * m + m + 1) / 2

    class Config:
        allow_mutation = False


class FockProbe(BaseModel):
    m: int

    @validator("m")
    def validate_m(cls, m):
        if m < 0:
            raise ValueError("photon number m must be >= 0")
        return m

    def distribution(self) -> PhotonDistribution:
        return PhotonDistribution.delta(self.m)

    class Config:
        allow_mutation = False


class MixtureProbe(BaseModel):
    weights: List[float]

    @validator("weights")
    def validate_weights(cls, weights):
        if not weights:
            raise ValueError("mixture needs at least one weight")
        if min(weights) < 0:
            raise ValueError("mixture weights must be >= 0")
        if abs(sum(weights) - 1.0) > 1e-8:
            raise ValueError("mixture weights must sum to 1")
        return weights

    def distribution(self) -> PhotonDistribution:
        return PhotonDistribution.from_probs(self.weights)

    @classmethod
    def from_distribution(cls, dist: PhotonDistribution) -> "MixtureProbe":
        return cls(weights=list(dist.renormalized().probs))

    class Config:
        allow_mutation = False


class GaussianProbe(BaseModel):
    beta: float = 0.0
    zeta: float = 0.0

    @validator("beta", "zeta")
    def validate_nonnegative(cls, value):
        if not math.isfinite(value) or value < 0:
            raise ValueError("Gaussian probe parameters must be real and >= 0")
        return value

    @property
    def mean_photon(self) -> float:
        return self.beta ** 2 + math.sinh(self.zeta) ** 2

    @classmethod
    def coherent(cls, mean_photon: float) -> "GaussianProbe":
        return cls(beta=math.sqrt(mean_photon))

    @classmethod
    def squeezed(cls, mean_photon: float) -> "GaussianProbe":
        return cls(zeta=math.asinh(math.sqrt(mean_photon)))

    @classmethod
    def split(cls, mean_photon: float, squeeze_fraction: float) -> "GaussianProbe":
        """Зонд, у которого доля ``squeeze_fraction`` фотонов в сжатии, остальные в смещении."""
        if not 0 <= squeeze_fraction <= 1:
            raise ValueError("squeeze_fraction must lie in [0, 1]")
        return cls(
            beta=math.sqrt((1 - squeeze_fraction) * mean_photon),
            zeta=math.asinh(math.sqrt(squeeze_fraction * mean_photon)),
        )

    class Config:
        allow_mutation = False


ProbeState = Union[FockProbe, MixtureProbe, GaussianProbe]
