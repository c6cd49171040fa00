from pydantic import BaseSettings
from dotenv import load_dotenv

load_dotenv()


class Settings(BaseSettings):
    threads: int = 1
    log_level: str = "INFO"

    truncation_tolerance: float = 1e-8
    truncation_target: float = 1e-10
    max_cutoff: int = 600
    cutoff_padding: int = 15

    quadrature_min_points: int = 8
    quadrature_max_points: int = 4096
    quadrature_tolerance: float = 1e-9

    float_digits: int = 9

    class Config:
        env_prefix = "FOCK_METROLOGY_"
        env_file = ".env"
        env_file_encoding = "utf-8"


settings = Settings()
