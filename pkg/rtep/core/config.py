"""Application configuration settings"""

from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

# Load environment variables
load_dotenv()


class Settings(BaseSettings):
    """Process-wide defaults, overridable through RTEP_* environment variables"""

    app_name: str = "rtep"
    app_description: str = "Robust AC transmission expansion planning with Benders decomposition"

    # Logging Configuration (RTEP_LOG)
    log: str = "INFO"

    # Interior-point defaults
    ipm_tolerance: float = 1e-8
    ipm_acceptable_tolerance: float = 1e-5
    ipm_max_iter: int = 200

    # Benders / branch-and-bound defaults
    bd_tolerance: Optional[float] = None  # None: use the case's bd_tolerance
    bd_max_iters: int = 200
    bb_node_limit: int = 50_000

    # Monte-Carlo defaults
    mcs_samples: int = 2_000
    mcs_seed: int = 2021
    workers: int = 1

    # Output Configuration
    output_dir: str = "out"

    model_config = SettingsConfigDict(
        env_prefix="RTEP_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    @property
    def log_level(self) -> str:
        """Normalized logging level name"""
        return self.log.strip().upper()


# Global settings instance
settings = Settings()


class RunConfig(BaseModel):
    """Validated configuration of one CLI run"""

    model_config = ConfigDict(validate_assignment=True, extra="forbid")

    command: str = Field(..., description="Subcommand name")
    case: Path = Field(..., description="Case file (TOML) or bundled case name")
    u_d: float = Field(0.0, ge=0, description="Load uncertainty [%]")
    u_r: float = Field(0.0, ge=0, le=100, description="RES uncertainty [%]")
    samples: int = Field(default_factory=lambda: settings.mcs_samples, ge=0)
    seed: int = Field(default_factory=lambda: settings.mcs_seed)
    strict: bool = Field(False, description="Strict (zero-curtailment) MCS mode")
    init_topology: str = Field("all", description="Initial topology: all | deterministic")
    dual_slave: str = Field("nlp", description="Worst-case search: nlp | vertex")
    max_iters: int = Field(default_factory=lambda: settings.bd_max_iters, ge=1)
    tolerance: Optional[float] = Field(default_factory=lambda: settings.bd_tolerance, gt=0)
    plan: Optional[Path] = Field(None, description="Plan file for verify")
    topology: str = Field("base", description="Topology for dualgap: base | plan | all")
    optimality_gap: bool = Field(False, description="Add non-convex against relaxed rows to dualgap")
    ud_values: List[float] = Field(default_factory=lambda: [0, 5, 10, 15, 20, 25, 30])
    ur_values: List[float] = Field(default_factory=list)
    workers: int = Field(default_factory=lambda: settings.workers, ge=1)
    out: Path = Field(default_factory=lambda: Path(settings.output_dir))

    @field_validator("init_topology")
    @classmethod
    def validate_init_topology(cls, v):
        if v not in {"all", "deterministic"}:
            raise ValueError("init_topology must be 'all' or 'deterministic'")
        return v

    @field_validator("dual_slave")
    @classmethod
    def validate_dual_slave(cls, v):
        if v not in {"nlp", "vertex"}:
            raise ValueError("dual_slave must be 'nlp' or 'vertex'")
        return v

    @field_validator("topology")
    @classmethod
    def validate_topology(cls, v):
        if v not in {"base", "plan", "all"}:
            raise ValueError("topology must be 'base', 'plan' or 'all'")
        return v

    @field_validator("ud_values", "ur_values")
    @classmethod
    def validate_percent_grid(cls, v):
        if any(x < 0 for x in v):
            raise ValueError("uncertainty percentages must be non-negative")
        return sorted(float(x) for x in v)

    @model_validator(mode="after")
    def validate_command_inputs(self):
        if self.command == "verify" and self.plan is None:
            raise ValueError("verify needs a plan file (--plan)")
        if any(x > 100 for x in self.ur_values):
            raise ValueError("u_r values must not exceed 100%")
        return self
