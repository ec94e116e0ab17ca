from pydantic_settings import (
    BaseSettings,
    SettingsConfigDict,
    PydanticBaseSettingsSource,
    CliSettingsSource,
)
from pydantic import Field, model_validator, StringConstraints
from typing import Annotated
import math
import pathlib

import sympy as sp

COMMANDS = ("verify", "classify", "reduce", "solve", "fig3", "ermakov", "determining")

# Constant coefficients of the determining-system integration when none are given.
DEFAULT_COEFFICIENTS: dict[str, dict[str, str]] = {
    "twofactor": {"P1": "1", "P2": "1/2", "P3": "1/5", "Q1": "1/4", "Q2": "2", "Q3": "1/10"},
    "bs2d": {"P1": "11/10", "Q1": "3/10", "Q2": "4/5", "Q3": "1/5", "k": "1/20"},
}


class GridConfig(BaseSettings):
    """Configuration settings for the finite-difference grid."""

    x_min: float = Field(default=-3.0, description="Left end of the x range")
    x_max: float = Field(default=3.0, description="Right end of the x range")
    y_min: float = Field(default=-3.0, description="Left end of the y range")
    y_max: float = Field(default=3.0, description="Right end of the y range")
    nx: int = Field(default=101, ge=41, description="Number of nodes in x (odd)")
    ny: int = Field(default=101, ge=41, description="Number of nodes in y (odd)")
    t_start: float = Field(default=0.0, description="First time of the grid")
    t_end: float = Field(default=1.0, description="Last time of the grid")
    nt: int = Field(default=400, ge=2, description="Number of time steps")
    direction: Annotated[str, StringConstraints(to_lower=True)] = Field(
        default="auto",
        description=(
            "Marching direction: forward, backward or auto "
            "(forward when the u_t coefficient is negative)"
        ),
    )

    @model_validator(mode="after")
    def validate_data(self) -> "GridConfig":
        """Validate the data in the GridConfig."""
        assert self.nx % 2 == 1 and self.ny % 2 == 1, (
            f"Node counts must be odd, got {self.nx}x{self.ny}"
        )
        assert self.x_min < self.x_max, f"Empty x range [{self.x_min}, {self.x_max}]"
        assert self.y_min < self.y_max, f"Empty y range [{self.y_min}, {self.y_max}]"
        assert self.t_start < self.t_end, f"Empty time range [{self.t_start}, {self.t_end}]"
        assert self.direction in [
            "auto",
            "forward",
            "backward",
        ], f"Invalid direction {self.direction}"
        return self


class ToleranceConfig(BaseSettings):
    """Configuration settings for the acceptance thresholds and the ODE tolerances."""

    fd_error: float = Field(
        default=1e-3, gt=0, description="Max relative error of a finite-difference solve"
    )
    determining_residual: float = Field(
        default=1e-7, gt=0, description="Max residual of the determining equations"
    )
    mode_error: float = Field(
        default=1e-7, gt=0, description="Max relative error against the eigen-mode"
    )
    invariant_drift: float = Field(
        default=1e-6, gt=0, description="Max drift of the Ermakov-Lewis invariant"
    )
    pinney_residual: float = Field(
        default=1e-8, gt=0, description="Max gap between rho and the integrated Pinney equation"
    )
    ode_rtol: float = Field(default=1e-11, gt=0, description="Relative tolerance of solve_ivp")
    ode_atol: float = Field(default=1e-13, gt=0, description="Absolute tolerance of solve_ivp")


class PDEConfig(BaseSettings):
    """Configuration settings for the equation."""

    catalog_id: Annotated[str, StringConstraints(to_lower=True)] = Field(
        default="bs2d_canonical", description="Catalog id of the equation"
    )
    params: dict[str, str] = Field(
        default_factory=dict,
        description="Parameter bindings as expression strings. Unbound parameters stay symbolic",
    )
    declarations: tuple[str, ...] = Field(
        default=(), description="Antiderivative declarations 'I1 := int(...)' used by the bindings"
    )
    generator_file: pathlib.Path | None = Field(
        default=None,
        description="YAML or JSON file with generators to verify instead of the stored catalog",
    )
    initial_data: Annotated[str, StringConstraints(to_lower=True)] = Field(
        default="gaussian", description="Data of the solve command: gaussian or exponential"
    )
    width: float = Field(default=1.0, gt=0, description="Width of the Gaussian data")

    @model_validator(mode="after")
    def validate_data(self) -> "PDEConfig":
        """Validate the data in the PDEConfig."""
        assert self.initial_data in [
            "gaussian",
            "exponential",
        ], f"Invalid initial data {self.initial_data}"
        if self.generator_file is not None:
            assert self.generator_file.is_file(), f"Generator file {self.generator_file} not found"
        return self


def _is_rational(text: str) -> bool:
    try:
        sp.Rational(text)
    except (TypeError, ValueError):
        return False
    return True


class ReduceConfig(BaseSettings):
    """Configuration settings for the invariant solution."""

    c1: str = Field(default="1/2", description="Rational constant c1 of Z1 + c1 X_u")
    c2: str = Field(default="1/3", description="Rational constant c2 of Z3 + c2 X_u")

    @model_validator(mode="after")
    def validate_data(self) -> "ReduceConfig":
        """Validate the data in the ReduceConfig."""
        for c in (self.c1, self.c2):
            assert _is_rational(c), f"{c} is not a rational number"
        return self


class Fig3Config(BaseSettings):
    """Configuration settings for the periodic discount-rate scenario."""

    r0: float = Field(default=0.05, description="Mean discount rate")
    eps: float = Field(default=0.02, ge=0, description="Amplitude of the oscillation")
    omega: float = Field(default=2 * math.pi, gt=0, description="Angular frequency")
    c1: float = Field(default=0.5, description="Exponent c1 of the closed form")
    c2: float = Field(default=0.5, description="Exponent c2 of the closed form")
    sigma0: float = Field(default=0.3, gt=0, description="Common volatility")
    rho: float = Field(default=0.5, gt=-1, lt=1, description="Correlation")
    x0: float = Field(default=0.0, description="Abscissa where the frequency is read")


class ErmakovConfig(BaseSettings):
    """Configuration settings for the Ermakov-Pinney suite."""

    omega: str = Field(default="sqrt(1 + 0.1*t)", description="omega(t) as an expression in t")
    A: float = Field(default=1.0, gt=0, description="Coefficient of v1^2 in rho^2")
    B: float = Field(default=0.0, description="Coefficient of 2 v1 v2 in rho^2")
    C: float = Field(default=1.0, description="Coefficient of v2^2 in rho^2")
    t_start: float = Field(default=0.0, description="Start of the integration")
    t_end: float = Field(default=50.0, description="End of the integration")
    x0: float = Field(default=0.3, description="x(t_start) of the test trajectory")
    v0: float = Field(default=0.7, description="x'(t_start) of the test trajectory")
    n_eval: int = Field(default=2001, ge=2, description="Number of output times")

    @model_validator(mode="after")
    def validate_data(self) -> "ErmakovConfig":
        """Validate the data in the ErmakovConfig."""
        assert self.t_start < self.t_end, f"Empty time range [{self.t_start}, {self.t_end}]"
        return self


class DeterminingConfig(BaseSettings):
    """Configuration settings for the integration of a determining system."""

    system: Annotated[str, StringConstraints(to_lower=True)] = Field(
        default="twofactor", description="twofactor or bs2d"
    )
    coefficients: dict[str, str] = Field(
        default_factory=dict,
        description="Model coefficients as expressions in t. Empty uses constant example values",
    )
    a: str | None = Field(
        default=None,
        description="Prescribed a(t). By default a follows the equations from initial['a']",
    )
    B2: float = Field(default=0.0, description="Rotation constant")
    initial: dict[str, float] = Field(
        default_factory=dict,
        description="Initial values keyed a, b1, b1', g, g', h (twofactor) or a, b1, b1', f, f', g",
    )
    mode: int | None = Field(
        default=0,
        ge=0,
        description="Start on this eigen-mode of the drift matrix and measure the error against it",
    )
    t_start: float = Field(default=0.0, description="Start of the integration")
    t_end: float = Field(default=1.0, description="End of the integration")
    n_eval: int = Field(default=201, ge=2, description="Number of output times")

    @model_validator(mode="after")
    def validate_data(self) -> "DeterminingConfig":
        """Validate the data in the DeterminingConfig."""
        assert self.system in ["twofactor", "bs2d"], f"Invalid system {self.system}"
        assert self.t_start < self.t_end, f"Empty time range [{self.t_start}, {self.t_end}]"
        if self.mode is not None:
            assert self.mode < 2, f"Mode index {self.mode} out of range"
            # Modes are exact for a = 0 and B2 = 0 only
            assert self.a is None and self.B2 == 0, "Eigen-modes need a = 0 and B2 = 0"
        return self

    @property
    def resolved_coefficients(self) -> dict[str, str]:
        return self.coefficients or DEFAULT_COEFFICIENTS[self.system]


class Config(BaseSettings):
    """Configuration settings for a symfin run."""

    # Allow the configuration to be parsed from the command line
    model_config = SettingsConfigDict(cli_parse_args=True, env_nested_delimiter="__")
    command: Annotated[str, StringConstraints(to_lower=True)] = Field(
        default="verify", description=f"Command to run: {', '.join(COMMANDS)}"
    )
    logger_level: Annotated[str, StringConstraints(to_upper=True)] = Field(
        default="INFO", description="Logger level"
    )
    save_dir: pathlib.Path = Field(
        default=pathlib.Path("output"), description="Directory to save the output files"
    )
    workers: int | None = Field(
        default=None,
        ge=1,
        description="Workers of the batch verification (capped by SYMFIN_THREADS)",
    )
    pde: PDEConfig = PDEConfig()
    mesh: GridConfig = GridConfig()
    tolerances: ToleranceConfig = ToleranceConfig()
    reduce: ReduceConfig = ReduceConfig()
    fig3: Fig3Config = Fig3Config()
    ermakov: ErmakovConfig = ErmakovConfig()
    determining: DeterminingConfig = DeterminingConfig()

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        return (
            CliSettingsSource(settings_cls, cli_parse_args=True),
            env_settings,
            init_settings,
        )

    @model_validator(mode="after")
    def validate_data(self) -> "Config":
        """Validate the data in the Config."""
        assert self.command in COMMANDS, f"Invalid command {self.command}"
        assert self.logger_level in [
            "DEBUG",
            "INFO",
            "WARNING",
            "ERROR",
            "CRITICAL",
        ], f"Invalid logger level {self.logger_level}"
        return self
