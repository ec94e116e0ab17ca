from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field


class SymmetryReport(BaseModel):
    """Outcome of the on-solution symmetry test of one generator."""

    model_config = ConfigDict(populate_by_name=True)

    model: str = Field(..., description="Catalog id of the equation.")
    generator: str = Field(..., description="Name of the vector field.")
    verdict: Literal["symmetry", "not-symmetry"] = Field(
        ..., description="Whether the prolonged field annihilates the equation on solutions."
    )
    multiplier: str | None = Field(
        default=None,
        serialization_alias="lambda",
        description="The function Lambda with X^[2] Theta = Lambda Theta, when the verdict is positive.",
    )
    residual: str | None = Field(
        default=None,
        description="The nonvanishing on-solution remainder, when the verdict is negative.",
    )
    psi: str | None = Field(
        default=None, description="Conformal factor of the coefficient condition, when requested."
    )
    repairs: list[str] = Field(
        default_factory=list, description="Repairs of the printed form applied to this generator."
    )

    @property
    def passed(self) -> bool:
        return self.verdict == "symmetry"


class VerificationReport(BaseModel):
    """Verdicts for a whole generator catalog."""

    model: str = Field(..., description="Catalog id of the equation.")
    reports: list[SymmetryReport] = Field(..., description="One report per generator.")

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    @property
    def failed(self) -> list[str]:
        return [r.generator for r in self.reports if not r.passed]


class ClassificationReport(BaseModel):
    """Commutator table and decomposition label of a generator basis."""

    model: str = Field(..., description="Catalog id of the equation.")
    basis: list[str] = Field(..., description="Generator names, in basis order.")
    label: str = Field(..., description="The decomposition label found.")
    expected: str | None = Field(default=None, description="The label stored for the catalog.")
    dimension: int = Field(..., description="Dimension of the finite algebra.")
    derived_dimensions: list[int] = Field(..., description="Dimensions of the derived series.")
    center_dimension: int = Field(..., description="Dimension of the center.")
    table: dict[str, dict[str, str]] = Field(
        ..., description="Commutator of every pair as a combination of basis names."
    )
    solution_symmetries: list[str] = Field(
        default_factory=list,
        description="Pairs whose bracket lands in the solution-symmetry ideal.",
    )

    @property
    def passed(self) -> bool:
        return self.expected is None or self.expected == self.label


class ClosedFormReport(BaseModel):
    """The invariant solution u = w(t) exp(c1 x + c2 y)."""

    c1: str = Field(..., description="Rational c1.")
    c2: str = Field(..., description="Rational c2.")
    w_expression: str = Field(..., description="w(t), with its antiderivative declarations.")
    k_spec: str = Field(..., description="The discount rate k(t).")
    lambda1_spec: str = Field(..., description="The drift Lambda1(t).")
    lambda2_spec: str = Field(..., description="The drift Lambda2(t).")
    declarations: list[str] = Field(
        default_factory=list, description="Antiderivative declarations used by w_expression."
    )
    residual_zero: bool = Field(..., description="Substitution into the equation gives zero.")
    reduced_equation: str | None = Field(
        default=None, description="The (1+1) equation after the first reduction."
    )
    maximally_symmetric: bool | None = Field(
        default=None, description="Whether the (1+1) equation is equivalent to the heat equation."
    )


class SolveReport(BaseModel):
    """Summary of a finite-difference solve."""

    model: str = Field(..., description="Catalog id of the equation.")
    grid: dict[str, Any] = Field(..., description="The grid used.")
    initial_data: str = Field(..., description="Kind of initial (or terminal) data.")
    max_value: float = Field(..., description="Maximum of the final slab.")
    min_value: float = Field(..., description="Minimum of the final slab.")
    discrete_residual: float = Field(..., description="Max-norm discrete residual of the field.")
    error: float | None = Field(
        default=None, description="Max relative error against the oracle, if one exists."
    )
    csv: str = Field(..., description="File name of the y = 0 slice.")


class Fig3Report(BaseModel):
    """Periodic discount-rate scenario."""

    r0: float = Field(..., description="Mean rate.")
    eps: float = Field(..., description="Amplitude of the oscillation.")
    omega: float = Field(..., description="Angular frequency of the oscillation.")
    detected_frequency: float | None = Field(
        ..., description="Angular frequency of the dominant DFT peak, None if there is no peak."
    )
    frequency_bin_width: float = Field(..., description="Angular width of one DFT bin.")
    error: float = Field(..., description="FD against closed form, max relative error.")
    csv: str = Field(..., description="File name of the y = 0 slice.")

    @property
    def frequency_text(self) -> str:
        if self.detected_frequency is None:
            return "none"
        return f"{self.detected_frequency:.6g}"


class ErmakovReport(BaseModel):
    """Ermakov-Pinney checks along one trajectory."""

    A: float = Field(..., description="Coefficient of v1^2.")
    B: float = Field(..., description="Coefficient of v1 v2.")
    C: float = Field(..., description="Coefficient of v2^2.")
    wronskian: float = Field(..., description="Wronskian of the two linear solutions.")
    wronskian_drift: float = Field(..., description="Maximum deviation of the Wronskian.")
    pinney_residual: float = Field(
        ..., description="max |rho_pinney - rho| / max rho, rho_pinney integrated on its own."
    )
    invariant_drift: float = Field(..., description="Maximum deviation of the Lewis invariant.")
    phase_drift: float = Field(
        ..., description="Maximum deviation of the canonical-transformation phase."
    )
    time_monotone: bool = Field(..., description="T(t) = int rho^-2 is strictly increasing.")


class DeterminingReport(BaseModel):
    """Integrated trajectories of a determining system."""

    system: Literal["twofactor", "bs2d"] = Field(..., description="Which system was integrated.")
    B2: float = Field(..., description="The rotation constant.")
    t_end: float = Field(..., description="End of the integration interval.")
    max_residuals: list[float] = Field(..., description="Max |residual| of each equation.")
    final_state: dict[str, float] = Field(..., description="Values of the unknowns at t_end.")
    mode_error: float | None = Field(
        default=None, description="Relative error against the eigenmode oracle, if requested."
    )


class RunManifest(BaseModel):
    """Everything needed to reproduce a run."""

    command: str = Field(..., description="The command that ran.")
    config: dict[str, Any] = Field(..., description="The resolved configuration.")
    repairs: list[str] = Field(default_factory=list, description="Printed-form repairs applied.")
    artifacts: list[str] = Field(default_factory=list, description="Files written by the run.")
    exit_code: int = Field(..., description="The process exit code.")
