import pathlib
from typing import Any, Callable

import sympy as sp

from symfin.algebra import (
    EXPECTED_LABELS,
    AlgebraClosureError,
    classify,
    commutator_table_json,
    commutator_table_text,
    structure_constants,
)
from symfin.config import Config
from symfin.expr import ExpressionError, is_zero, to_text
from symfin.models import EXAMPLE_PARAMS, EvolutionPDE, ModelError, model_from_strings
from symfin.numeric import (
    ErmakovConstraintError,
    Field,
    Grid,
    NumericError,
    discrete_residual,
    ermakov_suite,
    fig3_scenario,
    heat_gaussian_solution,
    integrate_determining_system,
    max_relative_error,
    mode_error,
    mode_initial_data,
    omega_function,
    solve_fd,
    translation_modes,
)
from symfin.reduce import (
    ReductionError,
    closed_form_callable,
    invariant_solution,
    is_maximally_symmetric_1p1,
    reduce_by_translations,
)
from symfin.results import ClassificationReport, RunManifest, SolveReport, VerificationReport
from symfin.symmetry import (
    Generator,
    SymmetryError,
    catalog_generators,
    generators_from_file,
    verify_generators,
)
from symfin.utils import create_incremental_outdir, create_logger, write_json

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class SymRunner:
    def __init__(self, config_data: Config) -> None:
        # The configuration data
        self.config = config_data
        # Every run gets its own numbered directory below save_dir
        self.save_dir = create_incremental_outdir(self.config.save_dir)
        self.logger = create_logger(
            "symfin", self.save_dir / "running.log", self.config.logger_level
        )
        self.artifacts: list[str] = []
        self.repairs: list[str] = []
        self.commands: dict[str, Callable[[], int]] = {
            "verify": self.verify,
            "classify": self.classify,
            "reduce": self.reduce,
            "solve": self.solve,
            "fig3": self.fig3,
            "ermakov": self.ermakov,
            "determining": self.determining,
        }

    def run(self) -> int:
        """Run the configured command and write the run manifest.

        Returns:
            int: 0 on success, 1 on an acceptance failure, 2 on a configuration
            error and 3 on a numeric failure.
        """
        command = self.config.command
        self.logger.info(f"Running command '{command}' in {self.save_dir}")
        try:
            exit_code = self.commands[command]()
        except (ErmakovConstraintError, AlgebraClosureError) as err:
            self.logger.error(str(err))
            exit_code = EXIT_FAILED
        except NumericError as err:
            self.logger.error(f"Numeric failure: {err}")
            exit_code = EXIT_NUMERIC
        except (ModelError, ExpressionError, SymmetryError, ReductionError, OSError, ValueError) as err:
            self.logger.error(f"Configuration error: {err}")
            exit_code = EXIT_CONFIG
        manifest = RunManifest(
            command=command,
            config=self.config.model_dump(mode="json"),
            repairs=sorted(set(self.repairs)),
            artifacts=self.artifacts,
            exit_code=exit_code,
        )
        write_json(self.save_dir / "run-manifest.json", manifest.model_dump(mode="json"))
        self.logger.info(f"Finished '{command}' with exit code {exit_code}")
        return exit_code

    def _write(self, name: str, data: Any) -> pathlib.Path:
        path = write_json(self.save_dir / name, data)
        self.artifacts.append(name)
        return path

    def _params(self, numeric: bool = False) -> dict[str, str]:
        """Configured bindings; the catalog example values when numbers are needed."""
        cfg = self.config.pde
        if cfg.params:
            return dict(cfg.params)
        if numeric or cfg.catalog_id == "twofactor_autonomous":
            return dict(EXAMPLE_PARAMS.get(cfg.catalog_id, {}))
        return {}

    def _pde(self, numeric: bool = False) -> EvolutionPDE:
        cfg = self.config.pde
        return model_from_strings(cfg.catalog_id, self._params(numeric), cfg.declarations)

    def _grid(self, pde: EvolutionPDE) -> Grid:
        mesh = self.config.mesh
        direction = mesh.direction
        if direction == "auto":
            s = float(sp.sympify(pde.time_coefficient))
            direction = "forward" if s < 0 else "backward"
        return Grid(**mesh.model_dump(exclude={"direction"}), direction=direction)

    def _generators(self, pde: EvolutionPDE, numeric: bool = False) -> list[Generator]:
        cfg = self.config.pde
        if cfg.generator_file is not None:
            return generators_from_file(cfg.generator_file, pde.table)
        return catalog_generators(cfg.catalog_id, self._params(numeric), pde.table)

    def verify(self) -> int:
        pde = self._pde()
        generators = self._generators(pde)
        report = self._verify(pde, generators)
        self._write("verify.json", report.model_dump(mode="json", by_alias=True))
        for r in report.reports:
            print(f"{r.generator}: {r.verdict}")
            if not r.passed:
                print(f"  residual: {r.residual}")
        return EXIT_OK if report.passed else EXIT_FAILED

    def _verify(self, pde: EvolutionPDE, generators: list[Generator]) -> VerificationReport:
        report = verify_generators(pde, generators, self.config.workers)
        for r in report.reports:
            self.repairs.extend(f"{r.generator}: {repair}" for repair in r.repairs)
            if not r.passed:
                self.logger.warning(f"{r.generator} is not a symmetry: {r.residual}")
        return report

    def classify(self) -> int:
        cfg = self.config.pde
        pde = self._pde(numeric=True)
        generators = self._generators(pde, numeric=True)
        signature = structure_constants(generators)
        label = classify(signature)
        expected = None if cfg.generator_file is not None else EXPECTED_LABELS.get(cfg.catalog_id)
        report = ClassificationReport(
            model=cfg.catalog_id,
            basis=signature.names,
            label=label,
            expected=expected,
            dimension=signature.dimension,
            derived_dimensions=signature.derived_dimensions,
            center_dimension=signature.center_dimension,
            table=commutator_table_json(signature),
            solution_symmetries=[f"[{a}, {b}]" for a, b in signature.solution_symmetries],
        )
        self._write("classify.json", report.model_dump(mode="json"))
        print(commutator_table_text(signature))
        print(label)
        if not report.passed:
            self.logger.warning(f"Label {label} differs from the stored label {expected}")
        return EXIT_OK if report.passed else EXIT_FAILED

    def reduce(self) -> int:
        cfg = self.config.reduce
        pde = self._pde()
        c1, c2 = sp.Rational(cfg.c1), sp.Rational(cfg.c2)
        solution = invariant_solution(pde, c1, c2)
        reduced, ode = reduce_by_translations(pde, [c1, c2])
        maximal = is_maximally_symmetric_1p1(reduced)
        # The ODE left after both reductions must give back w'/w
        t = pde.table.time
        ode_matches = is_zero(
            -ode.source / ode.time_coefficient - sp.diff(solution.w, t) / solution.w
        )
        report = solution.to_report().model_copy(
            update={
                "reduced_equation": to_text(reduced.theta(), reduced.table),
                "maximally_symmetric": maximal,
            }
        )
        self._write("closed_form.json", report.model_dump(mode="json"))
        print(f"w(t) = {report.w_expression}")
        for declaration in report.declarations:
            print(f"  {declaration}")
        if not ode_matches:
            self.logger.warning("The reduced ODE does not reproduce w(t)")
        passed = report.residual_zero and maximal and ode_matches
        return EXIT_OK if passed else EXIT_FAILED

    def solve(self) -> int:
        cfg = self.config.pde
        pde = self._pde(numeric=True)
        grid = self._grid(pde)
        if cfg.initial_data == "gaussian":
            t_data = grid.t_start if grid.direction == "forward" else grid.t_end
            exact = heat_gaussian_solution(pde, cfg.width, t_data)
        else:
            rc = self.config.reduce
            exact = closed_form_callable(invariant_solution(pde, rc.c1, rc.c2))
        field = solve_fd(pde, grid, exact, exact)
        error = max_relative_error(field, Field.sample(grid, exact))
        last = field.values[-1] if grid.direction == "forward" else field.values[0]
        csv = field.to_csv(self.save_dir / "solution.csv", y0=0.0)
        self.artifacts.append(csv.name)
        report = SolveReport(
            model=cfg.catalog_id,
            grid=grid.model_dump(),
            initial_data=cfg.initial_data,
            max_value=float(last.max()),
            min_value=float(last.min()),
            discrete_residual=discrete_residual(field, pde),
            error=error,
            csv=csv.name,
        )
        self._write("solve.json", report.model_dump(mode="json"))
        print(f"max relative error {error:.6e}")
        return EXIT_OK if error <= self.config.tolerances.fd_error else EXIT_FAILED

    def fig3(self) -> int:
        cfg = self.config.fig3
        grid = self._grid(model_from_strings("bs2d_special_nonauto")).model_copy(
            update={"direction": "backward"}
        )
        _, report = fig3_scenario(
            cfg.r0,
            cfg.eps,
            cfg.omega,
            cfg.c1,
            cfg.c2,
            grid,
            sigma0=cfg.sigma0,
            rho=cfg.rho,
            x0=cfg.x0,
            csv_path=self.save_dir / "fig3.csv",
        )
        self.artifacts.append(report.csv)
        self._write("fig3.json", report.model_dump(mode="json"))
        print(f"frequency {report.frequency_text}")
        print(f"error {report.error:.6e}")
        if cfg.eps == 0:
            frequency_ok = report.detected_frequency is None
        else:
            frequency_ok = (
                report.detected_frequency is not None
                and abs(report.detected_frequency - cfg.omega) <= report.frequency_bin_width
            )
        passed = frequency_ok and report.error <= self.config.tolerances.fd_error
        return EXIT_OK if passed else EXIT_FAILED

    def ermakov(self) -> int:
        cfg = self.config.ermakov
        tol = self.config.tolerances
        report = ermakov_suite(
            omega_function(cfg.omega),
            cfg.A,
            cfg.B,
            cfg.C,
            (cfg.t_start, cfg.t_end),
            x0=cfg.x0,
            v0=cfg.v0,
            n_eval=cfg.n_eval,
            rtol=tol.ode_rtol,
            atol=tol.ode_atol,
        )
        self._write("ermakov.json", report.model_dump(mode="json"))
        print(f"Pinney residual {report.pinney_residual:.6e}")
        print(f"invariant drift {report.invariant_drift:.6e}")
        passed = (
            report.pinney_residual <= tol.pinney_residual
            and report.invariant_drift <= tol.invariant_drift
            and report.time_monotone
        )
        return EXIT_OK if passed else EXIT_FAILED

    def determining(self) -> int:
        cfg = self.config.determining
        tol = self.config.tolerances
        coefficients = cfg.resolved_coefficients
        mode = None
        initial = cfg.initial
        if cfg.mode is not None:
            eigenvalue, vector, rate = translation_modes(cfg.system, coefficients)[cfg.mode]
            self.logger.info(f"Starting on the mode of eigenvalue {eigenvalue:.6g}")
            initial = mode_initial_data(cfg.system, vector, rate)
            mode = (vector, rate)
        trajectory = integrate_determining_system(
            cfg.system,
            coefficients,
            initial,
            B2=cfg.B2,
            a=cfg.a,
            t_span=(cfg.t_start, cfg.t_end),
            n_eval=cfg.n_eval,
            rtol=tol.ode_rtol,
            atol=tol.ode_atol,
        )
        error = mode_error(trajectory, *mode) if mode is not None else None
        report = trajectory.to_report(error)
        csv = self.save_dir / "determining.csv"
        trajectory.to_frame().to_csv(csv, index=False, float_format="%.17g")
        self.artifacts.append(csv.name)
        self._write("determining.json", report.model_dump(mode="json"))
        print(f"max residuals {', '.join(f'{r:.3e}' for r in report.max_residuals)}")
        if error is not None:
            print(f"mode error {error:.6e}")
        passed = max(report.max_residuals) <= tol.determining_residual and (
            error is None or error <= tol.mode_error
        )
        return EXIT_OK if passed else EXIT_FAILED
