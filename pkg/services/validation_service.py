"""
One-command invariant suite: every check reports pass, fail or skip with a
short detail line.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List

import numpy as np
import scipy.sparse.linalg as spla

from config import ExperimentConfig
from services.fem_service import (
    AffineBlocks,
    assemble_affine_blocks,
    assemble_boundary_load,
    assemble_direct,
    assemble_forcing,
    build_problem,
    h1_error,
    h1_norms,
    solve_system,
)
from services.greedy_service import greedy_select, output_error_bounds
from services.mesh_service import MIN_TARGET_ELEMENTS, Geometry, TriMesh, generate_mesh, refine_mesh
from services.metropolis_service import metropolis_select
from services.optics_service import CoefficientModel, equivalent_wavelengths, theta, theta_matrix
from services.rb_service import (
    ReducedBasis,
    TruthCache,
    add_snapshot,
    build_basis,
    build_truth_cache,
    empty_basis,
    online_coefficients,
    orthonormality_defect,
    output_values,
    relative_errors,
    residual_dual_norms,
)
from services.sampling_service import MetropolisConfig, StoppingRule, TrainingMesh

logger = logging.getLogger(__name__)

PASS, FAIL, SKIP = "pass", "fail", "skip"

AFFINE_TOLERANCE = 1e-12
MMS_RATIO_RANGE = (1.6, 2.4)
MMS_COARSENING = 16
ORTHONORMALITY_TOLERANCE = 1e-8
MAX_ORTHOGONAL_CONDITION = 1e2
MIN_RAW_CONDITION = 1e6
RAW_CONDITION_FROM = 8
REPRODUCTION_TOLERANCE = 1e-10
BOUND_SLACK = 1e-8
MONOTONICITY_SLACK = 1e-6
BRUTE_FORCE_TOLERANCE = 1e-8
SINGLETON_WAVELENGTH = 700.0
SINGLETON_DISTANCE = 5.0


@dataclass
class CheckResult:
    name: str
    status: str
    detail: str = ""

    @property
    def failed(self) -> bool:
        return self.status == FAIL


@dataclass
class ValidationReport:
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not any(check.failed for check in self.checks)

    @property
    def failures(self) -> List[CheckResult]:
        return [check for check in self.checks if check.failed]

    def status_of(self, name: str) -> str:
        for check in self.checks:
            if check.name == name:
                return check.status
        raise KeyError(name)


@dataclass(frozen=True, eq=False)
class ValidationProblem:
    config: ExperimentConfig
    geometry: Geometry
    mesh: TriMesh
    blocks: AffineBlocks
    model: CoefficientModel
    test_truths: TruthCache


def _verdict(name: str, problems: List[str], ok_detail: str) -> CheckResult:
    if problems:
        return CheckResult(name, FAIL, "; ".join(problems))
    return CheckResult(name, PASS, ok_detail)


def check_optics(model: CoefficientModel) -> CheckResult:
    return _verdict("optics_invariants", model.check_invariants(), "absorption positive, tumor perturbation positive")


def check_mesh(mesh: TriMesh, geometry: Geometry) -> CheckResult:
    return _verdict("mesh_invariants", mesh.check_invariants(geometry),
                    f"{mesh.n_triangles} triangles, both regions present")


def check_affine_equivalence(problem: ValidationProblem, count: int = 5) -> CheckResult:
    """sum_q Theta^q A^q against an element-by-element assembly at random wavelengths."""
    rng = np.random.default_rng(problem.config.experiment.seed)
    model = problem.model
    worst = 0.0
    for wavelength in rng.uniform(model.lambda_min, model.lambda_max, count):
        coefficients = theta(model, wavelength)
        direct = assemble_direct(problem.mesh, coefficients)
        difference = problem.blocks.combine(coefficients) - direct
        worst = max(worst, spla.norm(difference, "fro") / spla.norm(direct, "fro"))
    problems = [] if worst <= AFFINE_TOLERANCE else [f"relative Frobenius gap {worst:.3e} > {AFFINE_TOLERANCE:g}"]
    return _verdict("affine_equivalence", problems, f"max relative gap {worst:.2e}")


def manufactured_errors(geometry: Geometry, base: TriMesh, levels: int = 3) -> List[float]:
    """
    H1 errors of -div grad u + u = g with u = x^2 + y^2 on successive uniform
    refinements of `base`.
    """
    def exact(points):
        return np.sum(points ** 2, axis=-1)

    def gradient(points):
        return 2.0 * points

    def forcing(points):
        return exact(points) - 4.0

    def flux(points):
        # du/dn = 2 |x| on the outer circle
        return 2.0 * np.linalg.norm(points, axis=-1)

    errors = []
    mesh = base
    for level in range(levels):
        if level:
            mesh = refine_mesh(mesh, geometry)
        blocks = assemble_affine_blocks(mesh)
        load = assemble_forcing(mesh, forcing) + assemble_boundary_load(mesh, flux)
        solution = solve_system(blocks, (1.0, 1.0, 1.0, 1.0), load)
        errors.append(h1_error(mesh, solution, exact, gradient))
    return errors


def check_manufactured_convergence(config: ExperimentConfig, geometry: Geometry) -> CheckResult:
    name = "mms_convergence"
    base_target = config.mesh.target_elements // MMS_COARSENING
    if base_target < MIN_TARGET_ELEMENTS:
        return CheckResult(name, SKIP, f"insufficient resolutions (base mesh target {base_target} < {MIN_TARGET_ELEMENTS})")
    base = generate_mesh(geometry, base_target, config.mesh.seed)
    errors = manufactured_errors(geometry, base)
    ratios = [coarse / fine for coarse, fine in zip(errors, errors[1:])]
    low, high = MMS_RATIO_RANGE
    problems = [f"error ratio {ratio:.3f} outside [{low}, {high}]" for ratio in ratios if not low <= ratio <= high]
    return _verdict(name, problems, "H1 error ratios " + ", ".join(f"{ratio:.3f}" for ratio in ratios))


def prefix_condition_numbers(rb: ReducedBasis, wavelengths, sizes) -> dict:
    """Max projected condition number over `wavelengths` for the leading n basis functions."""
    weights = theta_matrix(rb.model, wavelengths)
    result = {}
    for n in sizes:
        matrices = np.tensordot(weights, rb.projected_blocks[:, :n, :n], axes=1)
        result[n] = float(np.max(np.linalg.cond(matrices)))
    return result


def check_orthonormality(rb: ReducedBasis) -> CheckResult:
    defect = orthonormality_defect(rb)
    problems = [] if defect <= ORTHONORMALITY_TOLERANCE else [f"max |Z^T M Z - I| = {defect:.3e}"]
    return _verdict("orthonormality", problems, f"defect {defect:.2e} at N={rb.size}")


def conditioning_sample_set(model: CoefficientModel, size: int) -> np.ndarray:
    """Equispaced interior wavelengths, the same layout the Metropolis chain starts from."""
    k = np.arange(1, size + 1)
    return model.lambda_min + (model.lambda_max - model.lambda_min) * k / (size + 1)


def check_conditioning(problem: ValidationProblem, size: int) -> CheckResult:
    """
    Orthogonalized and raw snapshot bases over the same `size` wavelengths:
    the first must stay well conditioned for every N, the second must blow
    up once N reaches RAW_CONDITION_FROM.
    """
    reference_lambda = problem.config.rb.reference_lambda
    wavelengths = problem.test_truths.wavelengths
    sample_set = conditioning_sample_set(problem.model, size)

    rb = build_basis(problem.blocks, problem.model, sample_set, reference_lambda)
    conditioned = prefix_condition_numbers(rb, wavelengths, range(1, rb.size + 1))
    problems = [f"N={n}: condition {value:.3e} > {MAX_ORTHOGONAL_CONDITION:g}"
                for n, value in conditioned.items() if value > MAX_ORTHOGONAL_CONDITION]

    raw = build_basis(problem.blocks, problem.model, sample_set, reference_lambda, orthogonalize=False)
    raw_conditions = prefix_condition_numbers(raw, wavelengths, range(RAW_CONDITION_FROM, raw.size + 1))
    raw_max = max(raw_conditions.values(), default=0.0)
    if raw.size >= RAW_CONDITION_FROM and not raw_max > MIN_RAW_CONDITION:
        problems.append(f"raw snapshot condition only {raw_max:.3e} for N >= {RAW_CONDITION_FROM}")
    detail = (f"{size} wavelengths: orthogonalized max {max(conditioned.values()):.2f} at N<={rb.size}, "
              f"raw max {raw_max:.2e}")
    if raw.size < RAW_CONDITION_FROM:
        detail += f" (raw check needs N >= {RAW_CONDITION_FROM})"
    return _verdict("conditioning", problems, detail)


def check_reproduction(problem: ValidationProblem, rb: ReducedBasis) -> CheckResult:
    errors = relative_errors(rb, build_truth_cache(problem.blocks, problem.model, rb.sample_set))
    worst = float(np.max(errors))
    problems = [] if worst <= REPRODUCTION_TOLERANCE else [f"max relative error on the sample set {worst:.3e}"]
    return _verdict("galerkin_reproduction", problems, f"max error at samples {worst:.2e}")


def bound_violations(rb: ReducedBasis, truths: TruthCache) -> List[str]:
    """Energy and compliant output bounds of `rb` checked against truths."""
    wavelengths = truths.wavelengths
    alpha_hat = theta_matrix(rb.model, wavelengths).min(axis=1)
    dual = residual_dual_norms(rb, wavelengths)
    errors = h1_norms(rb.blocks, truths.solutions - rb.basis_matrix @ online_coefficients(rb, wavelengths))
    problems = []
    energy_gap = errors - dual / alpha_hat
    if np.any(energy_gap > BOUND_SLACK * truths.norms):
        index = int(np.argmax(energy_gap))
        problems.append(f"N={rb.size}: energy bound violated at {wavelengths[index]:g} nm")

    outputs = rb.blocks.F @ truths.solutions
    output_gap = np.abs(outputs - output_values(rb, wavelengths)) - output_error_bounds(rb, wavelengths)
    if np.any(output_gap > BOUND_SLACK * np.abs(outputs)):
        index = int(np.argmax(output_gap))
        problems.append(f"N={rb.size}: output bound violated at {wavelengths[index]:g} nm")
    return problems


def check_bounds(problem: ValidationProblem, sample_set) -> CheckResult:
    """Bounds for every leading sub-basis of the sample set, plus the coercivity sampling test."""
    problems = []
    rb = empty_basis(problem.blocks, problem.model, problem.config.rb.reference_lambda, problem.config.rb.orthogonalize)
    for wavelength in sample_set:
        rb = add_snapshot(rb, wavelength)
        problems.extend(bound_violations(rb, problem.test_truths))

    rng = np.random.default_rng(problem.config.experiment.seed)
    blocks = problem.blocks
    for wavelength in rng.uniform(problem.model.lambda_min, problem.model.lambda_max, 5):
        coefficients = theta(problem.model, wavelength)
        vectors = rng.standard_normal((blocks.size, 20))
        energy = np.einsum("ij,ij->j", vectors, blocks.combine(coefficients) @ vectors)
        gram = np.einsum("ij,ij->j", vectors, blocks.X_gram @ vectors)
        if np.any(energy < min(coefficients) * gram * (1.0 - BOUND_SLACK)):
            problems.append(f"coercivity lower bound exceeds a Rayleigh quotient at {wavelength:g} nm")
    return _verdict("bound_validity", problems, f"energy and output bounds hold for N=1..{len(sample_set)}")


def check_greedy_monotonicity(indicators: List[float]) -> CheckResult:
    problems = [
        f"indicator rose from {previous:.3e} to {current:.3e} at iteration {k + 2}"
        for k, (previous, current) in enumerate(zip(indicators, indicators[1:]))
        if current > previous * (1.0 + MONOTONICITY_SLACK)
    ]
    return _verdict("greedy_monotonicity", problems, f"{len(indicators)} non-increasing indicator maxima")


def check_brute_force(problem: ValidationProblem) -> CheckResult:
    """Greedy on a five-point training set with N = 5 must select all of it."""
    model = problem.model
    tiny = TrainingMesh.build(model.lambda_min, model.lambda_max, xi_size=5, upsilon_size=5, coarse_size=2)
    result = greedy_select(problem.blocks, model, tiny, StoppingRule(np.finfo(float).tiny, 5),
                           rng_seed=problem.config.experiment.seed,
                           reference_lambda=problem.config.rb.reference_lambda)
    rb = build_basis(problem.blocks, model, result.sample_set, problem.config.rb.reference_lambda)
    total = float(np.sum(relative_errors(rb, build_truth_cache(problem.blocks, model, tiny.xi))))
    problems = [] if total <= BRUTE_FORCE_TOLERANCE else [f"total error over the five points {total:.3e}"]
    return _verdict("brute_force_greedy", problems, f"selected {result.size} of 5, total error {total:.2e}")


def check_metropolis_singleton(problem: ValidationProblem) -> CheckResult:
    """
    With one objective point the chain mean must settle next to a wavelength
    whose coefficients equal those of that point; J vanishes on all of them.
    """
    model = problem.model
    target = float(np.clip(SINGLETON_WAVELENGTH, model.lambda_min, model.lambda_max))
    mesh = TrainingMesh(xi=np.array([target]), upsilon=np.array([target]), lambda_coarse=np.array([target]),
                        lambda_min=model.lambda_min, lambda_max=model.lambda_max)
    cfg = MetropolisConfig(n_target=1, pilot_len=300, burn_in=200, samples=300, initial_step=5.0,
                           rng_seed=problem.config.experiment.seed, likelihood_scale=1e4)
    result = metropolis_select(problem.blocks, model, mesh, cfg, problem.config.rb.reference_lambda)
    mean = result.sample_set[0]
    zeros = equivalent_wavelengths(model, target)
    nearest = float(zeros[np.argmin(np.abs(zeros - mean))])
    distance = abs(mean - nearest)
    problems = [] if distance <= SINGLETON_DISTANCE else [
        f"chain mean {mean:.3f} nm is {distance:.2f} nm from the nearest zero of J at {nearest:.3f}"
    ]
    return _verdict("metropolis_singleton", problems,
                    f"chain mean {mean:.3f} nm, nearest zero of J {nearest:.3f} nm (target {target:g})")


def _guarded(name: str, check: Callable[[], CheckResult]) -> CheckResult:
    try:
        return check()
    except Exception as e:
        logger.error(f"Check {name} raised: {e}")
        return CheckResult(name, FAIL, f"{type(e).__name__}: {e}")


def validate_suite(config: ExperimentConfig) -> ValidationReport:
    """
    Run every invariant check for `config`.

    Checks that need a valid coefficient model or mesh are skipped when
    those fail, so one broken input yields one clear failure.
    """
    report = ValidationReport()
    model = config.coefficient_model()
    report.checks.append(check_optics(model))

    geometry = config.geometry_model()
    try:
        mesh = generate_mesh(geometry, config.mesh.target_elements, config.mesh.seed)
    except Exception as e:
        report.checks.append(CheckResult("mesh_invariants", FAIL, f"{type(e).__name__}: {e}"))
        return report
    report.checks.append(check_mesh(mesh, geometry))
    report.checks.append(_guarded("mms_convergence", lambda: check_manufactured_convergence(config, geometry)))

    dependent = ("affine_equivalence", "orthonormality", "galerkin_reproduction", "bound_validity",
                 "greedy_monotonicity", "conditioning", "brute_force_greedy", "metropolis_singleton")
    if report.failures:
        report.checks.extend(CheckResult(name, SKIP, "needs a valid model and mesh") for name in dependent)
        return report

    blocks = build_problem(mesh, config.source_spec())
    problem = ValidationProblem(config, geometry, mesh, blocks, model,
                                build_truth_cache(blocks, model, config.test_wavelengths()))
    report.checks.append(_guarded("affine_equivalence", lambda: check_affine_equivalence(problem)))

    n_max = min(max(config.experiment.sizes), config.training.xi_size)
    try:
        greedy = greedy_select(blocks, model, config.training_mesh(), config.stopping_rule("greedy", n_max),
                               indicator=config.greedy.indicator, rng_seed=config.experiment.seed,
                               reference_lambda=config.rb.reference_lambda, orthogonalize=True)
        rb = build_basis(blocks, model, greedy.sample_set, config.rb.reference_lambda)
    except Exception as e:
        message = f"greedy basis failed: {type(e).__name__}: {e}"
        report.checks.extend(CheckResult(name, FAIL, message) for name in dependent[1:5])
    else:
        report.checks.append(_guarded("orthonormality", lambda: check_orthonormality(rb)))
        report.checks.append(_guarded("galerkin_reproduction", lambda: check_reproduction(problem, rb)))
        report.checks.append(_guarded("bound_validity", lambda: check_bounds(problem, greedy.sample_set)))
        report.checks.append(check_greedy_monotonicity(greedy.indicators))
    report.checks.append(_guarded("conditioning", lambda: check_conditioning(problem, max(config.experiment.sizes))))
    report.checks.append(_guarded("brute_force_greedy", lambda: check_brute_force(problem)))
    report.checks.append(_guarded("metropolis_singleton", lambda: check_metropolis_singleton(problem)))
    for check in report.checks:
        log = logger.warning if check.failed else logger.info
        log(f"{check.name}: {check.status} ({check.detail})")
    return report
