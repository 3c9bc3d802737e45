"""
Spray Metrizer - Metrizability Tool
===================================

Tests whether a spray is metrizable by a Finsler function of scalar or
constant flag curvature. With sigma = alpha/rho the checks are:

    ii)  d_J sigma = 0           (antisymmetric part of dsigma/dy)
    iii) D_hX sigma = 0          (Berwald horizontal covariant derivative)
    iv)  d sigma + 2 (i_F sigma) ^ sigma has full rank 2n

plus the constant-curvature checks d_J alpha = 0, d_h rho = 0 and
rank(dd_J rho) = 2n. Every sample point walks a fixed decision ladder and
the report carries the worst outcome together with residual statistics.

Author: Alfred Munga
License: MIT
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from enum import Enum
from typing import Any, ClassVar, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator

from tools.errors import DomainError, MetrizerError, RicciDegenerateError
from tools.spray_geometry_tool import PhasePoint, Spray, connection, local_geometry

logger = logging.getLogger(__name__)


# ============================================================================
# Configuration and report models
# ============================================================================

class TestConfig(BaseModel):
    """Tolerances and sampling for classify()."""

    __test__: ClassVar[bool] = False

    tol_homogeneity: float = Field(default=1e-8, gt=0, description="Relative 2-homogeneity defect of G")
    tol_iso: float = Field(default=1e-7, gt=0, description="Relative isotropy residual")
    tol_ii: float = Field(default=1e-7, gt=0, description="Condition ii residual")
    tol_iii: float = Field(default=1e-7, gt=0, description="Condition iii residual")
    tol_unit: float = Field(default=1e-7, gt=0, description="|sigma(y) - 1|")
    tol_c1: float = Field(default=1e-7, gt=0, description="Symmetry defect of dalpha/dy")
    tol_c2: float = Field(default=1e-7, gt=0, description="Relative horizontal derivative of rho")
    min_rho: float = Field(default=1e-8, gt=0, description="Minimum |rho| relative to the isotropy scale")
    rank_rtol: float = Field(default=1e-8, gt=0, description="Singular value cutoff ratio")
    workers: int = Field(default=1, ge=1, description="Thread pool size for sample chunks")
    samples: List[PhasePoint] = Field(default_factory=list, description="Sample points")

    @field_validator("samples")
    @classmethod
    def validate_samples(cls, v):
        dimensions = {p.n for p in v}
        if len(dimensions) > 1:
            raise ValueError(f"Samples mix dimensions {sorted(dimensions)}")
        return v


class Verdict(str, Enum):
    NOT_HOMOGENEOUS = "NotHomogeneous"
    NON_ISOTROPIC = "NonIsotropic"
    RICCI_DEGENERATE = "RicciDegenerate"
    FAILS_CONDITION_II = "FailsConditionII"
    FAILS_CONDITION_III = "FailsConditionIII"
    METRIZABLE_CONSTANT = "MetrizableConstant"
    METRIZABLE_SCALAR = "MetrizableScalar"
    RANK_DEFICIENT_CANDIDATE = "RankDeficientCandidate"


# Ladder stages in order; a point that passes all of them has stage len(LADDER).
LADDER: Tuple[Verdict, ...] = (
    Verdict.NOT_HOMOGENEOUS,
    Verdict.NON_ISOTROPIC,
    Verdict.RICCI_DEGENERATE,
    Verdict.FAILS_CONDITION_II,
    Verdict.FAILS_CONDITION_III,
)

RECONSTRUCTIBLE = frozenset({
    Verdict.METRIZABLE_CONSTANT,
    Verdict.METRIZABLE_SCALAR,
    Verdict.RANK_DEFICIENT_CANDIDATE,
})

FLAT_NOTE = "flat: Phi vanishes at every sample (vacuously metrizable)"
RICCI_FLAT_NOTE = "ρ≈0, ‖Φ‖>0"


class ResidualStats(BaseModel):
    """Max / mean / arg-max of one residual over the points where it was evaluated."""
    name: str
    count: int = Field(..., ge=0)
    max: Optional[float] = None
    mean: Optional[float] = None
    argmax: Optional[Dict[str, List[float]]] = None


class ClassificationReport(BaseModel):
    verdict: Verdict
    n: int
    sample_count: int
    residuals: Dict[str, ResidualStats] = Field(default_factory=dict)
    ranks: List[int] = Field(default_factory=list, description="Regularity rank per sample")
    c3_ranks: List[int] = Field(default_factory=list, description="Rank of dd_J rho per sample")
    stage_counts: Dict[str, int] = Field(default_factory=dict)
    notes: List[str] = Field(default_factory=list)

    @property
    def reconstructible(self) -> bool:
        return self.verdict in RECONSTRUCTIBLE


# ============================================================================
# Semi-basic form sigma = alpha / rho
# ============================================================================

@dataclass(frozen=True)
class SemiBasicForm:
    """
    sigma_i = alpha_i / rho at a point with its first partials.

    Attributes:
        point: Where sigma was evaluated
        sigma: sigma_i
        dsigma_dx: [i, k] = dsigma_i/dx^k
        dsigma_dy: [i, j] = dsigma_i/dy^j
        unit_defect: sigma_i y^i - 1
    """
    point: PhasePoint
    sigma: np.ndarray
    dsigma_dx: np.ndarray
    dsigma_dy: np.ndarray
    unit_defect: float


def sigma_arrays(geometry) -> np.ndarray:
    """sigma as value+gradient array, shape batch + (n, 1 + 2n)."""
    rho = geometry.rho[..., None, :]
    alpha = geometry.alpha
    with np.errstate(divide="ignore", invalid="ignore"):
        quotient = alpha[..., :1] / rho[..., :1]
        gradient = (alpha[..., 1:] - quotient * rho[..., 1:]) / rho[..., :1]
    return np.concatenate([quotient, gradient], axis=-1)


def sigma_at(spray: Spray, point: PhasePoint, cfg: Optional[TestConfig] = None) -> SemiBasicForm:
    """
    Build sigma = alpha/rho with all first partials at one point.

    Raises:
        DomainError: the spray is not isotropic at the point
        RicciDegenerateError: |rho| below min_rho times the isotropy scale
    """
    cfg = cfg or TestConfig()
    geometry = local_geometry(spray, point.x_array, point.y_array, order=3)
    residual = float(geometry.isotropy_residual())
    if residual > cfg.tol_iso:
        raise DomainError(f"Spray is not isotropic at {point.as_dict()} (residual {residual:.3e})")
    rho = float(geometry.rho[0])
    scale = float(geometry.isotropy_scale())
    if abs(rho) < cfg.min_rho * scale:
        raise RicciDegenerateError(rho, scale, point)
    n = spray.n
    sigma = sigma_arrays(geometry)
    values = sigma[..., 0]
    return SemiBasicForm(
        point=point,
        sigma=values,
        dsigma_dx=sigma[..., 1:n + 1],
        dsigma_dy=sigma[..., n + 1:],
        unit_defect=float(values @ point.y_array - 1.0),
    )


# ============================================================================
# Residual kernels (batched)
# ============================================================================

def _max_abs(array: np.ndarray) -> np.ndarray:
    return np.abs(array).max(axis=(-2, -1))


def _condition_ii(dsigma_dy: np.ndarray, y: np.ndarray) -> np.ndarray:
    """|y|^2 times the antisymmetric part of dsigma/dy."""
    yy = np.einsum("...i,...i->...", y, y)
    return yy * _max_abs(dsigma_dy - np.swapaxes(dsigma_dy, -1, -2))


def _condition_iii(sigma, dsigma_dx, dsigma_dy, N, gamma, y) -> np.ndarray:
    """Horizontal closedness defect of sigma, scaled to be 0-homogeneous in y."""
    horizontal = dsigma_dx - np.einsum("...jk,...ij->...ik", N, dsigma_dy)
    covariant = horizontal - np.einsum("...m,...mki->...ik", sigma, gamma)
    norm_y = np.linalg.norm(y, axis=-1)
    damping = 1.0 + np.linalg.norm(N, axis=(-2, -1)) / norm_y
    return norm_y * _max_abs(covariant) / damping


def _matrix_rank(matrix: np.ndarray, rtol: float) -> np.ndarray:
    """Batched numerical rank relative to the largest singular value."""
    singular = np.linalg.svd(matrix, compute_uv=False)
    top = singular[..., :1]
    return np.where(top[..., 0] > 0, (singular > rtol * top).sum(axis=-1), 0)


def _two_form(horizontal: np.ndarray, vertical: np.ndarray) -> np.ndarray:
    """[[H, -V^T], [V, 0]] in the coframe (dx, dy)."""
    n = vertical.shape[-1]
    batch = vertical.shape[:-2]
    matrix = np.zeros(batch + (2 * n, 2 * n))
    matrix[..., :n, :n] = horizontal
    matrix[..., :n, n:] = -np.swapaxes(vertical, -1, -2)
    matrix[..., n:, :n] = vertical
    return matrix


def _regularity(sigma, dsigma_dx, dsigma_dy, N, y, rtol) -> Tuple[np.ndarray, np.ndarray]:
    """Rank of the 2n x 2n two-form of the candidate metric and det of its vertical block."""
    # V_ji = dsigma_i/dy^j + 2 sigma_j sigma_i, H_ji from d_h sigma and tau = sigma N
    outer = sigma[..., :, None] * sigma[..., None, :]
    vertical = np.swapaxes(dsigma_dy, -1, -2) + 2.0 * outer
    tau = np.einsum("...m,...mj->...j", sigma, N)
    dx = np.swapaxes(dsigma_dx, -1, -2)
    cross = tau[..., :, None] * sigma[..., None, :]
    horizontal = dx - np.swapaxes(dx, -1, -2) + 2.0 * (cross - np.swapaxes(cross, -1, -2))
    # congruence by diag(|y|^1/2, |y|^3/2) keeps the rank and removes the fiber scale
    norm_y = np.linalg.norm(y, axis=-1)[..., None, None]
    matrix = _two_form(norm_y * horizontal, norm_y ** 2 * vertical)
    return _matrix_rank(matrix, rtol), np.linalg.det(vertical)


def _constant_tests(geometry, rtol) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Residuals of the two constant-curvature conditions and the rank of d d_J rho."""
    n = geometry.n
    y = geometry.y
    rho = geometry.rho[..., 0]
    alpha_dx = geometry.alpha[..., 1:n + 1]
    alpha_dy = geometry.alpha[..., n + 1:]
    rho_dx = geometry.rho[..., 1:n + 1]
    rho_dy = geometry.rho[..., n + 1:]
    N = geometry.N[..., 0]
    yy = np.einsum("...i,...i->...", y, y)
    with np.errstate(divide="ignore", invalid="ignore"):
        res_c1 = yy / np.abs(rho) * _max_abs(alpha_dy - np.swapaxes(alpha_dy, -1, -2))
        horizontal_rho = rho_dx - np.einsum("...ji,...j->...i", N, rho_dy)
        res_c2 = np.abs(horizontal_rho).max(axis=-1) / np.abs(rho)
    # dd_J rho through alpha = d_J rho / 2, valid once d_J alpha = 0
    vertical = 2.0 * np.swapaxes(alpha_dy, -1, -2)
    dx = np.swapaxes(alpha_dx, -1, -2)
    horizontal = 2.0 * (dx - np.swapaxes(dx, -1, -2))
    norm_y = np.sqrt(yy)[..., None, None]
    rank_c3 = _matrix_rank(_two_form(horizontal / norm_y, vertical), rtol)
    return res_c1, res_c2, rank_c3


def condition_ii_residual(form: SemiBasicForm) -> float:
    """|y|^2 max_{i,j} |dsigma_i/dy^j - dsigma_j/dy^i|."""
    return float(_condition_ii(form.dsigma_dy, form.point.y_array))


def condition_iii_residual(spray: Spray, point: PhasePoint, form: SemiBasicForm) -> float:
    """Scaled max of |d sigma_i/dx^k - N^j_k dsigma_i/dy^j - sigma_m Gamma^m_ki|."""
    conn = connection(spray, point)
    return float(_condition_iii(
        form.sigma, form.dsigma_dx, form.dsigma_dy, conn.N, conn.gamma, point.y_array
    ))


def regularity_rank(
    spray: Spray, point: PhasePoint, form: SemiBasicForm, cfg: Optional[TestConfig] = None
) -> Tuple[int, float]:
    """Rank of the regularity 2-form and det V."""
    cfg = cfg or TestConfig()
    conn = connection(spray, point)
    rank, det_v = _regularity(
        form.sigma, form.dsigma_dx, form.dsigma_dy, conn.N, point.y_array, cfg.rank_rtol
    )
    return int(rank), float(det_v)


def constant_curvature_tests(
    spray: Spray, point: PhasePoint, cfg: Optional[TestConfig] = None
) -> Tuple[float, float, int]:
    """(res_C1, res_C2, rank_C3) at one point."""
    cfg = cfg or TestConfig()
    geometry = local_geometry(spray, point.x_array, point.y_array, order=3)
    res_c1, res_c2, rank_c3 = _constant_tests(geometry, cfg.rank_rtol)
    return float(res_c1), float(res_c2), int(rank_c3)


# ============================================================================
# Batched evidence and classification
# ============================================================================

@dataclass
class PointEvidence:
    """Per-sample arrays produced by one classification pass."""
    x: np.ndarray
    y: np.ndarray
    homogeneity: np.ndarray
    isotropy: np.ndarray
    rho: np.ndarray
    phi_norm: np.ndarray
    degenerate: np.ndarray
    unit: np.ndarray
    res_ii: np.ndarray
    res_iii: np.ndarray
    rank: np.ndarray
    det_v: np.ndarray
    res_c1: np.ndarray
    res_c2: np.ndarray
    rank_c3: np.ndarray
    liouville: np.ndarray
    stage: np.ndarray

    @classmethod
    def concatenate(cls, parts: Sequence["PointEvidence"]) -> "PointEvidence":
        return cls(**{
            f.name: np.concatenate([getattr(p, f.name) for p in parts], axis=0)
            for f in fields(cls)
        })


def _point_label(x: np.ndarray, y: np.ndarray) -> str:
    return f"x={np.array2string(x, precision=6)}, y={np.array2string(y, precision=6)}"


def evaluate_points(spray: Spray, x: np.ndarray, y: np.ndarray, cfg: TestConfig) -> PointEvidence:
    """
    Run every test on a batch of points.

    Args:
        spray: Spray under test
        x, y: Arrays of shape (B, n)
        cfg: Tolerances

    Raises:
        DomainError: an expression left its domain; the message names the point
    """
    try:
        geometry = local_geometry(spray, x, y, order=3)
    except DomainError as e:
        if e.indices:
            index = e.indices[0]
            raise DomainError(f"{e} at {_point_label(x[index], y[index])}", e.indices) from e
        raise

    n = spray.n
    homogeneity = geometry.homogeneity_residual()
    isotropy = geometry.isotropy_residual()
    rho = geometry.rho[..., 0]
    phi_norm = np.linalg.norm(geometry.Phi, axis=(-2, -1))
    degenerate = np.abs(rho) < cfg.min_rho * geometry.isotropy_scale()

    sigma = sigma_arrays(geometry)
    values = sigma[..., 0]
    dsigma_dx = sigma[..., 1:n + 1]
    dsigma_dy = sigma[..., n + 1:]
    N = geometry.N[..., 0]
    gamma = geometry.gamma[..., 0]

    with np.errstate(invalid="ignore", over="ignore"):
        unit = np.abs(np.einsum("...i,...i->...", values, y) - 1.0)
        res_ii = _condition_ii(dsigma_dy, y)
        res_iii = _condition_iii(values, dsigma_dx, dsigma_dy, N, gamma, y)
        safe = np.where(degenerate[..., None], 0.0, values)
        rank, det_v = _regularity(
            safe,
            np.where(degenerate[..., None, None], 0.0, dsigma_dx),
            np.where(degenerate[..., None, None], 0.0, dsigma_dy),
            N, y, cfg.rank_rtol,
        )
        res_c1, res_c2, rank_c3 = _constant_tests(geometry, cfg.rank_rtol)

    nan = np.nan
    for array in (unit, res_ii, res_iii, det_v, res_c1, res_c2):
        array[degenerate] = nan
    rank = np.where(degenerate, 0, rank)
    rank_c3 = np.where(degenerate, 0, rank_c3)

    stage = np.full(rho.shape, len(LADDER))
    with np.errstate(invalid="ignore"):
        stage = np.where(res_iii > cfg.tol_iii, 4, stage)
        stage = np.where(res_ii > cfg.tol_ii, 3, stage)
        stage = np.where(degenerate, 2, stage)
        stage = np.where(isotropy > cfg.tol_iso, 1, stage)
        stage = np.where(homogeneity > cfg.tol_homogeneity, 0, stage)

    return PointEvidence(
        x=np.asarray(x, dtype=float), y=np.asarray(y, dtype=float),
        homogeneity=homogeneity, isotropy=isotropy, rho=rho, phi_norm=phi_norm,
        degenerate=degenerate, unit=unit, res_ii=res_ii, res_iii=res_iii,
        rank=rank.astype(int), det_v=det_v, res_c1=res_c1, res_c2=res_c2,
        rank_c3=rank_c3.astype(int), liouville=geometry.liouville_defect(), stage=stage,
    )


def _stats(name: str, values: np.ndarray, evidence: PointEvidence) -> ResidualStats:
    """Max, mean and argmax of the finite entries of one residual column."""
    finite = np.isfinite(values)
    if not finite.any():
        return ResidualStats(name=name, count=0)
    masked = np.where(finite, values, -np.inf)
    index = int(np.argmax(masked))
    return ResidualStats(
        name=name,
        count=int(finite.sum()),
        max=float(values[index]),
        mean=float(values[finite].mean()),
        argmax={"x": evidence.x[index].tolist(), "y": evidence.y[index].tolist()},
    )


def _chunks(count: int, workers: int) -> List[slice]:
    """Contiguous slices splitting count points over workers."""
    size = max(1, -(-count // workers))
    return [slice(start, min(start + size, count)) for start in range(0, count, size)]


def classify_arrays(spray: Spray, x: np.ndarray, y: np.ndarray, cfg: TestConfig) -> Tuple[ClassificationReport, PointEvidence]:
    """classify() on sample arrays of shape (B, n); also returns the per-point evidence."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape[0] == 0:
        raise ValueError("classify needs at least one sample")
    admitted = spray.admits(x, y)
    if not admitted.all():
        bad = np.flatnonzero(~admitted)
        raise DomainError(
            f"{len(bad)} samples outside the spray domain, first at {_point_label(x[bad[0]], y[bad[0]])}",
            bad,
        )

    parts = _chunks(x.shape[0], cfg.workers)
    if cfg.workers > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(lambda s: evaluate_points(spray, x[s], y[s], cfg), parts))
        evidence = PointEvidence.concatenate(results)
    else:
        evidence = evaluate_points(spray, x, y, cfg)

    report = _fold(spray.n, evidence, cfg)
    logger.info(f"📊 {spray.label}: {report.verdict.value} over {report.sample_count} samples")
    return report, evidence


def classify(spray: Spray, cfg: TestConfig, samples: Optional[Sequence[PhasePoint]] = None) -> ClassificationReport:
    """
    Decide the metrizability verdict of a spray on a sample set.

    Each point walks the ladder homogeneity -> isotropy -> Ricci threshold ->
    condition ii -> condition iii; the verdict is the earliest stage failed at
    any point. When all points pass, constant-curvature tests decide between
    MetrizableConstant and the regularity rank test.

    Example:
        >>> s = Spray.from_texts(["0.5*(y1^2 + y2^2)", "2*y1*y2"])
        >>> classify(s, TestConfig(samples=[PhasePoint.of([0, 0], [1, 1])])).verdict
        <Verdict.FAILS_CONDITION_III: 'FailsConditionIII'>
    """
    points = list(samples) if samples is not None else list(cfg.samples)
    if not points:
        raise ValueError("classify needs at least one sample")
    x = np.array([p.x for p in points])
    y = np.array([p.y for p in points])
    report, _ = classify_arrays(spray, x, y, cfg)
    return report


def _fold(n: int, evidence: PointEvidence, cfg: TestConfig) -> ClassificationReport:
    """Combine per-point stages into the run verdict, stage counts and notes."""
    notes: List[str] = []
    worst = int(evidence.stage.min())
    stage_counts = {
        (LADDER[k].value if k < len(LADDER) else "passed"): int((evidence.stage == k).sum())
        for k in range(len(LADDER) + 1)
    }

    if worst < len(LADDER):
        verdict = LADDER[worst]
    else:
        constant = (
            (evidence.res_c1 <= cfg.tol_c1)
            & (evidence.res_c2 <= cfg.tol_c2)
            & (evidence.rank_c3 == 2 * n)
        )
        if constant.all():
            verdict = Verdict.METRIZABLE_CONSTANT
        elif (evidence.rank == 2 * n).all():
            verdict = Verdict.METRIZABLE_SCALAR
        else:
            verdict = Verdict.RANK_DEFICIENT_CANDIDATE
            if (evidence.rank == 0).any():
                notes.append(f"regularity rank 0 at {int((evidence.rank == 0).sum())} samples")

    if verdict == Verdict.RICCI_DEGENERATE:
        norm_y2 = np.einsum("...i,...i->...", evidence.y, evidence.y)
        flat = evidence.phi_norm <= 1e-12 * np.maximum(1.0, norm_y2)
        degenerate = evidence.degenerate
        notes.append(FLAT_NOTE if flat[degenerate].all() else RICCI_FLAT_NOTE)

    with np.errstate(invalid="ignore"):
        unit_failures = int((evidence.unit > cfg.tol_unit).sum())
        liouville = int((evidence.liouville > 1e-6).sum())
    if unit_failures:
        notes.append(f"sigma(y) deviates from 1 beyond tol_unit at {unit_failures} samples")
    if liouville:
        notes.append(f"Phi y deviates from 0 at {liouville} samples")

    residuals = {
        name: _stats(name, values, evidence)
        for name, values in (
            ("homogeneity", evidence.homogeneity),
            ("isotropy", evidence.isotropy),
            ("unit", evidence.unit),
            ("condition_ii", evidence.res_ii),
            ("condition_iii", evidence.res_iii),
            ("c1", evidence.res_c1),
            ("c2", evidence.res_c2),
        )
    }
    return ClassificationReport(
        verdict=verdict,
        n=n,
        sample_count=int(evidence.stage.shape[0]),
        residuals=residuals,
        ranks=[int(r) for r in evidence.rank],
        c3_ranks=[int(r) for r in evidence.rank_c3],
        stage_counts=stage_counts,
        notes=notes,
    )


# ============================================================================
# Tool wrapper
# ============================================================================

class MetrizabilityInput(BaseModel):
    """Input for MetrizabilityTool."""
    coefficients: List[str] = Field(..., min_length=2, description="Spray coefficients G^1..G^n")
    domain: Optional[str] = Field(default=None, description="Domain predicate, admitted where > 0")
    config: TestConfig = Field(..., description="Tolerances and sample points")

    @field_validator("config")
    @classmethod
    def validate_samples_present(cls, v):
        if not v.samples:
            raise ValueError("config.samples must not be empty")
        return v


class MetrizabilityTool:
    """
    Classify a spray given as coefficient strings.

    Returns a dict with 'success', 'verdict' and the serialized report, or
    'success': False with the error message.
    """

    def run(self, input_data: MetrizabilityInput) -> Dict[str, Any]:
        try:
            spray = Spray.from_texts(input_data.coefficients, input_data.domain)
            report = classify(spray, input_data.config)
        except (MetrizerError, ValueError) as e:
            logger.error(f"❌ Classification failed: {e}")
            return {"success": False, "error": str(e)}
        logger.info(f"✅ Verdict {report.verdict.value}")
        return {
            "success": True,
            "verdict": report.verdict.value,
            "report": report.model_dump(mode="json"),
        }
