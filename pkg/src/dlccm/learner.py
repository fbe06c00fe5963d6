"""Graph-regularized Gaussian RBF interpolation from UL to DL features.

The mapping is learned by alternating two exact minimization steps on a
four-term objective: a graph-Laplacian term that keeps neighboring UL
covariances neighbors in the embedding, a kernel-coefficient norm and a
1/sigma^2 penalty that together cap the interpolator's Lipschitz constant,
and a quadratic fidelity term tying the embedding to the observed DL
features.  The embedding step has a closed form (a ridge-type symmetric
solve); the kernel-scale step is an exhaustive search on a log grid that
always includes the incumbent, so the objective never increases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.spatial.distance import cdist, pdist, squareform

from .errors import NormalizationDegenerate, SolveFailed

EMBEDDING_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class SigmaGrid:
    """Log-spaced kernel-scale search grid, in multiples of the median
    pairwise training distance."""

    lo: float = 0.05
    hi: float = 20.0
    n_points: int = 64

    def __post_init__(self):
        if not 0.0 < self.lo < self.hi:
            raise ValueError(f"need 0 < lo < hi, got [{self.lo}, {self.hi}]")
        if self.n_points < 1:
            raise ValueError("grid needs at least one point")

    def absolute(self, scale: float) -> np.ndarray:
        return np.geomspace(self.lo * scale, self.hi * scale, self.n_points)


@dataclass(frozen=True)
class Hyperparams:
    """Objective weights and solver settings.

    When None, ``theta`` (graph scale) resolves to the median
    nearest-neighbor training distance, so the affinity graph stays local,
    and ``sigma_init`` to the median pairwise distance.  ``jitter`` is added
    to the kernel matrix diagonal to keep factorizations well-posed at small
    scales.
    """

    mu1: float = 0.1
    mu2: float = 3e5
    mu3: float = 100.0
    theta: float | None = None
    sigma_init: float | None = None
    sigma_grid: SigmaGrid = field(default_factory=SigmaGrid)
    max_iter: int = 50
    obj_tol: float = 1e-7
    jitter: float = 1e-8

    def __post_init__(self):
        if self.mu1 < 0 or self.mu2 < 0:
            raise ValueError("mu1 and mu2 must be nonnegative")
        if self.mu3 <= 0:
            raise ValueError("mu3 must be positive for the closed-form update")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.jitter < 0:
            raise ValueError("jitter must be nonnegative")


@dataclass
class TrainingTrace:
    """Per-iteration objective values and term-wise breakdown.

    Index 0 is the initial state (embedding = observed DL features); each
    following entry is recorded after a full embedding + scale update.
    """

    objective: list[float] = field(default_factory=list)
    sigma: list[float] = field(default_factory=list)
    laplacian_term: list[float] = field(default_factory=list)
    kernel_norm_term: list[float] = field(default_factory=list)
    sigma_penalty_term: list[float] = field(default_factory=list)
    fidelity_term: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def n_iter(self) -> int:
        return len(self.objective) - 1

    def record(self, objective, sigma, lap, kern, sig_pen, fid):
        self.objective.append(objective)
        self.sigma.append(sigma)
        self.laplacian_term.append(lap)
        self.kernel_norm_term.append(kern)
        self.sigma_penalty_term.append(sig_pen)
        self.fidelity_term.append(fid)


@dataclass
class TrainedInterpolator:
    """Immutable RBF interpolator: kernel centers, coefficients, and scale.

    ``embedding`` retains the learned targets for diagnostics; coefficients
    satisfy (kernel matrix + jitter I) @ coeffs = embedding.
    """

    centers: np.ndarray
    coeffs: np.ndarray
    sigma: float
    embedding: np.ndarray
    theta: float
    hyper: Hyperparams
    dataset_seed: int | None = None

    @property
    def n_centers(self) -> int:
        return self.centers.shape[0]

    @property
    def n_features(self) -> int:
        return self.centers.shape[1]


def _sq_dists(x: np.ndarray) -> np.ndarray:
    return squareform(pdist(np.asarray(x, dtype=float), "sqeuclidean"))


def median_pairwise_distance(x: np.ndarray) -> float:
    d = pdist(np.asarray(x, dtype=float))
    med = float(np.median(d))
    if not med > 0.0:
        raise ValueError("median pairwise distance is zero; inputs degenerate")
    return med


def median_nn_distance(x: np.ndarray) -> float:
    """Median over points of the distance to their nearest neighbor."""
    d = squareform(pdist(np.asarray(x, dtype=float)))
    np.fill_diagonal(d, np.inf)
    med = float(np.median(d.min(axis=1)))
    if not med > 0.0:
        raise ValueError("median nearest-neighbor distance is zero; "
                         "inputs contain duplicates everywhere")
    return med


def _laplacian_from_sq(sq: np.ndarray, theta: float) -> np.ndarray:
    w = np.exp(-sq / theta**2)
    np.fill_diagonal(w, 0.0)
    return np.diag(w.sum(axis=1)) - w


def build_laplacian(x: np.ndarray, theta: float) -> np.ndarray:
    """Graph Laplacian L = D - W with Gaussian affinities
    W_ij = exp(-||x_i - x_j||^2 / theta^2) and zero self-affinity."""
    if theta <= 0:
        raise ValueError("theta must be positive")
    return _laplacian_from_sq(_sq_dists(x), theta)


def _kernel_from_sq(sq: np.ndarray, sigma: float, jitter: float) -> np.ndarray:
    psi = np.exp(-sq / sigma**2)
    psi[np.diag_indices_from(psi)] += jitter
    return psi


def kernel_matrix(x: np.ndarray, sigma: float, jitter: float = 1e-8) -> np.ndarray:
    """Gaussian RBF kernel matrix with a small diagonal regularizer."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return _kernel_from_sq(_sq_dists(x), sigma, jitter)


def _factor(mat: np.ndarray, what: str):
    try:
        return cho_factor(mat, lower=True)
    except LinAlgError as err:
        raise SolveFailed(f"{what} is numerically singular: {err}") from err


def _solve_refined(factor, mat: np.ndarray, rhs: np.ndarray,
                   target: float, max_refine: int = 3) -> np.ndarray:
    """Cholesky solve with a few steps of iterative refinement.

    Refinement reuses the factorization and stops once the residual is below
    ``target`` (absolute, Frobenius); it pushes the residual of
    ill-conditioned systems well under the plain-solve floor.
    """
    sol = cho_solve(factor, rhs)
    for _ in range(max_refine):
        res = rhs - mat @ sol
        if np.linalg.norm(res) <= target:
            break
        sol = sol + cho_solve(factor, res)
    return sol


def update_embedding(lap: np.ndarray, psi: np.ndarray, r: np.ndarray,
                     mu1: float, mu3: float) -> np.ndarray:
    """Exact minimizer of the embedding subproblem at a fixed kernel scale:
    mu3 (L + mu1 Psi^-2 + mu3 I)^-1 R.

    The system is assembled and solved in the eigenbasis of the kernel
    matrix, where the Psi^-2 term is exactly diagonal; forming Psi^-2
    explicitly would inflate the system norm with rounding noise and make
    the residual check meaningless at large kernel scales.  The residual is
    assessed in that basis (orthogonal, so Frobenius norms carry over).
    """
    if mu3 <= 0:
        raise ValueError("mu3 must be positive")
    r = np.asarray(r, dtype=float)
    r_norm = np.linalg.norm(r)
    if mu1 != 0.0:
        try:
            w, v = np.linalg.eigh(psi)
        except np.linalg.LinAlgError as err:
            raise SolveFailed(f"kernel matrix eigendecomposition failed: {err}") from err
        if w[0] <= 0.0:
            raise SolveFailed(
                f"kernel matrix is not positive definite (min eigenvalue {w[0]:.3e})"
            )
        system = v.T @ lap @ v
        system[np.diag_indices_from(system)] += mu1 / w**2 + mu3
        rhs = mu3 * (v.T @ r)
    else:
        system = lap + mu3 * np.eye(lap.shape[0])
        rhs = mu3 * r
    sol = _solve_refined(_factor(system, "embedding system"), system, rhs,
                         target=0.1 * EMBEDDING_RESIDUAL_TOL * r_norm)
    # Normwise backward error: immune to the system's scale, so it flags
    # genuinely broken solves without rejecting well-posed extreme weights.
    scale = np.linalg.norm(system) * np.linalg.norm(sol) + np.linalg.norm(rhs)
    residual = np.linalg.norm(system @ sol - rhs) / scale
    if residual > EMBEDDING_RESIDUAL_TOL:
        raise SolveFailed(
            f"embedding solve backward error {residual:.3e} exceeds "
            f"{EMBEDDING_RESIDUAL_TOL:.0e}"
        )
    return v @ sol if mu1 != 0.0 else sol


def _sigma_objective_from_sq(r_hat: np.ndarray, sq: np.ndarray, sigma: float,
                             mu1: float, mu2: float, jitter: float) -> float:
    value = mu2 / sigma**2
    if mu1 != 0.0:
        coeffs = cho_solve(_factor(_kernel_from_sq(sq, sigma, jitter), "kernel matrix"),
                           np.asarray(r_hat, dtype=float))
        value += mu1 * float(np.sum(coeffs * coeffs))
    return value


def sigma_objective(r_hat: np.ndarray, x: np.ndarray, sigma: float,
                    mu1: float, mu2: float, jitter: float = 1e-8) -> float:
    """Kernel-scale objective: mu1 tr(Rhat^T Psi^-2 Rhat) + mu2 / sigma^2."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return _sigma_objective_from_sq(r_hat, _sq_dists(x), sigma, mu1, mu2, jitter)


def update_sigma(r_hat: np.ndarray, x: np.ndarray, hyper: Hyperparams,
                 current_sigma: float, scale: float | None = None,
                 sq: np.ndarray | None = None) -> float:
    """Exhaustive kernel-scale search over the log grid plus the incumbent.

    Candidates whose kernel matrix fails to factor are skipped (their
    objective is effectively infinite); ties break toward the smaller scale.
    """
    if sq is None:
        sq = _sq_dists(x)
    if scale is None:
        scale = median_pairwise_distance(x)
    candidates = np.sort(np.append(hyper.sigma_grid.absolute(scale), current_sigma))
    best_sigma, best_value = None, math.inf
    for sigma in candidates:
        try:
            value = _sigma_objective_from_sq(r_hat, sq, sigma, hyper.mu1, hyper.mu2,
                                             hyper.jitter)
        except SolveFailed:
            continue
        if value < best_value:
            best_sigma, best_value = sigma, value
    if best_sigma is None:
        raise SolveFailed("no kernel scale in the search grid could be factorized")
    return float(best_sigma)


def _objective_terms(lap, sq, r, r_hat, sigma, hyper):
    lap_term = float(np.sum(r_hat * (lap @ r_hat)))
    kern_term = 0.0
    if hyper.mu1 != 0.0:
        coeffs = cho_solve(_factor(_kernel_from_sq(sq, sigma, hyper.jitter),
                                   "kernel matrix"), r_hat)
        kern_term = hyper.mu1 * float(np.sum(coeffs * coeffs))
    sig_pen = hyper.mu2 / sigma**2
    fid = hyper.mu3 * float(np.sum((r_hat - r) ** 2))
    return lap_term + kern_term + sig_pen + fid, lap_term, kern_term, sig_pen, fid


def fit(x: np.ndarray, r: np.ndarray, hyper: Hyperparams | None = None,
        dataset_seed: int | None = None) -> tuple[TrainedInterpolator, TrainingTrace]:
    """Learn the interpolator from UL features ``x`` to DL features ``r``.

    Alternates the closed-form embedding update with the kernel-scale grid
    search until the relative objective change drops below ``obj_tol`` or
    ``max_iter`` is reached, then extracts the interpolator coefficients.
    """
    if hyper is None:
        hyper = Hyperparams()
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least 2 training samples")
    if r.shape != x.shape:
        raise ValueError(f"input/target shape mismatch: {x.shape} vs {r.shape}")

    sq = _sq_dists(x)
    med = median_pairwise_distance(x)
    theta = hyper.theta if hyper.theta is not None else median_nn_distance(x)
    sigma = hyper.sigma_init if hyper.sigma_init is not None else med
    lap = _laplacian_from_sq(sq, theta)
    r_hat = r.copy()

    trace = TrainingTrace()
    obj, lap_t, kern_t, sig_t, fid_t = _objective_terms(lap, sq, r, r_hat, sigma, hyper)
    trace.record(obj, sigma, lap_t, kern_t, sig_t, fid_t)

    for _ in range(hyper.max_iter):
        psi = _kernel_from_sq(sq, sigma, hyper.jitter)
        r_hat = update_embedding(lap, psi, r, hyper.mu1, hyper.mu3)
        sigma = update_sigma(r_hat, x, hyper, sigma, med, sq=sq)
        obj, lap_t, kern_t, sig_t, fid_t = _objective_terms(lap, sq, r, r_hat, sigma, hyper)
        trace.record(obj, sigma, lap_t, kern_t, sig_t, fid_t)
        prev = trace.objective[-2]
        if abs(prev - obj) <= hyper.obj_tol * max(abs(prev), 1e-300):
            trace.converged = True
            break

    psi = _kernel_from_sq(sq, sigma, hyper.jitter)
    rhat_norm = np.linalg.norm(r_hat)
    coeffs = _solve_refined(_factor(psi, "kernel matrix"), psi, r_hat,
                            target=0.1 * EMBEDDING_RESIDUAL_TOL * rhat_norm)
    residual = np.linalg.norm(psi @ coeffs - r_hat) / rhat_norm
    if residual > EMBEDDING_RESIDUAL_TOL:
        raise SolveFailed(
            f"coefficient solve residual {residual:.3e} exceeds "
            f"{EMBEDDING_RESIDUAL_TOL:.0e} of the embedding norm"
        )
    model = TrainedInterpolator(centers=x, coeffs=coeffs, sigma=sigma,
                                embedding=r_hat, theta=theta, hyper=hyper,
                                dataset_seed=dataset_seed)
    return model, trace


def train(dataset, hyper: Hyperparams | None = None
          ) -> tuple[TrainedInterpolator, TrainingTrace]:
    """Train on a dataset's observed UL/DL training features."""
    if len(dataset.train) < 2:
        raise ValueError("dataset needs at least 2 training samples")
    return fit(dataset.train_inputs(), dataset.train_targets(), hyper,
               dataset_seed=dataset.seed)


def _raw_values(model: TrainedInterpolator, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != model.n_features:
        raise ValueError(
            f"expected feature length {model.n_features}, got {x.shape[1]}"
        )
    sq = cdist(x, model.centers, "sqeuclidean")
    return np.exp(-sq / model.sigma**2) @ model.coeffs


def predict_raw(model: TrainedInterpolator, x: np.ndarray) -> np.ndarray:
    """Raw interpolator output (no normalization); x may be one vector or a
    matrix of rows."""
    out = _raw_values(model, x)
    return out[0] if np.asarray(x).ndim == 1 else out


def predict(model: TrainedInterpolator, x: np.ndarray) -> np.ndarray:
    """Interpolate and rescale so the leading feature (the covariance
    diagonal) is exactly 1.

    Raises
    ------
    NormalizationDegenerate
        If a raw leading entry is below 1e-9 in magnitude, e.g. for queries
        far from every center.
    """
    single = np.asarray(x).ndim == 1
    out = _raw_values(model, x)
    lead = out[:, 0]
    bad = np.abs(lead) < 1e-9
    if np.any(bad):
        raise NormalizationDegenerate(
            f"{int(bad.sum())} prediction(s) have near-zero leading entry; "
            "query is too far from the training centers"
        )
    out = out / lead[:, None]
    return out[0] if single else out


def lipschitz_bound(model: TrainedInterpolator) -> float:
    """Closed-form Lipschitz bound of the raw Gaussian RBF interpolator:
    sqrt(2) e^(-1/2) sqrt(N) ||C||_F / sigma."""
    c_norm = float(np.linalg.norm(model.coeffs))
    return math.sqrt(2.0) * math.exp(-0.5) * math.sqrt(model.n_centers) * c_norm / model.sigma


# ---------------------------------------------------------------------------
# Model persistence: plain-text header plus CSV blocks, 17 significant digits
# so loading reproduces predictions bit-exactly.
# ---------------------------------------------------------------------------

MODEL_FORMAT_VERSION = 1


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def save_model(model: TrainedInterpolator, path: str | Path) -> None:
    h = model.hyper
    lines = [
        f"format_version = {MODEL_FORMAT_VERSION}",
        f"n = {model.n_centers}",
        f"n_features = {model.n_features}",
        f"sigma = {_fmt(model.sigma)}",
        f"theta = {_fmt(model.theta)}",
        f"mu1 = {_fmt(h.mu1)}",
        f"mu2 = {_fmt(h.mu2)}",
        f"mu3 = {_fmt(h.mu3)}",
        f"jitter = {_fmt(h.jitter)}",
        f"max_iter = {h.max_iter}",
        f"obj_tol = {_fmt(h.obj_tol)}",
        f"sigma_grid_lo = {_fmt(h.sigma_grid.lo)}",
        f"sigma_grid_hi = {_fmt(h.sigma_grid.hi)}",
        f"sigma_grid_points = {h.sigma_grid.n_points}",
        f"dataset_seed = {'none' if model.dataset_seed is None else model.dataset_seed}",
    ]
    for name, block in (("centers", model.centers), ("coeffs", model.coeffs),
                        ("embedding", model.embedding)):
        lines.append(f"[{name}]")
        for row in block:
            lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_model(path: str | Path) -> TrainedInterpolator:
    text = Path(path).read_text(encoding="ascii").splitlines()
    header: dict[str, str] = {}
    blocks: dict[str, list[list[float]]] = {}
    current: list[list[float]] | None = None
    for line in text:
        if not line.strip():
            continue
        if line.startswith("[") and line.endswith("]"):
            current = blocks.setdefault(line[1:-1], [])
        elif current is not None:
            current.append([float(v) for v in line.split(",")])
        else:
            key, _, value = line.partition("=")
            header[key.strip()] = value.strip()
    if int(header["format_version"]) != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {header['format_version']}")

    hyper = Hyperparams(
        mu1=float(header["mu1"]), mu2=float(header["mu2"]), mu3=float(header["mu3"]),
        theta=float(header["theta"]), sigma_init=float(header["sigma"]),
        sigma_grid=SigmaGrid(lo=float(header["sigma_grid_lo"]),
                             hi=float(header["sigma_grid_hi"]),
                             n_points=int(header["sigma_grid_points"])),
        max_iter=int(header["max_iter"]), obj_tol=float(header["obj_tol"]),
        jitter=float(header["jitter"]),
    )
    seed = None if header["dataset_seed"] == "none" else int(header["dataset_seed"])
    return TrainedInterpolator(
        centers=np.array(blocks["centers"]),
        coeffs=np.array(blocks["coeffs"]),
        sigma=float(header["sigma"]),
        embedding=np.array(blocks["embedding"]),
        theta=float(header["theta"]),
        hyper=hyper,
        dataset_seed=seed,
    )
