"""Training/test dataset synthesis for the UL-to-DL covariance mapping task.

For every user an exact UL/DL covariance pair is computed by quadrature, and
the *observed* counterpart is produced by the estimation chain a base station
would actually run: sample channels from the covariance, add estimation
noise, form a debiased sample covariance, project it back onto the
Toeplitz-Hermitian-PSD set, and normalize the (1,1) entry to 1.  Test users
keep their exact DL covariance as ground truth; only their UL side is pushed
through the observation chain.

Datasets are pure functions of (config, seed): every user draws from an
independently derived substream, so regeneration is reproducible sample by
sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .array_model import (
    AngularProfile,
    ArrayConfig,
    CovarianceFirstRow,
    Link,
    PasFamily,
    ccm_first_row,
    expand_toeplitz,
    to_feature,
)
from .errors import (
    InvalidRange,
    NonPositiveDiagonal,
    NotPSD,
    ProjectionNotConverged,
)

DEFAULT_SPREAD_LO = math.radians(5.0)
DEFAULT_SPREAD_HI = math.radians(15.0)

# RNG substream tags so profile draws and per-user noise never collide.
_PROFILE_STREAM = 0
_USER_STREAM = 1


@dataclass(frozen=True)
class NoiseSpec:
    """Observation noise model for the covariance estimation chain.

    ``snr_db`` sets the per-user noise power to trace(R_ul) / 10^(snr/10);
    ``n_ch`` is the number of channel realizations averaged into the sample
    covariance.  ``snr_db = inf`` disables the estimation chain entirely:
    observed covariances equal the exact ones up to the structured
    projection (the noiseless "perfect dataset" regime).
    """

    snr_db: float = 20.0
    n_ch: int = 1

    def __post_init__(self):
        if self.n_ch < 1:
            raise ValueError(f"n_ch must be >= 1, got {self.n_ch}")

    @property
    def noiseless(self) -> bool:
        return math.isinf(self.snr_db)

    def noise_power(self, trace_r: float) -> float:
        if self.noiseless:
            return 0.0
        return trace_r / 10.0 ** (self.snr_db / 10.0)


@dataclass
class UserSample:
    """One user's exact and observed feature vectors plus its PAS metadata.

    ``dl_observed`` is None for test users, whose DL side stays exact.
    """

    user_id: int
    profile: AngularProfile
    ul_true: np.ndarray
    dl_true: np.ndarray
    ul_observed: np.ndarray
    dl_observed: np.ndarray | None


@dataclass
class Dataset:
    cfg: ArrayConfig
    noise: NoiseSpec
    seed: int
    split_ratio: float
    family: PasFamily
    spread_lo: float
    spread_hi: float
    train: list[UserSample] = field(default_factory=list)
    test: list[UserSample] = field(default_factory=list)

    @property
    def n_users(self) -> int:
        return len(self.train) + len(self.test)

    def train_inputs(self) -> np.ndarray:
        return np.array([u.ul_observed for u in self.train])

    def train_targets(self) -> np.ndarray:
        return np.array([u.dl_observed for u in self.train])

    def test_inputs(self) -> np.ndarray:
        return np.array([u.ul_observed for u in self.test])

    def test_truth(self) -> np.ndarray:
        return np.array([u.dl_true for u in self.test])


def draw_profiles(n: int, rng: np.random.Generator,
                  spread_lo: float = DEFAULT_SPREAD_LO,
                  spread_hi: float = DEFAULT_SPREAD_HI,
                  family: PasFamily = PasFamily.UNIFORM) -> list[AngularProfile]:
    """Draw i.i.d. angular profiles: mean AoA uniform on [-pi, pi], spread
    uniform on [spread_lo, spread_hi]."""
    if not 0.0 < spread_lo <= spread_hi:
        raise InvalidRange(
            f"need 0 < spread_lo <= spread_hi, got [{spread_lo}, {spread_hi}]"
        )
    means = rng.uniform(-math.pi, math.pi, size=n)
    spreads = rng.uniform(spread_lo, spread_hi, size=n)
    return [
        AngularProfile(family=family, mean_aoa=v, spread=s)
        for v, s in zip(means, spreads)
    ]


def _psd_sqrt(a: np.ndarray, clip_tol: float = 1e-6) -> np.ndarray:
    """Hermitian square root with negative eigenvalues clipped to zero."""
    w, v = np.linalg.eigh(a)
    if w[-1] > 0 and w[0] < -clip_tol * w[-1]:
        raise NotPSD(
            f"matrix has eigenvalue {w[0]:.3e} below -{clip_tol:.0e} * {w[-1]:.3e}"
        )
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def sample_channels(row: CovarianceFirstRow, n_ch: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Draw ``n_ch`` zero-mean complex Gaussian channels with the given
    covariance; returns an (n_ch, M) array."""
    sqrt_r = _psd_sqrt(expand_toeplitz(row))
    m = row.m
    w = (rng.standard_normal((n_ch, m)) + 1j * rng.standard_normal((n_ch, m)))
    w /= math.sqrt(2.0)
    return w @ sqrt_r.T


def noisy_sample_covariance(row: CovarianceFirstRow, noise: NoiseSpec,
                            rng: np.random.Generator) -> np.ndarray:
    """Debiased sample covariance of noisy channel estimates.

    Averages n_ch outer products of channels corrupted by CN(0, sigma_n^2 I)
    estimation noise and subtracts the noise floor; the result is symmetrized
    but generally indefinite and not Toeplitz.
    """
    m = row.m
    trace_r = m * row.entries[0].real
    sigma2 = noise.noise_power(trace_r)
    h = sample_channels(row, noise.n_ch, rng)
    if sigma2 > 0.0:
        h = h + math.sqrt(sigma2 / 2.0) * (
            rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)
        )
    cov = np.einsum("ci,cj->ij", h, h.conj()) / noise.n_ch
    cov -= sigma2 * np.eye(m)
    return (cov + cov.conj().T) / 2.0


# Diagonal index map and per-diagonal counts, cached per matrix size.
_DIAG_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _diag_index(m: int) -> tuple[np.ndarray, np.ndarray]:
    cached = _DIAG_CACHE.get(m)
    if cached is None:
        i = np.arange(m)
        idx = (i[None, :] - i[:, None] + m - 1).ravel()
        counts = (m - np.abs(np.arange(2 * m - 1) - (m - 1))).astype(float)
        cached = _DIAG_CACHE[m] = (idx, counts)
    return cached


def _toeplitz_average_row(a: np.ndarray) -> np.ndarray:
    """First row of the Frobenius projection onto Hermitian Toeplitz
    matrices: average each diagonal, pairing diagonal k with conj(-k)."""
    m = a.shape[0]
    idx, counts = _diag_index(m)
    sums = (np.bincount(idx, weights=a.real.ravel(), minlength=2 * m - 1)
            + 1j * np.bincount(idx, weights=a.imag.ravel(), minlength=2 * m - 1))
    means = sums / counts
    row = 0.5 * (means[m - 1:] + np.conj(means[m - 1::-1]))
    row[0] = means[m - 1].real
    return row


def _expand_row(row: np.ndarray) -> np.ndarray:
    from scipy.linalg import toeplitz

    return toeplitz(np.conj(row), row)


def _clip_psd(a: np.ndarray) -> tuple[np.ndarray, float]:
    """PSD-cone projection and its Frobenius distance from the input.

    Only the negative eigenspace is computed and corrected (a subset
    eigensolver keeps this cheap near convergence); the distance is the norm
    of the clipped eigenvalues.
    """
    try:
        w, v = scipy.linalg.eigh(a, subset_by_value=(-np.inf, 0.0),
                                 driver="evr", check_finite=False)
        neg = w < 0.0
        w, v = w[neg], v[:, neg]
    except scipy.linalg.LinAlgError:  # pragma: no cover - rare LAPACK fallback
        w, v = np.linalg.eigh(a)
        neg = w < 0.0
        w, v = w[neg], v[:, neg]
    if w.size == 0:
        return a, 0.0
    gap = float(np.sqrt(np.sum(w**2)))
    return a - (v * w) @ v.conj().T, gap


def structure_project(a: np.ndarray, link: Link = Link.UL,
                      tol: float = 1e-10,
                      max_iter: int = 200) -> CovarianceFirstRow:
    """Project a Hermitian matrix onto the Toeplitz-Hermitian-PSD set.

    Alternates the diagonal-averaging projection onto Hermitian Toeplitz
    matrices with the eigenvalue-clipping projection onto the PSD cone until
    the Frobenius gap between the two falls below ``tol``.  A final Toeplitz
    re-projection guarantees the returned first row expands to an exactly
    Toeplitz matrix with eigenvalues above -tol.

    Raises
    ------
    ProjectionNotConverged
        After ``max_iter`` sweeps; carries the last iterate's first row so
        the caller may accept it.
    """
    current = a
    gap = math.inf
    for _ in range(max_iter):
        t = _expand_row(_toeplitz_average_row(current))
        current, gap = _clip_psd(t)
        if gap < tol:
            return CovarianceFirstRow(_toeplitz_average_row(current), link)
    raise ProjectionNotConverged(gap, CovarianceFirstRow(_toeplitz_average_row(current), link))


def normalize_first_entry(row: CovarianceFirstRow) -> CovarianceFirstRow:
    """Scale a first row so its leading (diagonal) entry is exactly 1."""
    lead = row.entries[0].real
    if lead <= 1e-9:
        raise NonPositiveDiagonal(
            f"(1,1) entry {lead:.3e} is not positive; noisy estimate degenerate"
        )
    entries = row.entries / lead
    entries[0] = 1.0
    return CovarianceFirstRow(entries, row.link)


def observe_row(row: CovarianceFirstRow, noise: NoiseSpec,
                rng: np.random.Generator) -> CovarianceFirstRow:
    """Run the full observation chain on one exact covariance row.

    In the noiseless regime the sampling stage is skipped and the exact
    matrix is only re-projected and normalized.  If the alternating
    projection hits its iteration cap, the last iterate is accepted.
    """
    if noise.noiseless:
        raw = expand_toeplitz(row)
    else:
        raw = noisy_sample_covariance(row, noise, rng)
    try:
        projected = structure_project(raw, row.link)
    except ProjectionNotConverged as err:
        projected = err.last_row
    return normalize_first_entry(projected)


def _user_rng(seed: int, user_id: int, attempt: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence((seed, _USER_STREAM, user_id, attempt))
    )


def _observe_feature(row: CovarianceFirstRow, noise: NoiseSpec, seed: int,
                     user_id: int) -> np.ndarray:
    # One retry on a degenerate noise draw, then give up.
    try:
        observed = observe_row(row, noise, _user_rng(seed, user_id, 0))
    except NonPositiveDiagonal:
        observed = observe_row(row, noise, _user_rng(seed, user_id, 1))
    return to_feature(observed)


def build_dataset(cfg: ArrayConfig,
                  n_users: int = 500,
                  split_ratio: float = 0.8,
                  noise: NoiseSpec | None = None,
                  family: PasFamily = PasFamily.UNIFORM,
                  spread_lo: float = DEFAULT_SPREAD_LO,
                  spread_hi: float = DEFAULT_SPREAD_HI,
                  seed: int = 0) -> Dataset:
    """Generate a complete dataset; deterministic given (arguments, seed).

    Train users carry observed UL and DL features; test users carry an
    observed UL feature and their exact DL feature as ground truth.
    """
    if n_users < 2:
        raise ValueError(f"need at least 2 users, got {n_users}")
    if not 0.0 < split_ratio < 1.0:
        raise ValueError(f"split_ratio must be in (0, 1), got {split_ratio}")
    if noise is None:
        noise = NoiseSpec(snr_db=20.0, n_ch=2 * cfg.m)

    profile_rng = np.random.default_rng(np.random.SeedSequence((seed, _PROFILE_STREAM)))
    profiles = draw_profiles(n_users, profile_rng, spread_lo, spread_hi, family)
    n_train = int(round(n_users * split_ratio))
    if not 1 <= n_train < n_users:
        raise ValueError(f"split {split_ratio} leaves an empty train or test set")

    ds = Dataset(cfg=cfg, noise=noise, seed=seed, split_ratio=split_ratio,
                 family=family, spread_lo=spread_lo, spread_hi=spread_hi)
    for uid, profile in enumerate(profiles):
        ul_row = ccm_first_row(cfg, profile, Link.UL)
        dl_row = ccm_first_row(cfg, profile, Link.DL)
        is_train = uid < n_train
        sample = UserSample(
            user_id=uid,
            profile=profile,
            ul_true=to_feature(ul_row),
            dl_true=to_feature(dl_row),
            ul_observed=_observe_feature(ul_row, noise, seed, 2 * uid),
            dl_observed=(
                _observe_feature(dl_row, noise, seed, 2 * uid + 1)
                if is_train else None
            ),
        )
        (ds.train if is_train else ds.test).append(sample)
    return ds


# ---------------------------------------------------------------------------
# Serialization: a directory with a plain-text header and CSV feature tables.
# Floats are written with 17 significant digits so round trips are bit-exact.
# ---------------------------------------------------------------------------

FORMAT_VERSION = 1


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _feature_line(user_id: int, link: str, kind: str, values: np.ndarray) -> str:
    return ",".join([str(user_id), link, kind] + [_fmt(v) for v in values])


def save_dataset(ds: Dataset, path: str | Path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)

    meta = [
        ("format_version", str(FORMAT_VERSION)),
        ("m", str(ds.cfg.m)),
        ("f_ul", _fmt(ds.cfg.f_ul)),
        ("f_dl", _fmt(ds.cfg.f_dl)),
        ("d", _fmt(ds.cfg.d)),
        ("n_users", str(ds.n_users)),
        ("split_ratio", _fmt(ds.split_ratio)),
        ("seed", str(ds.seed)),
        ("snr_db", _fmt(ds.noise.snr_db)),
        ("n_ch", str(ds.noise.n_ch)),
        ("family", ds.family.value),
        ("spread_lo", _fmt(ds.spread_lo)),
        ("spread_hi", _fmt(ds.spread_hi)),
    ]
    (path / "metadata.txt").write_text(
        "".join(f"{k} = {v}\n" for k, v in meta), encoding="ascii"
    )

    prof_lines = ["user_id,split,family,mean_aoa,spread,scale"]
    for split, samples in (("train", ds.train), ("test", ds.test)):
        for u in samples:
            p = u.profile
            prof_lines.append(
                f"{u.user_id},{split},{p.family.value},"
                f"{_fmt(p.mean_aoa)},{_fmt(p.spread)},{_fmt(p.scale)}"
            )
    (path / "profiles.csv").write_text("\n".join(prof_lines) + "\n", encoding="ascii")

    n_feat = ds.cfg.n_features
    header = ",".join(["user_id", "link", "kind"] + [f"v{i}" for i in range(n_feat)])
    for split, samples in (("train", ds.train), ("test", ds.test)):
        lines = [header]
        for u in samples:
            lines.append(_feature_line(u.user_id, "ul", "true", u.ul_true))
            lines.append(_feature_line(u.user_id, "dl", "true", u.dl_true))
            lines.append(_feature_line(u.user_id, "ul", "observed", u.ul_observed))
            if u.dl_observed is not None:
                lines.append(_feature_line(u.user_id, "dl", "observed", u.dl_observed))
        (path / f"{split}.csv").write_text("\n".join(lines) + "\n", encoding="ascii")


def _parse_meta(path: Path) -> dict[str, str]:
    meta = {}
    for line in path.read_text(encoding="ascii").splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        meta[key.strip()] = value.strip()
    return meta


def load_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    meta = _parse_meta(path / "metadata.txt")
    if int(meta["format_version"]) != FORMAT_VERSION:
        raise ValueError(f"unsupported dataset format version {meta['format_version']}")

    cfg = ArrayConfig(m=int(meta["m"]), f_ul=float(meta["f_ul"]),
                      f_dl=float(meta["f_dl"]), d=float(meta["d"]))
    noise = NoiseSpec(snr_db=float(meta["snr_db"]), n_ch=int(meta["n_ch"]))
    ds = Dataset(cfg=cfg, noise=noise, seed=int(meta["seed"]),
                 split_ratio=float(meta["split_ratio"]),
                 family=PasFamily(meta["family"]),
                 spread_lo=float(meta["spread_lo"]),
                 spread_hi=float(meta["spread_hi"]))

    profiles: dict[int, tuple[str, AngularProfile]] = {}
    prof_lines = (path / "profiles.csv").read_text(encoding="ascii").splitlines()
    for line in prof_lines[1:]:
        uid, split, family, mean_aoa, spread, scale = line.split(",")
        profiles[int(uid)] = (split, AngularProfile(
            family=PasFamily(family), mean_aoa=float(mean_aoa),
            spread=float(spread), scale=float(scale)))

    for split in ("train", "test"):
        lines = (path / f"{split}.csv").read_text(encoding="ascii").splitlines()
        rows: dict[int, dict[tuple[str, str], np.ndarray]] = {}
        order: list[int] = []
        for line in lines[1:]:
            parts = line.split(",")
            uid = int(parts[0])
            if uid not in rows:
                rows[uid] = {}
                order.append(uid)
            rows[uid][(parts[1], parts[2])] = np.array([float(v) for v in parts[3:]])
        for uid in order:
            vecs = rows[uid]
            sample = UserSample(
                user_id=uid,
                profile=profiles[uid][1],
                ul_true=vecs[("ul", "true")],
                dl_true=vecs[("dl", "true")],
                ul_observed=vecs[("ul", "observed")],
                dl_observed=vecs.get(("dl", "observed")),
            )
            (ds.train if split == "train" else ds.test).append(sample)
    return ds
