"""Experiment orchestration: configs, seeded sweeps, and result emission.

Configuration lives in a plain-text INI file with typed, validated sections;
unknown sections or keys are hard errors so a typo cannot silently fall back
to a default.  Every sweep cell derives its own 64-bit seed from the base
seed and the cell coordinates, so any cell can be regenerated in isolation
and a finished sweep rerun with the same config is byte-identical.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .array_model import ArrayConfig, PasFamily
from .dataset import Dataset, NoiseSpec, build_dataset
from .errors import ConfigError, DlccmError
from .learner import (
    Hyperparams,
    SigmaGrid,
    TrainedInterpolator,
    predict,
    train,
)
from .metrics import MetricReport, dictionary_estimate, evaluate_features
from .mmse import PilotConfig, PilotStyle, channel_experiment

LEARNED_METHOD = "graph_rbf"
DICTIONARY_METHOD = "dictionary (kernel-weighted kNN)"
PERFECT_METHOD = "perfect"

SWEEP_AXES = ("n_users", "m", "snr_db", "mu")


def noiseless_preset() -> Hyperparams:
    """Objective weights tuned for noiseless (perfect-covariance) datasets."""
    return Hyperparams(mu1=10.0, mu2=3e8, mu3=1e7)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment settings; defaults match the standard noisy
    operating point (M=64-class arrays, 500 users, 20 dB, 80/20 split)."""

    # array
    m: int = 64
    f_ul: float = 1.95e9
    f_dl: float = 2.14e9
    # dataset
    n_users: int = 500
    split_ratio: float = 0.8
    family: PasFamily = PasFamily.UNIFORM
    spread_lo_deg: float = 5.0
    spread_hi_deg: float = 15.0
    snr_db: float = 20.0
    n_ch: int | None = None  # None -> 2M
    # model
    hyper: Hyperparams = field(default_factory=Hyperparams)
    dictionary_k: int = 10
    # experiment control
    base_seed: int = 20240601
    n_repeats: int = 5
    # sweep
    sweep_axis: str = "n_users"
    sweep_values: tuple = (75, 150, 300, 500)
    # mmse
    pilot_snr_db_values: tuple = (0.0, 10.0, 20.0, 30.0, 40.0, 50.0)
    n_pilots_values: tuple = (10, 20, 30, 40)
    pilot_snr_db_fixed: float = 20.0
    n_realizations: int = 100
    pilot_style: PilotStyle = PilotStyle.RANDOM_UNITARY
    total_power: float = 1.0
    # kconst
    kconst_f_r: float | None = None  # None -> f_dl / f_ul
    kconst_deltas_deg: tuple = (5.0, 10.0, 15.0, 35.0, 45.0, 60.0)
    kconst_m_lo: int = 2
    kconst_m_hi: int = 1000
    kconst_b_grid: int = 20000
    # bound
    bound_delta: float | None = None  # None -> 2x median NN distance
    bound_epsilon: float = 1e-3

    def array_config(self, m: int | None = None) -> ArrayConfig:
        return ArrayConfig(m=m or self.m, f_ul=self.f_ul, f_dl=self.f_dl)

    def noise_spec(self, m: int | None = None,
                   snr_db: float | None = None) -> NoiseSpec:
        n_ch = self.n_ch if self.n_ch is not None else 2 * (m or self.m)
        return NoiseSpec(snr_db=self.snr_db if snr_db is None else snr_db,
                         n_ch=n_ch)


def _parse_scalar(text: str, kind, key: str):
    try:
        return kind(text)
    except ValueError as err:
        raise ConfigError(f"cannot parse {key} = {text!r} as {kind.__name__}") from err


def _parse_list(text: str, kind, key: str) -> tuple:
    return tuple(_parse_scalar(part.strip(), kind, key)
                 for part in text.split(",") if part.strip())


def _parse_mu_values(text: str, key: str) -> tuple:
    triples = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        pieces = part.split(":")
        if len(pieces) != 3:
            raise ConfigError(f"{key}: expected mu1:mu2:mu3 triples, got {part!r}")
        triples.append(tuple(_parse_scalar(p, float, key) for p in pieces))
    return tuple(triples)


_SECTION_KEYS = {
    "array": {"m", "f_ul_hz", "f_dl_hz"},
    "dataset": {"n_users", "split_ratio", "pas_family", "spread_lo_deg",
                "spread_hi_deg", "snr_db", "n_ch"},
    "hyperparams": {"mu1", "mu2", "mu3", "theta", "sigma_init",
                    "sigma_grid_lo", "sigma_grid_hi", "sigma_grid_points",
                    "max_iter", "obj_tol", "jitter"},
    "baseline": {"dictionary_k"},
    "experiment": {"base_seed", "n_repeats"},
    "sweep": {"axis", "values"},
    "mmse": {"pilot_snr_db_values", "n_pilots_values", "pilot_snr_db_fixed",
             "n_realizations", "pilot_style", "total_power"},
    "kconst": {"f_r", "deltas_deg", "m_lo", "m_hi", "b_grid"},
    "bound": {"delta", "epsilon"},
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate an INI-format experiment configuration.

    Every key is optional, but unknown sections or keys raise ConfigError.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"malformed config: {err}") from err

    for section in parser.sections():
        if section not in _SECTION_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        for key in parser[section]:
            if key not in _SECTION_KEYS[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")

    def get(section, key, default=None):
        if parser.has_option(section, key):
            return parser.get(section, key).strip()
        return default

    kwargs = {}
    if get("array", "m") is not None:
        kwargs["m"] = _parse_scalar(get("array", "m"), int, "m")
    if get("array", "f_ul_hz") is not None:
        kwargs["f_ul"] = _parse_scalar(get("array", "f_ul_hz"), float, "f_ul_hz")
    if get("array", "f_dl_hz") is not None:
        kwargs["f_dl"] = _parse_scalar(get("array", "f_dl_hz"), float, "f_dl_hz")

    if get("dataset", "n_users") is not None:
        kwargs["n_users"] = _parse_scalar(get("dataset", "n_users"), int, "n_users")
    if get("dataset", "split_ratio") is not None:
        kwargs["split_ratio"] = _parse_scalar(get("dataset", "split_ratio"), float,
                                              "split_ratio")
    if get("dataset", "pas_family") is not None:
        try:
            kwargs["family"] = PasFamily(get("dataset", "pas_family"))
        except ValueError as err:
            raise ConfigError(f"unknown pas_family {get('dataset', 'pas_family')!r}") from err
    for key, name in (("spread_lo_deg", "spread_lo_deg"), ("spread_hi_deg", "spread_hi_deg"),
                      ("snr_db", "snr_db")):
        if get("dataset", key) is not None:
            kwargs[name] = _parse_scalar(get("dataset", key), float, key)
    if get("dataset", "n_ch") is not None:
        raw = get("dataset", "n_ch")
        kwargs["n_ch"] = None if raw == "auto" else _parse_scalar(raw, int, "n_ch")

    hyper_kwargs = {}
    for key in ("mu1", "mu2", "mu3", "obj_tol", "jitter"):
        if get("hyperparams", key) is not None:
            hyper_kwargs[key] = _parse_scalar(get("hyperparams", key), float, key)
    for key in ("theta", "sigma_init"):
        if get("hyperparams", key) is not None:
            raw = get("hyperparams", key)
            hyper_kwargs[key] = None if raw == "auto" else _parse_scalar(raw, float, key)
    if get("hyperparams", "max_iter") is not None:
        hyper_kwargs["max_iter"] = _parse_scalar(get("hyperparams", "max_iter"), int,
                                                 "max_iter")
    grid_kwargs = {}
    if get("hyperparams", "sigma_grid_lo") is not None:
        grid_kwargs["lo"] = _parse_scalar(get("hyperparams", "sigma_grid_lo"), float,
                                          "sigma_grid_lo")
    if get("hyperparams", "sigma_grid_hi") is not None:
        grid_kwargs["hi"] = _parse_scalar(get("hyperparams", "sigma_grid_hi"), float,
                                          "sigma_grid_hi")
    if get("hyperparams", "sigma_grid_points") is not None:
        grid_kwargs["n_points"] = _parse_scalar(get("hyperparams", "sigma_grid_points"),
                                                int, "sigma_grid_points")
    if grid_kwargs:
        hyper_kwargs["sigma_grid"] = SigmaGrid(**grid_kwargs)
    if hyper_kwargs:
        try:
            kwargs["hyper"] = Hyperparams(**hyper_kwargs)
        except ValueError as err:
            raise ConfigError(str(err)) from err

    if get("baseline", "dictionary_k") is not None:
        kwargs["dictionary_k"] = _parse_scalar(get("baseline", "dictionary_k"), int,
                                               "dictionary_k")
    if get("experiment", "base_seed") is not None:
        kwargs["base_seed"] = _parse_scalar(get("experiment", "base_seed"), int,
                                            "base_seed")
    if get("experiment", "n_repeats") is not None:
        kwargs["n_repeats"] = _parse_scalar(get("experiment", "n_repeats"), int,
                                            "n_repeats")

    if get("sweep", "axis") is not None:
        axis = get("sweep", "axis")
        if axis not in SWEEP_AXES:
            raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
        kwargs["sweep_axis"] = axis
    if get("sweep", "values") is not None:
        axis = kwargs.get("sweep_axis", "n_users")
        raw = get("sweep", "values")
        if axis == "mu":
            kwargs["sweep_values"] = _parse_mu_values(raw, "values")
        elif axis in ("n_users", "m"):
            kwargs["sweep_values"] = _parse_list(raw, int, "values")
        else:
            kwargs["sweep_values"] = _parse_list(raw, float, "values")

    if get("mmse", "pilot_snr_db_values") is not None:
        kwargs["pilot_snr_db_values"] = _parse_list(get("mmse", "pilot_snr_db_values"),
                                                    float, "pilot_snr_db_values")
    if get("mmse", "n_pilots_values") is not None:
        kwargs["n_pilots_values"] = _parse_list(get("mmse", "n_pilots_values"), int,
                                                "n_pilots_values")
    if get("mmse", "pilot_snr_db_fixed") is not None:
        kwargs["pilot_snr_db_fixed"] = _parse_scalar(get("mmse", "pilot_snr_db_fixed"),
                                                     float, "pilot_snr_db_fixed")
    if get("mmse", "n_realizations") is not None:
        kwargs["n_realizations"] = _parse_scalar(get("mmse", "n_realizations"), int,
                                                 "n_realizations")
    if get("mmse", "pilot_style") is not None:
        try:
            kwargs["pilot_style"] = PilotStyle(get("mmse", "pilot_style"))
        except ValueError as err:
            raise ConfigError(f"unknown pilot_style {get('mmse', 'pilot_style')!r}") from err
    if get("mmse", "total_power") is not None:
        kwargs["total_power"] = _parse_scalar(get("mmse", "total_power"), float,
                                              "total_power")

    if get("kconst", "f_r") is not None:
        kwargs["kconst_f_r"] = _parse_scalar(get("kconst", "f_r"), float, "f_r")
    if get("kconst", "deltas_deg") is not None:
        kwargs["kconst_deltas_deg"] = _parse_list(get("kconst", "deltas_deg"), float,
                                                  "deltas_deg")
    for key, name in (("m_lo", "kconst_m_lo"), ("m_hi", "kconst_m_hi"),
                      ("b_grid", "kconst_b_grid")):
        if get("kconst", key) is not None:
            kwargs[name] = _parse_scalar(get("kconst", key), int, key)

    if get("bound", "delta") is not None:
        raw = get("bound", "delta")
        kwargs["bound_delta"] = None if raw == "auto" else _parse_scalar(raw, float,
                                                                         "delta")
    if get("bound", "epsilon") is not None:
        kwargs["bound_epsilon"] = _parse_scalar(get("bound", "epsilon"), float, "epsilon")

    return ExperimentConfig(**kwargs)


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Seeds
# ---------------------------------------------------------------------------


def derive_seed(*parts) -> int:
    """Derive a 64-bit seed from mixed int/float/str parts.

    Ints pass through, floats contribute their IEEE-754 bits, and strings
    the first 8 bytes of their SHA-256; the words feed a SeedSequence.
    """
    words = []
    for part in parts:
        if isinstance(part, (bool,)):
            raise TypeError("bool seed parts are ambiguous")
        if isinstance(part, (int, np.integer)):
            words.append(int(part) & 0xFFFFFFFFFFFFFFFF)
        elif isinstance(part, (float, np.floating)):
            words.append(int(np.float64(part).view(np.uint64)))
        elif isinstance(part, str):
            digest = hashlib.sha256(part.encode("utf-8")).digest()
            words.append(int.from_bytes(digest[:8], "big"))
        else:
            raise TypeError(f"cannot hash seed part of type {type(part)!r}")
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])


def cell_seed(config: ExperimentConfig, axis: str, value, repeat: int) -> int:
    """Per-cell dataset seed.  Hyperparameter sweeps share datasets across
    values (the value does not enter the hash) so cells are comparable on
    matched data; dataset-shaping axes include the value."""
    if axis == "mu":
        return derive_seed(config.base_seed, axis, repeat)
    return derive_seed(config.base_seed, axis, float(value), repeat)


# ---------------------------------------------------------------------------
# Results tables
# ---------------------------------------------------------------------------


def _format_cell(value) -> str:
    if isinstance(value, (bool,)):
        raise TypeError("bool cells are not supported")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        text = f"{float(value):.17g}"
        if not any(c in text for c in ".einfa"):
            text += ".0"
        return text
    return str(value)


def _parse_cell(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


@dataclass
class ResultsTable:
    """In-memory results: ordered columns and one dict per row.

    CSV round trips are exact: floats carry 17 significant digits and always
    a decimal marker, ints stay bare, everything else is a string.
    """

    columns: list[str]
    rows: list[dict] = field(default_factory=list)

    def append(self, **cells) -> None:
        if set(cells) != set(self.columns):
            raise ValueError(f"row keys {sorted(cells)} != columns {self.columns}")
        self.rows.append(cells)

    def column(self, name: str) -> list:
        return [row[name] for row in self.rows]

    def select(self, **conditions) -> "ResultsTable":
        kept = [r for r in self.rows
                if all(r[k] == v for k, v in conditions.items())]
        return ResultsTable(columns=list(self.columns), rows=kept)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_format_cell(row[c]) for c in self.columns])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv_text(), encoding="utf-8")

    @classmethod
    def from_csv_text(cls, text: str) -> "ResultsTable":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        table = cls(columns=header)
        for parts in reader:
            table.rows.append({c: _parse_cell(v) for c, v in zip(header, parts)})
        return table

    @classmethod
    def read_csv(cls, path: str | Path) -> "ResultsTable":
        return cls.from_csv_text(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def _value_label(axis: str, value) -> str:
    if axis == "mu":
        return "/".join(f"{v:g}" for v in value)
    return f"{value:g}"


def build_cell_dataset(config: ExperimentConfig, axis: str, value,
                       seed: int) -> Dataset:
    m = config.m
    n_users = config.n_users
    snr_db = None
    if axis == "m":
        m = int(value)
    elif axis == "n_users":
        n_users = int(value)
    elif axis == "snr_db":
        snr_db = float(value)
    return build_dataset(
        cfg=config.array_config(m),
        n_users=n_users,
        split_ratio=config.split_ratio,
        noise=config.noise_spec(m, snr_db),
        family=config.family,
        spread_lo=math.radians(config.spread_lo_deg),
        spread_hi=math.radians(config.spread_hi_deg),
        seed=seed,
    )


def _cell_hyper(config: ExperimentConfig, axis: str, value) -> Hyperparams:
    if axis == "mu":
        mu1, mu2, mu3 = value
        return replace(config.hyper, mu1=mu1, mu2=mu2, mu3=mu3)
    return config.hyper


def evaluate_methods(ds: Dataset, model: TrainedInterpolator,
                     dictionary_k: int) -> dict[str, MetricReport]:
    """Score the learned interpolator and the dictionary baseline on the
    test split of a dataset."""
    truth = ds.test_truth()
    test_inputs = ds.test_inputs()
    k = min(dictionary_k, len(ds.train))
    estimates = {
        LEARNED_METHOD: predict(model, test_inputs),
        DICTIONARY_METHOD: dictionary_estimate(
            ds.train_inputs(), ds.train_targets(), test_inputs, k=k),
    }
    return {name: evaluate_features(truth, est) for name, est in estimates.items()}


SWEEP_COLUMNS = ["axis", "value", "repeat", "seed", "method",
                 "nmse", "cmd", "dm", "status", "message"]


def run_sweep(config: ExperimentConfig) -> ResultsTable:
    """Run the configured sweep: one dataset + training per (value, repeat),
    scored with all three metrics for the learned method and the dictionary
    baseline.  A failing cell is recorded and the sweep continues."""
    table = ResultsTable(columns=list(SWEEP_COLUMNS))
    axis = config.sweep_axis
    for value in config.sweep_values:
        label = _value_label(axis, value)
        for repeat in range(config.n_repeats):
            seed = cell_seed(config, axis, value, repeat)
            base = dict(axis=axis, value=label, repeat=repeat, seed=seed)
            try:
                ds = build_cell_dataset(config, axis, value, seed)
                model, _ = train(ds, _cell_hyper(config, axis, value))
                reports = evaluate_methods(ds, model, config.dictionary_k)
            except DlccmError as err:
                table.append(**base, method="-", nmse=math.nan, cmd=math.nan,
                             dm=math.nan, status="error", message=str(err))
                continue
            for method, report in reports.items():
                table.append(**base, method=method, nmse=report.nmse,
                             cmd=report.cmd, dm=report.dm, status="ok", message="")
    return table


SUMMARY_COLUMNS = ["axis", "value", "method", "n",
                   "nmse_mean", "nmse_std", "cmd_mean", "cmd_std",
                   "dm_mean", "dm_std"]


def summarize_sweep(table: ResultsTable) -> ResultsTable:
    """Mean and sample standard deviation per (value, method) over repeats."""
    summary = ResultsTable(columns=list(SUMMARY_COLUMNS))
    seen: list[tuple] = []
    for row in table.rows:
        key = (row["axis"], row["value"], row["method"])
        if row["status"] == "ok" and key not in seen:
            seen.append(key)
    for axis, value, method in seen:
        rows = [r for r in table.rows
                if (r["axis"], r["value"], r["method"]) == (axis, value, method)
                and r["status"] == "ok"]
        cells = dict(axis=axis, value=value, method=method, n=len(rows))
        for metric in ("nmse", "cmd", "dm"):
            vals = np.array([r[metric] for r in rows])
            cells[f"{metric}_mean"] = float(vals.mean())
            cells[f"{metric}_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        summary.append(**cells)
    return summary


# ---------------------------------------------------------------------------
# MMSE channel-estimation experiments
# ---------------------------------------------------------------------------

MMSE_COLUMNS = ["experiment", "x", "repeat", "dataset_seed", "method",
                "nmse_mean", "nmse_std", "status", "message"]


def run_mmse_experiment(config: ExperimentConfig) -> ResultsTable:
    """Pilot-SNR sweep (pilot count = covariance rank) and pilot-count sweep
    (fixed pilot SNR) for the perfect-covariance estimator, the learned
    method, and the dictionary baseline."""
    table = ResultsTable(columns=list(MMSE_COLUMNS))
    for repeat in range(config.n_repeats):
        seed = derive_seed(config.base_seed, "mmse", repeat)
        try:
            ds = build_cell_dataset(config, "mmse-base", None, seed)
            model, _ = train(ds, config.hyper)
            k = min(config.dictionary_k, len(ds.train))
            estimates = {
                LEARNED_METHOD: predict(model, ds.test_inputs()),
                DICTIONARY_METHOD: dictionary_estimate(
                    ds.train_inputs(), ds.train_targets(), ds.test_inputs(), k=k),
            }
        except DlccmError as err:
            for experiment in ("pilot_snr_db", "n_pilots"):
                table.append(experiment=experiment, x=math.nan, repeat=repeat,
                             dataset_seed=seed, method="-", nmse_mean=math.nan,
                             nmse_std=math.nan, status="error", message=str(err))
            continue

        cells = [("pilot_snr_db", snr,
                  PilotConfig(pilot_snr_db=snr, n_pilots=None,
                              total_power=config.total_power, style=config.pilot_style))
                 for snr in config.pilot_snr_db_values]
        cells += [("n_pilots", n_p,
                   PilotConfig(pilot_snr_db=config.pilot_snr_db_fixed, n_pilots=int(n_p),
                               total_power=config.total_power, style=config.pilot_style))
                  for n_p in config.n_pilots_values]
        for experiment, x, pilot_cfg in cells:
            rng = np.random.default_rng(
                np.random.SeedSequence((seed, derive_seed(experiment, float(x)))))
            try:
                per_point = channel_experiment(ds, estimates, pilot_cfg,
                                               config.n_realizations, rng)
            except DlccmError as err:
                table.append(experiment=experiment, x=float(x), repeat=repeat,
                             dataset_seed=seed, method="-", nmse_mean=math.nan,
                             nmse_std=math.nan, status="error", message=str(err))
                continue
            for method, values in per_point.items():
                table.append(experiment=experiment, x=float(x), repeat=repeat,
                             dataset_seed=seed, method=method,
                             nmse_mean=float(np.mean(values)),
                             nmse_std=float(np.std(values, ddof=1)) if len(values) > 1 else 0.0,
                             status="ok", message="")
    return table


MMSE_SUMMARY_COLUMNS = ["experiment", "value", "method", "n",
                        "nmse_mean", "nmse_std"]


def summarize_mmse(table: ResultsTable) -> ResultsTable:
    """Mean and sample standard deviation of the channel NMSE per
    (experiment, x, method) across repeats."""
    summary = ResultsTable(columns=list(MMSE_SUMMARY_COLUMNS))
    seen: list[tuple] = []
    for row in table.rows:
        key = (row["experiment"], row["x"], row["method"])
        if row["status"] == "ok" and key not in seen:
            seen.append(key)
    for experiment, x, method in seen:
        vals = np.array([r["nmse_mean"] for r in table.rows
                         if (r["experiment"], r["x"], r["method"]) == (experiment, x, method)
                         and r["status"] == "ok"])
        summary.append(experiment=experiment, value=x, method=method, n=len(vals),
                       nmse_mean=float(vals.mean()),
                       nmse_std=float(vals.std(ddof=1)) if len(vals) > 1 else 0.0)
    return summary


# ---------------------------------------------------------------------------
# Plot data emission
# ---------------------------------------------------------------------------


def emit_plotdata(summary: ResultsTable, out_dir: str | Path, name: str,
                  x_label: str, metrics: tuple[str, ...] = ("nmse", "cmd", "dm"),
                  log_y: bool = True) -> list[Path]:
    """Write one CSV per metric (x, then mean/std per method) plus a
    plain-text plot description; no rendering is performed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    methods = sorted({row["method"] for row in summary.rows})
    xs = []
    for row in summary.rows:
        if row["value"] not in xs:
            xs.append(row["value"])
    written = []
    for metric in metrics:
        columns = ["x"]
        for method in methods:
            slug = _slugify(method)
            columns += [f"{slug}_mean", f"{slug}_std"]
        table = ResultsTable(columns=columns)
        for x in xs:
            cells = {"x": x}
            for method in methods:
                slug = _slugify(method)
                match = [r for r in summary.rows
                         if r["value"] == x and r["method"] == method]
                cells[f"{slug}_mean"] = match[0][f"{metric}_mean"] if match else math.nan
                cells[f"{slug}_std"] = match[0][f"{metric}_std"] if match else math.nan
            table.append(**cells)
        csv_path = out_dir / f"{name}_{metric}.csv"
        table.write_csv(csv_path)
        desc = [
            f"figure: {name} / {metric}",
            f"x axis: {x_label} (linear)",
            f"y axis: {metric} ({'log' if log_y else 'linear'})",
            f"series: {', '.join(methods)}",
            "columns: x, then <method>_mean and <method>_std per series",
            "error bars: one standard deviation across repeats",
        ]
        txt_path = out_dir / f"{name}_{metric}.txt"
        txt_path.write_text("\n".join(desc) + "\n", encoding="utf-8")
        written += [csv_path, txt_path]
    return written


def _slugify(name: str) -> str:
    out = []
    for ch in name.lower():
        out.append(ch if ch.isalnum() else "_")
    slug = "".join(out)
    while "__" in slug:
        slug = slug.replace("__", "_")
    return slug.strip("_")


def write_manifest(out_dir: str | Path, config_text: str,
                   seeds: list[int]) -> Path:
    """Record config hash, seeds, and library versions next to the results."""
    import scipy

    from . import __version__

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [
        f"config_sha256 = {hashlib.sha256(config_text.encode('utf-8')).hexdigest()}",
        f"seeds = {','.join(str(s) for s in seeds)}",
        f"dlccm_version = {__version__}",
        f"numpy_version = {np.__version__}",
        f"scipy_version = {scipy.__version__}",
        f"python_version = {sys.version.split()[0]}",
    ]
    path = out_dir / "manifest.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
