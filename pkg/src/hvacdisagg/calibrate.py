"""Least-squares calibration of the disaggregation coefficients.

Three small linear models share one fitting core: the VAV-side cooling
balance (c1, c2, c3), the AHU-side cooling balance (c4, c5), and the
heating balance (c6, c7, c8).  Each is ordinary least squares with an
intercept, solved through the normal equations.  The problems are tiny
(at most three coefficients), so the Gram matrix route is both faster
and easier to diagnose than a general factorization.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .energy import DEFAULT_CONSTANTS, PhysicalConstants
from .errors import ConfigError, FitError, RankDeficiencyError
from .ingest import format_timestamp, parse_timestamp
from .timeseries import rmse

# Fewest window rows we will fit on: one day of 15-minute samples.
MIN_FIT_ROWS = 96

# Relative eigenvalue cutoff for calling the scaled Gram matrix singular.
RANK_TOL = 1e-10

MODEL_FORMAT = 1

COEFFICIENT_NAMES = ("c1", "c2", "c3", "c4", "c5", "c6", "c7", "c8")

# Coefficients that are physically gains and should come out positive.
_SIGN_CHECKED = {"c1", "c2", "c4", "c6", "c7"}


def fit_linear(features: np.ndarray, target: np.ndarray,
               column_names: tuple[str, ...] | None = None) -> np.ndarray:
    """Least squares fit of target ~ features + intercept.

    features is (n, p); returns p+1 coefficients with the intercept last.
    p may be zero, in which case the fit is just the target mean.  Raises
    RankDeficiencyError naming the offending column when the scaled Gram
    matrix is singular to within RANK_TOL.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(target, dtype=float)
    if x.ndim != 2:
        raise FitError("feature matrix must be 2-d")
    n, p = x.shape
    if y.shape != (n,):
        raise FitError("feature and target row counts differ")
    if np.isnan(x).any() or np.isnan(y).any():
        raise FitError("fit inputs contain gaps; drop incomplete rows first")
    if n < p + 2:
        raise FitError(f"need at least {p + 2} rows to fit {p + 1} coefficients, got {n}")
    if column_names is None:
        column_names = tuple(f"x{i + 1}" for i in range(p))

    design = np.hstack([x, np.ones((n, 1))])
    names = tuple(column_names) + ("intercept",)

    # Scale columns to unit RMS so the rank test is dimensionless.
    scale = np.sqrt(np.mean(design * design, axis=0))
    scale[scale == 0.0] = 1.0
    scaled = design / scale

    gram = scaled.T @ scaled
    eigvals, eigvecs = np.linalg.eigh(gram)
    if eigvals[0] <= RANK_TOL * eigvals[-1]:
        # The null eigenvector's dominant component points at the culprit.
        culprit = int(np.argmax(np.abs(eigvecs[:, 0])))
        raise RankDeficiencyError(
            f"features are collinear or constant: column '{names[culprit]}' "
            "adds no independent information", column=names[culprit])

    chol = np.linalg.cholesky(gram)
    rhs = scaled.T @ y
    half = scipy.linalg.solve_triangular(chol, rhs, lower=True)
    beta = scipy.linalg.solve_triangular(chol.T, half, lower=False)
    return beta / scale


@dataclass(frozen=True)
class SubModelFit:
    """One fitted sub-model plus its training diagnostics."""

    name: str
    coefficient_names: tuple[str, ...]
    coefficients: tuple[float, ...]
    n_train: int
    train_rmse: float
    baseline_train_rmse: float
    train_target_mean: float
    warnings: tuple[str, ...] = ()
    n_test: int | None = None
    test_rmse: float | None = None
    baseline_test_rmse: float | None = None
    improvement_pct: float | None = None

    def coefficient(self, name: str) -> float:
        return self.coefficients[self.coefficient_names.index(name)]


def _window_mask(data, window):
    ts = data.timestamps()
    if window is None:
        return np.ones(data.n_rows, dtype=bool)
    start, end = window
    return (ts >= start) & (ts < end)


def _fit_submodel(name: str, columns: list[tuple[str, np.ndarray]],
                  target: np.ndarray, mask: np.ndarray) -> SubModelFit:
    """Shared drop/fit/diagnose path for the three balance fits."""
    keep = mask & ~np.isnan(target)
    for _, col in columns:
        keep &= ~np.isnan(col)
    n = int(keep.sum())
    if n < MIN_FIT_ROWS:
        raise FitError(
            f"{name}: insufficient overlapping samples ({n} rows, need {MIN_FIT_ROWS})")

    y = target[keep]
    warnings: list[str] = []
    active: list[tuple[str, np.ndarray]] = []
    dropped: list[str] = []
    for cname, col in columns:
        if np.all(col[keep] == 0.0):
            dropped.append(cname)
            warnings.append(f"{name}: feature {cname} is identically zero, coefficient set to 0")
        else:
            active.append((cname, col[keep]))

    if active:
        x = np.column_stack([col for _, col in active])
        beta = fit_linear(x, y, tuple(cname for cname, _ in active))
    else:
        beta = np.array([float(np.mean(y))])

    by_name = dict(zip([cname for cname, _ in active], beta[:-1]))
    intercept = float(beta[-1])
    coeff_names = tuple(cname for cname, _ in columns) + (f"{name}.intercept",)
    coeffs = tuple(float(by_name.get(cname, 0.0)) for cname, _ in columns) + (intercept,)

    for cname, value in zip(coeff_names[:-1], coeffs[:-1]):
        if cname in _SIGN_CHECKED and value < 0.0 and cname not in dropped:
            warnings.append(
                f"{name}: coefficient {cname} fitted negative ({value:.6g}); "
                "check sensor mapping and mode filtering")

    if active:
        pred = x @ beta[:-1] + intercept
    else:
        pred = np.full(n, intercept)
    mean = float(np.mean(y))
    return SubModelFit(
        name=name,
        coefficient_names=coeff_names,
        coefficients=coeffs,
        n_train=n,
        train_rmse=rmse(pred, y),
        baseline_train_rmse=rmse(np.full(n, mean), y),
        train_target_mean=mean,
        warnings=tuple(warnings),
    )


def fit_cooling_vav(data, window=None,
                    constants: PhysicalConstants = DEFAULT_CONSTANTS) -> SubModelFit:
    """Fit the cooling meter against summed VAV cooling and economizer terms.

    Uses every complete row in the window; the VAV-side balance holds in
    either plant mode because both terms go to their actual values rather
    than a mode-specific approximation.
    """
    mask = _window_mask(data, window)
    return _fit_submodel(
        "cooling_vav",
        [("c1", data.sum_vav_cooling(constants.air_power_k)),
         ("c2", data.sum_economizer(constants.air_power_k))],
        data.cooling_meter,
        mask,
    )


def fit_cooling_ahu(data, window=None,
                    constants: PhysicalConstants = DEFAULT_CONSTANTS) -> SubModelFit:
    """Fit the cooling meter against summed AHU coil cooling power.

    Restricted to rows where every AHU is cooling or idle; coil power as
    flow times mixed-minus-supply only measures the cooling plant there.
    """
    mask = _window_mask(data, window) & data.cooling_rows(constants.mode_deadband_f)
    if not mask.any():
        raise FitError("cooling_ahu: insufficient samples (no cooling-mode rows in window)")
    return _fit_submodel(
        "cooling_ahu",
        [("c4", data.sum_ahu_cooling(constants.air_power_k, constants.mode_deadband_f))],
        data.cooling_meter,
        mask,
    )


def fit_heating(data, window=None,
                constants: PhysicalConstants = DEFAULT_CONSTANTS) -> SubModelFit:
    """Fit the heating meter against AHU heating coil and VAV reheat power.

    Restricted to rows where every AHU is heating or idle.  Buildings with
    no reheat valves (or no hot water temperature point) get a
    two-coefficient fit and c7 stays at zero.
    """
    mask = _window_mask(data, window) & data.heating_rows(constants.mode_deadband_f)
    if not mask.any():
        raise FitError("heating: insufficient samples (no heating-mode rows in window)")
    if data.heating_meter is None:
        raise FitError("heating: building has no heating meter series")
    columns = [("c6", data.sum_ahu_heating(constants.air_power_k, constants.mode_deadband_f))]
    reheat = data.sum_vav_heating(constants.air_power_k)
    if reheat is not None:
        columns.append(("c7", reheat))
    return _fit_submodel("heating", columns, data.heating_meter, mask)


@dataclass(frozen=True)
class CalibratedModel:
    """Complete coefficient set with provenance-free fit diagnostics."""

    coefficients: dict[str, float]
    constants: PhysicalConstants
    interval_s: int
    train_window: tuple[int, int]
    test_window: tuple[int, int] | None
    submodels: dict[str, SubModelFit]
    reheat_fitted: bool
    warnings: tuple[str, ...] = field(default=())

    def __getitem__(self, name: str) -> float:
        return self.coefficients[name]


def _collect(vav: SubModelFit, ahu: SubModelFit, heat: SubModelFit | None) -> dict[str, float]:
    coeffs = {
        "c1": vav.coefficient("c1"),
        "c2": vav.coefficient("c2"),
        "c3": vav.coefficients[-1],
        "c4": ahu.coefficient("c4"),
        "c5": ahu.coefficients[-1],
        "c6": 0.0,
        "c7": 0.0,
        "c8": 0.0,
    }
    if heat is not None:
        coeffs["c6"] = heat.coefficient("c6")
        if "c7" in heat.coefficient_names:
            coeffs["c7"] = heat.coefficient("c7")
        coeffs["c8"] = heat.coefficients[-1]
    return coeffs


def fit_model(data, split_fraction: float = 0.7,
              constants: PhysicalConstants = DEFAULT_CONSTANTS) -> CalibratedModel:
    """Fit all sub-models on a chronological head split, evaluate on the tail."""
    if not 0.0 < split_fraction <= 1.0:
        raise ConfigError(f"split fraction must be in (0, 1], got {split_fraction}")
    n_train = int(round(data.n_rows * split_fraction))
    n_train = max(1, min(data.n_rows, n_train))
    split_ts = data.start + n_train * data.interval_s
    train_window = (data.start, split_ts)
    test_window = (split_ts, data.end) if split_ts < data.end else None

    vav = fit_cooling_vav(data, train_window, constants)
    ahu = fit_cooling_ahu(data, train_window, constants)
    heat = None
    heat_warnings: tuple[str, ...] = ()
    if data.heating_meter is not None:
        heat = fit_heating(data, train_window, constants)
    else:
        heat_warnings = ("no heating meter bound; heating coefficients left at zero",)

    submodels = {"cooling_vav": vav, "cooling_ahu": ahu}
    if heat is not None:
        submodels["heating"] = heat

    model = CalibratedModel(
        coefficients=_collect(vav, ahu, heat),
        constants=constants,
        interval_s=data.interval_s,
        train_window=train_window,
        test_window=test_window,
        submodels=submodels,
        reheat_fitted=heat is not None and "c7" in heat.coefficient_names,
        warnings=tuple(w for sub in submodels.values() for w in sub.warnings) + heat_warnings,
    )
    if test_window is not None:
        model = evaluate(model, data, test_window)
    return model


def predict_cooling_vav(model: CalibratedModel, data) -> np.ndarray:
    k = model.constants.air_power_k
    return (model["c1"] * data.sum_vav_cooling(k)
            + model["c2"] * data.sum_economizer(k) + model["c3"])


def predict_cooling_ahu(model: CalibratedModel, data) -> np.ndarray:
    return model["c4"] * data.sum_ahu_cooling(model.constants.air_power_k, model.constants.mode_deadband_f) + model["c5"]


def predict_heating(model: CalibratedModel, data) -> np.ndarray:
    pred = model["c6"] * data.sum_ahu_heating(model.constants.air_power_k, model.constants.mode_deadband_f) + model["c8"]
    reheat = data.sum_vav_heating(model.constants.air_power_k)
    if reheat is not None:
        pred = pred + model["c7"] * reheat
    return pred


def _evaluate_sub(sub: SubModelFit, pred: np.ndarray, target: np.ndarray,
                  mask: np.ndarray) -> SubModelFit:
    keep = mask & ~np.isnan(target) & ~np.isnan(pred)
    n = int(keep.sum())
    if n == 0:
        return sub
    y = target[keep]
    test_rmse = rmse(pred[keep], y)
    baseline = rmse(np.full(n, sub.train_target_mean), y)
    if baseline > 1e-12 * max(1.0, abs(sub.train_target_mean)):
        improvement = 100.0 * (1.0 - test_rmse / baseline)
    else:
        # Constant target: the mean is already perfect, no improvement defined.
        improvement = None
    return dataclasses.replace(
        sub, n_test=n, test_rmse=test_rmse,
        baseline_test_rmse=baseline, improvement_pct=improvement)


def evaluate(model: CalibratedModel, data, window) -> CalibratedModel:
    """Score each sub-model on held-out rows against the train-mean baseline.

    Returns a new model with test diagnostics filled in.
    """
    mask = _window_mask(data, window)
    subs = dict(model.submodels)
    subs["cooling_vav"] = _evaluate_sub(
        subs["cooling_vav"], predict_cooling_vav(model, data),
        data.cooling_meter, mask)
    subs["cooling_ahu"] = _evaluate_sub(
        subs["cooling_ahu"], predict_cooling_ahu(model, data),
        data.cooling_meter, mask & data.cooling_rows(model.constants.mode_deadband_f))
    if "heating" in subs and data.heating_meter is not None:
        subs["heating"] = _evaluate_sub(
            subs["heating"], predict_heating(model, data),
            data.heating_meter, mask & data.heating_rows(model.constants.mode_deadband_f))
    return dataclasses.replace(model, submodels=subs, test_window=window)


def _format_float(value: float) -> str:
    return f"{value:.12g}"


def save_model(model: CalibratedModel, path: str) -> None:
    cp = configparser.ConfigParser(interpolation=None)
    cp["model"] = {
        "format": str(MODEL_FORMAT),
        "air_power_k": _format_float(model.constants.air_power_k),
        "mode_deadband_f": _format_float(model.constants.mode_deadband_f),
        "interval_s": str(model.interval_s),
        "train_start": format_timestamp(model.train_window[0]),
        "train_end": format_timestamp(model.train_window[1]),
        "reheat_fitted": str(model.reheat_fitted).lower(),
    }
    if model.test_window is not None:
        cp["model"]["test_start"] = format_timestamp(model.test_window[0])
        cp["model"]["test_end"] = format_timestamp(model.test_window[1])
    cp["coefficients"] = {name: _format_float(model.coefficients[name])
                          for name in COEFFICIENT_NAMES}
    for name, sub in model.submodels.items():
        section = f"diagnostics {name}"
        cp[section] = {
            "n_train": str(sub.n_train),
            "train_rmse": _format_float(sub.train_rmse),
            "baseline_train_rmse": _format_float(sub.baseline_train_rmse),
            "train_target_mean": _format_float(sub.train_target_mean),
        }
        if sub.n_test is not None:
            cp[section]["n_test"] = str(sub.n_test)
            cp[section]["test_rmse"] = _format_float(sub.test_rmse)
            cp[section]["baseline_test_rmse"] = _format_float(sub.baseline_test_rmse)
            cp[section]["improvement_pct"] = (
                "n/a" if sub.improvement_pct is None
                else _format_float(sub.improvement_pct))
        if sub.warnings:
            cp[section]["warnings"] = " ; ".join(sub.warnings)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        cp.write(fh)


def _read_sub(cp: configparser.ConfigParser, name: str,
              coefficient_names: tuple[str, ...],
              coefficients: tuple[float, ...]) -> SubModelFit:
    section = f"diagnostics {name}"
    get = cp[section]
    improvement: float | None = None
    n_test = get.getint("n_test", fallback=None)
    if n_test is not None and get.get("improvement_pct") != "n/a":
        improvement = get.getfloat("improvement_pct")
    warnings = tuple(w.strip() for w in get.get("warnings", "").split(" ; ") if w.strip())
    return SubModelFit(
        name=name,
        coefficient_names=coefficient_names,
        coefficients=coefficients,
        n_train=get.getint("n_train"),
        train_rmse=get.getfloat("train_rmse"),
        baseline_train_rmse=get.getfloat("baseline_train_rmse"),
        train_target_mean=get.getfloat("train_target_mean"),
        warnings=warnings,
        n_test=n_test,
        test_rmse=get.getfloat("test_rmse", fallback=None),
        baseline_test_rmse=get.getfloat("baseline_test_rmse", fallback=None),
        improvement_pct=improvement,
    )


def load_model(path: str) -> CalibratedModel:
    cp = configparser.ConfigParser(interpolation=None)
    with open(path, encoding="utf-8") as fh:
        try:
            cp.read_file(fh, source=path)
        except configparser.Error as exc:
            raise ConfigError(f"bad model file: {exc}") from exc
    if not cp.has_section("model") or not cp.has_section("coefficients"):
        raise ConfigError(f"bad model file: {path} missing [model] or [coefficients]")
    if cp["model"].getint("format") != MODEL_FORMAT:
        raise ConfigError(f"unsupported model format {cp['model'].get('format')}")
    try:
        coefficients = {name: cp["coefficients"].getfloat(name)
                        for name in COEFFICIENT_NAMES}
    except (ValueError, configparser.Error) as exc:
        raise ConfigError(f"bad model file: {exc}") from exc

    constants = PhysicalConstants(
        air_power_k=cp["model"].getfloat("air_power_k"),
        mode_deadband_f=cp["model"].getfloat("mode_deadband_f"),
    )
    train_window = (parse_timestamp(cp["model"]["train_start"]),
                    parse_timestamp(cp["model"]["train_end"]))
    test_window = None
    if cp.has_option("model", "test_start"):
        test_window = (parse_timestamp(cp["model"]["test_start"]),
                       parse_timestamp(cp["model"]["test_end"]))
    reheat_fitted = cp["model"].getboolean("reheat_fitted")

    submodels: dict[str, SubModelFit] = {}
    for section in cp.sections():
        if not section.startswith("diagnostics "):
            continue
        name = section.split(" ", 1)[1]
        if name == "cooling_vav":
            cnames = ("c1", "c2", "cooling_vav.intercept")
            coeffs = (coefficients["c1"], coefficients["c2"], coefficients["c3"])
        elif name == "cooling_ahu":
            cnames = ("c4", "cooling_ahu.intercept")
            coeffs = (coefficients["c4"], coefficients["c5"])
        elif name == "heating":
            if reheat_fitted:
                cnames = ("c6", "c7", "heating.intercept")
                coeffs = (coefficients["c6"], coefficients["c7"], coefficients["c8"])
            else:
                cnames = ("c6", "heating.intercept")
                coeffs = (coefficients["c6"], coefficients["c8"])
        else:
            raise ConfigError(f"bad model file: unknown diagnostics section '{name}'")
        submodels[name] = _read_sub(cp, name, cnames, coeffs)

    interval_s = cp["model"].getint("interval_s")
    warnings = tuple(w for sub in submodels.values() for w in sub.warnings)
    return CalibratedModel(
        coefficients=coefficients,
        constants=constants,
        interval_s=interval_s,
        train_window=train_window,
        test_window=test_window,
        submodels=submodels,
        reheat_fitted=reheat_fitted,
        warnings=warnings,
    )
