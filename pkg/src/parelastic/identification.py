"""Least-squares identification of the coupling stiffness parameter.

Every coupling family's torque is linear in its stiffness k, so a single
scalar k is identified by ordinary least squares through the origin against
the unit-stiffness regressor phi(q): the coupling torque the family predicts
at k = 1 on the observed coordinate.  The fit reports R^2 about the torque
mean, which makes goodness-of-fit comparable across families and lets the
family with the highest R^2 be selected as the best structural model.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .coupling import COORDINATE_FAMILIES, FAMILIES, CouplingSpec, coupling_force
from .errors import DegenerateDatasetError

# Regressors/torques below this squared-sum are indistinguishable from the
# floating-point noise of a structurally zero response.
_TINY = 1e-24


@dataclass(frozen=True)
class IdSample:
    """One quasi-static observation: configuration, torque, constraint mask."""

    q: np.ndarray
    tau_measured: float
    held_mask: np.ndarray | None = None

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        if not np.all(np.isfinite(q)) or not np.isfinite(self.tau_measured):
            raise ValueError("sample entries must be finite")
        if np.any(np.abs(q) > np.pi):
            raise ValueError("sample configuration must lie within +-pi")
        object.__setattr__(self, "q", q)
        if self.held_mask is not None:
            mask = np.atleast_1d(np.asarray(self.held_mask, dtype=bool))
            if mask.shape != q.shape:
                raise ValueError("held_mask must match the configuration shape")
            object.__setattr__(self, "held_mask", mask)


@dataclass(frozen=True)
class FitResult:
    """Fitted stiffness, coefficient of determination, and residuals."""

    k_hat: float
    r_squared: float
    residuals: np.ndarray
    family: str

    @property
    def flagged_negative(self):
        """A negative fitted stiffness signals a structurally wrong model."""
        return self.k_hat < 0.0


def _coupling_template(model):
    if not model.couplings:
        raise ValueError("model has no coupling to identify")
    return model.couplings[0]


def _coordinate_of_segment(model, segment):
    chain, link = segment
    return model.chain_slices[chain].start + link


def _segment_of_coordinate(model, coordinate):
    chain, link = model.link_of(coordinate)
    return (chain, link)


def family_spec(family, model, k=1.0):
    """A coupling spec of the requested family over the model's coupled pair.

    The pair is taken from the model's first coupling; when the family needs
    the other addressing style (coordinates vs segments) the pair is mapped
    through the chain layout, so e.g. linear data can be re-fit by the
    geometric families over the same physical connection.
    """
    template = _coupling_template(model)
    if family in COORDINATE_FAMILIES:
        pair = template.coordinate_pair
        if pair is None:
            pair = tuple(
                _coordinate_of_segment(model, seg) for seg in template.segment_pair
            )
        return CouplingSpec(family=family, k=k, coordinate_pair=pair)
    segs = template.segment_pair
    if segs is None:
        segs = tuple(
            _segment_of_coordinate(model, c) for c in template.coordinate_pair
        )
    return CouplingSpec(family=family, k=k, segment_pair=segs)


def observed_coordinate(model, coordinate=None):
    """Global index of the coordinate whose torque the dataset reports.

    Defaults to the first coordinate of the model's coupled pair; pass an
    explicit index when that coordinate carries no coupling torque for the
    family of interest (e.g. the geometric families on a same-chain pair
    respond only at the distal coordinate).
    """
    if coordinate is not None:
        return int(coordinate)
    template = _coupling_template(model)
    if template.coordinate_pair is not None:
        return template.coordinate_pair[0]
    return _coordinate_of_segment(model, template.segment_pair[0])


def regressor(family, model, q, coordinate=None):
    """Unit-stiffness coupling torque phi(q) on the observed coordinate."""
    spec = family_spec(family, model, k=1.0)
    coord = observed_coordinate(model, coordinate)
    return float(coupling_force(spec, model, q)[coord])


def fit_stiffness(family, model, dataset, coordinate=None):
    """Single-parameter OLS through the origin: tau ~ k * phi(q)."""
    if len(dataset) < 2:
        raise DegenerateDatasetError("need at least two samples to fit")
    phi = np.array([regressor(family, model, s.q, coordinate) for s in dataset])
    tau = np.array([s.tau_measured for s in dataset])
    denom = float(phi @ phi)
    if denom < _TINY:
        raise DegenerateDatasetError(
            f"all {family} regressors vanish on this dataset"
        )
    k_hat = float(phi @ tau) / denom
    residuals = tau - k_hat * phi
    ss_res = float(residuals @ residuals)
    centered = tau - tau.mean()
    ss_tot = float(centered @ centered)
    if ss_tot < _TINY:
        raise DegenerateDatasetError("torque column is constant; R^2 undefined")
    return FitResult(
        k_hat=k_hat,
        r_squared=1.0 - ss_res / ss_tot,
        residuals=residuals,
        family=family,
    )


def rank_families(model, dataset, families=FAMILIES, coordinate=None):
    """Fit every family and return results sorted by descending R^2."""
    results = [fit_stiffness(f, model, dataset, coordinate) for f in families]
    return sorted(results, key=lambda r: r.r_squared, reverse=True)


def generate_synthetic_dataset(
    model, family, k_true, angle_grid, noise_std=0.0, seed=0, coordinate=None
):
    """Quasi-static samples over a deflection grid with optional torque noise.

    Each grid angle is applied to the observed coordinate of the model's
    coupled pair (the partner coordinate stays at zero), mimicking a test rig
    that deflects one side of the connection and logs the holding torque
    tau = k_true * phi(q) + gaussian noise.  Deterministic for a given seed.
    """
    if noise_std < 0:
        raise ValueError("noise stddev must be >= 0")
    rng = np.random.default_rng(seed)
    coord = observed_coordinate(model, coordinate)
    held = np.ones(model.n, dtype=bool)
    samples = []
    for delta in np.asarray(angle_grid, dtype=float):
        q = np.zeros(model.n)
        q[coord] = delta
        tau = k_true * regressor(family, model, q, coord)
        if noise_std > 0:
            tau += rng.normal(0.0, noise_std)
        samples.append(IdSample(q=q, tau_measured=tau, held_mask=held))
    return samples


def save_dataset(dataset, path):
    """Write samples as CSV with header q_1..q_n,tau,held_1..held_n."""
    n = dataset[0].q.shape[0]
    header = (
        [f"q_{i + 1}" for i in range(n)]
        + ["tau"]
        + [f"held_{i + 1}" for i in range(n)]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for s in dataset:
            mask = s.held_mask if s.held_mask is not None else np.ones(n, bool)
            writer.writerow(
                [f"{v:.17g}" for v in s.q]
                + [f"{s.tau_measured:.17g}"]
                + [str(int(b)) for b in mask]
            )


def load_dataset(path):
    """Inverse of :func:`save_dataset`."""
    samples = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n = header.index("tau")
        for row in reader:
            q = np.array([float(v) for v in row[:n]])
            tau = float(row[n])
            held = np.array([bool(int(v)) for v in row[n + 1 : n + 1 + n]])
            samples.append(IdSample(q=q, tau_measured=tau, held_mask=held))
    return samples


class StiffnessRegressor(BaseEstimator, RegressorMixin):
    """Scikit-learn wrapper around the through-origin stiffness fit.

    X holds configurations row-wise, y the measured torques on the observed
    coordinate.  ``predict`` returns k_hat * phi(q) and the inherited
    ``score`` is the usual mean-centered R^2, matching :func:`fit_stiffness`.
    """

    def __init__(self, family="linear", model=None, coordinate=None):
        self.family = family
        self.model = model
        self.coordinate = coordinate

    def fit(self, X, y):
        if self.model is None:
            raise ValueError("StiffnessRegressor requires a robot model")
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        dataset = [
            IdSample(q=X[i], tau_measured=float(y[i])) for i in range(X.shape[0])
        ]
        result = fit_stiffness(self.family, self.model, dataset, self.coordinate)
        self.k_hat_ = result.k_hat
        self.r_squared_ = result.r_squared
        self.result_ = result
        return self

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        return np.array(
            [
                self.k_hat_ * regressor(self.family, self.model, q, self.coordinate)
                for q in X
            ]
        )
