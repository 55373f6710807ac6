"""Feed-forward size estimator.

A one-hidden-layer sigmoid network maps the monitored indicators
(table rows, buffer miss ratio, active users) to target sizes
(shared pool MB, buffer cache MB). Inputs and targets are min-max scaled
to [0, 1] with bounds taken from the training set; the network is
trained by per-sample backpropagation of the squared error.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

FEATURES = ("table_rows", "miss_ratio", "users")
TARGETS = ("pool_mb", "cache_mb")
CSV_HEADER = FEATURES + TARGETS
DEFAULT_USERS = 8


class DegenerateTrainingSet(ValueError):
    pass


class UntrainedModelError(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


class TrainingDataError(ValueError):
    pass


@dataclass
class NetConfig:
    n_inputs: int = 3
    n_hidden: int = 100
    n_outputs: int = 2
    learning_rate: float = 0.4
    epochs: int = 100
    init_half_range: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for name in ("n_inputs", "n_hidden", "n_outputs", "epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.init_half_range <= 0:
            raise ValueError("init_half_range must be > 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass
class NeuralModel:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    feature_bounds: np.ndarray | None = None  # (p, 2) rows of (min, max)
    target_bounds: np.ndarray | None = None  # (n_outputs, 2)
    seed: int = 0

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.W1.shape[1], self.W1.shape[0], self.W2.shape[0]

    @property
    def trained(self) -> bool:
        return self.feature_bounds is not None and self.target_bounds is not None

    def copy(self) -> NeuralModel:
        return NeuralModel(
            self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy(),
            None if self.feature_bounds is None else self.feature_bounds.copy(),
            None if self.target_bounds is None else self.target_bounds.copy(),
            self.seed,
        )


@dataclass
class TrainingSet:
    features: np.ndarray  # (n, 3): table_rows, miss_ratio, users
    targets: np.ndarray  # (n, 2): pool_mb, cache_mb
    source: str = field(default="<memory>", compare=False)

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=np.float64))
        if len(self.features) != len(self.targets):
            raise TrainingDataError("features and targets differ in length")
        if len(self.features) == 0:
            raise DegenerateTrainingSet("training set is empty")
        if not (np.isfinite(self.features).all() and np.isfinite(self.targets).all()):
            raise TrainingDataError("training set contains non-finite values")

    def __len__(self):
        return len(self.features)


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def init_model(cfg: NetConfig) -> NeuralModel:
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(2)[0])
    a = cfg.init_half_range
    p, h, o = cfg.n_inputs, cfg.n_hidden, cfg.n_outputs
    return NeuralModel(
        W1=rng.uniform(-a, a, (h, p)),
        b1=rng.uniform(-a, a, h),
        W2=rng.uniform(-a, a, (o, h)),
        b2=rng.uniform(-a, a, o),
        seed=cfg.seed,
    )


def column_bounds(values: np.ndarray, strict: bool = False, name: str = "column") -> tuple[float, float]:
    """Min-max bounds of one column.

    A constant column carries no information for the network. With
    ``strict`` it is rejected; otherwise it is given a unit-wide range
    centred on its value so it maps to 0.5.
    """
    lo, hi = float(values.min()), float(values.max())
    if lo < hi:
        return lo, hi
    if strict:
        raise DegenerateTrainingSet(f"{name} is constant ({lo}); min-max scaling is undefined")
    return lo - 0.5, lo + 0.5


def fit_bounds(tset: TrainingSet, strict: bool = False) -> tuple[np.ndarray, np.ndarray]:
    fb = np.array([column_bounds(tset.features[:, j], strict, FEATURES[j] if j < len(FEATURES) else f"feature {j}")
                   for j in range(tset.features.shape[1])])
    tb = np.array([column_bounds(tset.targets[:, j], strict, TARGETS[j] if j < len(TARGETS) else f"target {j}")
                   for j in range(tset.targets.shape[1])])
    return fb, tb


def normalize(x, bounds) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    bounds = np.asarray(bounds, dtype=np.float64)
    lo, hi = bounds[:, 0], bounds[:, 1]
    return np.clip((x - lo) / (hi - lo), 0.0, 1.0)


def denormalize(y, bounds) -> np.ndarray:
    bounds = np.asarray(bounds, dtype=np.float64)
    lo, hi = bounds[:, 0], bounds[:, 1]
    return lo + np.asarray(y, dtype=np.float64) * (hi - lo)


def forward(model: NeuralModel, x) -> np.ndarray:
    """Network output for normalized input(s); works on a vector or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.W1.shape[1]:
        raise ValueError(f"expected {model.W1.shape[1]} inputs, got {x.shape[-1]}")
    h = sigmoid(x @ model.W1.T + model.b1)
    return sigmoid(h @ model.W2.T + model.b2)


def loss(model: NeuralModel, x, t) -> float:
    d = forward(model, x) - t
    return 0.5 * float(d @ d)


def backprop(model: NeuralModel, x, t):
    """Gradients of 0.5*||y - t||^2 for one sample.

    Returns ``(loss, dW1, db1, dW2, db2)``.
    """
    x = np.asarray(x, dtype=np.float64)
    h = sigmoid(model.W1 @ x + model.b1)
    y = sigmoid(model.W2 @ h + model.b2)
    err = y - t
    d2 = err * y * (1.0 - y)
    d1 = (model.W2.T @ d2) * h * (1.0 - h)
    return 0.5 * float(err @ err), np.outer(d1, x), d1, np.outer(d2, h), d2


def _mse(model, X, T) -> float:
    return float(np.mean((forward(model, X) - T) ** 2))


def train(model: NeuralModel, tset: TrainingSet, cfg: NetConfig, strict: bool = False):
    """Fit ``model`` to ``tset`` by stochastic backpropagation.

    Returns ``(trained_model, mse_trace)``; the input model is not modified.
    The trace holds the mean squared error over the normalized set after
    each epoch.
    """
    p, _, o = model.dims
    if tset.features.shape[1] != p or tset.targets.shape[1] != o:
        raise TrainingDataError(
            f"training set is {tset.features.shape[1]}->{tset.targets.shape[1]}, network is {p}->{o}")
    fb, tb = fit_bounds(tset, strict)
    X = normalize(tset.features, fb)
    T = normalize(tset.targets, tb)

    m = model.copy()
    m.feature_bounds, m.target_bounds = fb, tb
    m.seed = cfg.seed
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(2)[1])
    eta = cfg.learning_rate
    trace = []
    for _ in range(cfg.epochs):
        for i in rng.permutation(len(X)):
            _, dW1, db1, dW2, db2 = backprop(m, X[i], T[i])
            m.W1 -= eta * dW1
            m.b1 -= eta * db1
            m.W2 -= eta * dW2
            m.b2 -= eta * db2
        trace.append(_mse(m, X, T))
    return m, trace


def gradient_check(model: NeuralModel, x, t, step: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences."""
    _, *analytic = backprop(model, x, t)
    params = [model.W1, model.b1, model.W2, model.b2]
    worst = 0.0
    for param, grad in zip(params, analytic):
        flat, gflat = param.reshape(-1), grad.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            up = loss(model, x, t)
            flat[k] = orig - step
            down = loss(model, x, t)
            flat[k] = orig
            numeric = (up - down) / (2 * step)
            denom = max(abs(gflat[k]), abs(numeric), 1e-7)
            worst = max(worst, abs(gflat[k] - numeric) / denom)
    return worst


ROUNDING_SLACK = 0.05


def round_up_to_rung(value: float, ladder, slack: float = ROUNDING_SLACK) -> int:
    """Smallest rung >= value; the top rung when value exceeds the ladder.

    A value that overshoots a rung by less than ``slack`` times the gap to
    the next rung stays on that rung. Sigmoid outputs never reach the ends
    of the target range, so without slack the bottom rung is unreachable.
    """
    for i, rung in enumerate(ladder):
        if rung >= value:
            return int(rung)
        if i + 1 < len(ladder) and value - rung <= slack * (ladder[i + 1] - rung):
            return int(rung)
    return int(ladder[-1])


def estimate_raw(model: NeuralModel, features) -> np.ndarray:
    """Denormalized (pool_mb, cache_mb) estimate for raw features."""
    if not model.trained:
        raise UntrainedModelError("model has no normalization bounds; train it first")
    y = forward(model, normalize(features, model.feature_bounds))
    return denormalize(y, model.target_bounds)


def estimate_sizes(model: NeuralModel, snapshot, cache_ladder, pool_ladder) -> tuple[int, int]:
    """Quantized (pool_mb, cache_mb) estimate for a metrics snapshot."""
    feats = [snapshot.table_rows, snapshot.buffer_miss_ratio, snapshot.active_users]
    pool, cache = estimate_raw(model, feats)
    return round_up_to_rung(pool, pool_ladder), round_up_to_rung(cache, cache_ladder)


# -- persistence -----------------------------------------------------------

def model_to_dict(model: NeuralModel) -> dict:
    return {
        "dims": list(model.dims),
        "W1": model.W1.tolist(),
        "b1": model.b1.tolist(),
        "W2": model.W2.tolist(),
        "b2": model.b2.tolist(),
        "feature_bounds": None if model.feature_bounds is None else model.feature_bounds.tolist(),
        "target_bounds": None if model.target_bounds is None else model.target_bounds.tolist(),
        "seed": model.seed,
    }


def save_model(model: NeuralModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


def _array(doc, key, shape, where):
    if key not in doc:
        raise ModelFormatError(f"{where}: missing field '{key}'")
    try:
        arr = np.array(doc[key], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"{where}: field '{key}' is not a numeric array ({exc})") from None
    if arr.shape != shape:
        raise ModelFormatError(f"{where}: field '{key}' has shape {arr.shape}, expected {shape}")
    if not np.isfinite(arr).all():
        raise ModelFormatError(f"{where}: field '{key}' contains non-finite values")
    return arr


def model_from_dict(doc: dict, where: str = "<model>") -> NeuralModel:
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{where}: top level must be an object")
    dims = doc.get("dims")
    if not (isinstance(dims, list) and len(dims) == 3 and all(isinstance(d, int) and d >= 1 for d in dims)):
        raise ModelFormatError(f"{where}: field 'dims' must be three positive integers, got {dims!r}")
    p, h, o = dims
    W1 = _array(doc, "W1", (h, p), where)
    b1 = _array(doc, "b1", (h,), where)
    W2 = _array(doc, "W2", (o, h), where)
    b2 = _array(doc, "b2", (o,), where)
    if doc.get("feature_bounds") is None or doc.get("target_bounds") is None:
        raise UntrainedModelError(f"{where}: missing bounds section; model is untrained")
    fb = _array(doc, "feature_bounds", (p, 2), where)
    tb = _array(doc, "target_bounds", (o, 2), where)
    if (fb[:, 0] >= fb[:, 1]).any() or (tb[:, 0] >= tb[:, 1]).any():
        raise ModelFormatError(f"{where}: bounds need min < max in every dimension")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        raise ModelFormatError(f"{where}: field 'seed' must be an integer")
    return NeuralModel(W1, b1, W2, b2, fb, tb, seed)


def load_model(path) -> NeuralModel:
    path = Path(path)
    text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return model_from_dict(doc, str(path))


# -- training data -----------------------------------------------------------

def read_training_csv(path, default_users: int = DEFAULT_USERS) -> TrainingSet:
    """Load a ``table_rows,miss_ratio,users,pool_mb,cache_mb`` CSV.

    A blank ``users`` field is filled with ``default_users``.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        return _parse_training_rows(fh, str(path), default_users)


def table_one(default_users: int = DEFAULT_USERS) -> TrainingSet:
    """The bundled eight-row sample characterization set."""
    ref = resources.files("dbtune") / "data" / "table1.csv"
    with ref.open("r", newline="") as fh:
        return _parse_training_rows(fh, "table1.csv", default_users)


def _parse_training_rows(fh, where, default_users) -> TrainingSet:
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
        raise TrainingDataError(f"{where}:1: expected header {','.join(CSV_HEADER)}, got {header}")
    feats, targs = [], []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(CSV_HEADER):
            raise TrainingDataError(f"{where}:{line}: expected {len(CSV_HEADER)} fields, got {len(row)}")
        vals = []
        for name, cell in zip(CSV_HEADER, row):
            cell = cell.strip()
            if name == "users" and cell == "":
                vals.append(float(default_users))
                continue
            try:
                v = float(cell)
            except ValueError:
                raise TrainingDataError(f"{where}:{line}: field '{name}' is not a number: {cell!r}") from None
            if not math.isfinite(v):
                raise TrainingDataError(f"{where}:{line}: field '{name}' is not finite")
            vals.append(v)
        feats.append(vals[:3])
        targs.append(vals[3:])
    if not feats:
        raise DegenerateTrainingSet(f"{where}: no data rows")
    return TrainingSet(np.array(feats), np.array(targs), source=where)


def write_training_csv(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([int(r[0]), repr(float(r[1])), int(r[2]), int(r[3]), int(r[4])])
