"""Tan-sigmoid feed-forward regressor mapping acceleration windows to IRI.

One input row is a window of ``window_n`` consecutive per-second acceleration
features ending at the second being predicted.  Each unit computes an affine
sum ``a = b + sum_i P_i * W_i`` and passes it through :func:`tansig`.  With
``hidden_units=0`` the whole network is that single unit; otherwise a hidden
layer of tansig units feeds a linear output unit.

Training is plain full-batch gradient descent on the mean squared error in
normalized units, so a fit is a pure function of the data and the
hyperparameters.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

MODEL_FORMAT = "roadrough-tansig-model"
MODEL_FORMAT_VERSION = 1

INPUT_RANGE = (-1.0, 1.0)
TARGET_RANGE = (-0.9, 0.9)


class DivergenceError(ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss!r})")
        self.epoch = epoch
        self.loss = loss


class InsufficientDataError(ValueError):
    pass


def tansig(a):
    """Tan-sigmoid transfer ``2 / (1 + exp(-2a)) - 1``.

    Evaluated as ``-expm1(-2|a|) / (2 + expm1(-2|a|))`` with the sign of ``a``
    restored afterwards, which is the same expression rearranged so it never
    overflows and keeps full relative precision near zero.
    """
    arr = np.asarray(a, dtype=float)
    # beyond |a| = 40 the result is exactly +-1 in double precision anyway
    em = np.expm1(-2.0 * np.minimum(np.abs(arr), 40.0))
    out = np.copysign(-em / (2.0 + em), arr)
    if out.ndim == 0:
        return float(out)
    return out


def _minmax_affine(lo, hi, target):
    """Return (scale, offset) mapping [lo, hi] onto ``target`` via x*scale + offset."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    t_lo, t_hi = target
    span = hi - lo
    flat = span == 0
    scale = np.where(flat, 1.0, (t_hi - t_lo) / np.where(flat, 1.0, span))
    # a constant channel maps onto the middle of the target range
    mid = 0.5 * (t_lo + t_hi)
    offset = np.where(flat, mid - lo, t_lo - lo * scale)
    return scale, offset


class TansigRegressor(RegressorMixin, BaseEstimator):
    """Window-to-IRI regressor built from tan-sigmoid units.

    Parameters
    ----------
    hidden_units : int, default=8
        Size of the tansig hidden layer.  ``0`` gives a single tansig neuron
        acting directly on the window.
    learning_rate : float, default=0.2
        Step size of full-batch gradient descent.
    epochs : int, default=10000
        Number of gradient steps.
    seed : int, default=42
        Seed for ``numpy.random.default_rng`` (PCG64).  Parameters are drawn
        from U[-0.5, 0.5] layer by layer, weights (row-major) before biases.

    Attributes
    ----------
    coefs_ : list of ndarray
        Weight matrices, shape ``(units_out, units_in)`` per layer.
    intercepts_ : list of ndarray
        Bias vectors per layer.
    input_scale_, input_offset_ : ndarray of shape (n_features_in_,)
        ``x_norm = x * scale + offset`` maps the training range onto [-1, 1].
    output_scale_, output_offset_ : float
        Same mapping for the target, onto [-0.9, 0.9].
    loss_curve_ : list of float
        Training loss at the start of each epoch, in normalized units.
    final_loss_ : float
        Loss after the last update.
    """

    def __init__(self, hidden_units=8, learning_rate=0.2, epochs=10000, seed=42):
        self.hidden_units = hidden_units
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.seed = seed

    # -- construction -----------------------------------------------------

    @classmethod
    def from_params(
        cls,
        coefs,
        intercepts,
        input_norm=None,
        output_norm=(1.0, 0.0),
        **hyper,
    ) -> "TansigRegressor":
        """Build a fitted model from explicit parameters.

        ``input_norm`` and ``output_norm`` are ``(scale, offset)`` pairs;
        the default is the identity mapping.
        """
        coefs = [np.array(c, dtype=float, ndmin=2) for c in coefs]
        intercepts = [np.array(b, dtype=float, ndmin=1) for b in intercepts]
        if len(coefs) not in (1, 2) or len(coefs) != len(intercepts):
            raise ValueError("expected one or two layers of parameters")
        n_in = coefs[0].shape[1]
        hidden = 0 if len(coefs) == 1 else coefs[0].shape[0]
        model = cls(hidden_units=hidden, **hyper)
        model.coefs_ = coefs
        model.intercepts_ = intercepts
        if input_norm is None:
            input_norm = (np.ones(n_in), np.zeros(n_in))
        model.input_scale_ = np.broadcast_to(np.asarray(input_norm[0], float), (n_in,)).copy()
        model.input_offset_ = np.broadcast_to(np.asarray(input_norm[1], float), (n_in,)).copy()
        model.output_scale_ = float(output_norm[0])
        model.output_offset_ = float(output_norm[1])
        model.n_features_in_ = n_in
        model.loss_curve_ = []
        model.final_loss_ = float("nan")
        model._check_shapes()
        return model

    def _check_shapes(self):
        n_in = self.n_features_in_
        if self.hidden_units == 0:
            expect = [((1, n_in), (1,))]
        else:
            h = self.hidden_units
            expect = [((h, n_in), (h,)), ((1, h), (1,))]
        got = [(w.shape, b.shape) for w, b in zip(self.coefs_, self.intercepts_)]
        if got != expect:
            raise ValueError(f"parameter shapes {got} inconsistent with {expect}")
        for p in self._params():
            if not np.all(np.isfinite(p)):
                raise ValueError("model parameters must be finite")

    def _init_params(self, n_in: int):
        rng = np.random.default_rng(self.seed)
        if self.hidden_units == 0:
            sizes = [(1, n_in)]
        else:
            sizes = [(self.hidden_units, n_in), (1, self.hidden_units)]
        self.coefs_, self.intercepts_ = [], []
        for shape in sizes:
            self.coefs_.append(rng.uniform(-0.5, 0.5, size=shape))
            self.intercepts_.append(rng.uniform(-0.5, 0.5, size=shape[0]))

    def _params(self):
        out = []
        for w, b in zip(self.coefs_, self.intercepts_):
            out.extend((w, b))
        return out

    # -- normalization ----------------------------------------------------

    def normalize_inputs(self, X):
        return np.asarray(X, dtype=float) * self.input_scale_ + self.input_offset_

    def normalize_target(self, y):
        return np.asarray(y, dtype=float) * self.output_scale_ + self.output_offset_

    def denormalize_target(self, y_norm):
        return (np.asarray(y_norm, dtype=float) - self.output_offset_) / self.output_scale_

    # -- core math --------------------------------------------------------

    def _forward_norm(self, Xn):
        if self.hidden_units == 0:
            a = Xn @ self.coefs_[0][0] + self.intercepts_[0][0]
            return tansig(a), None
        a1 = Xn @ self.coefs_[0].T + self.intercepts_[0]
        h = tansig(a1)
        return h @ self.coefs_[1][0] + self.intercepts_[1][0], h

    def _loss_grad(self, Xn, yn):
        """Mean squared error and its gradient w.r.t. each parameter array."""
        m = Xn.shape[0]
        out, h = self._forward_norm(Xn)
        r = out - yn
        loss = float(np.mean(r * r))
        d_out = (2.0 / m) * r
        if self.hidden_units == 0:
            d_a = d_out * (1.0 - out * out)
            grads = [(d_a @ Xn)[None, :], np.array([d_a.sum()])]
        else:
            w2 = self.coefs_[1][0]
            d_w2 = (h.T @ d_out)[None, :]
            d_b2 = np.array([d_out.sum()])
            d_a1 = np.outer(d_out, w2) * (1.0 - h * h)
            grads = [d_a1.T @ Xn, d_a1.sum(axis=0), d_w2, d_b2]
        return loss, grads

    # -- estimator API ----------------------------------------------------

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.hidden_units < 0:
            raise ValueError("hidden_units must be >= 0")
        self.n_features_in_ = X.shape[1]
        self.input_scale_, self.input_offset_ = _minmax_affine(
            X.min(axis=0), X.max(axis=0), INPUT_RANGE
        )
        o_scale, o_offset = _minmax_affine(y.min(), y.max(), TARGET_RANGE)
        self.output_scale_, self.output_offset_ = float(o_scale), float(o_offset)
        Xn = self.normalize_inputs(X)
        yn = self.normalize_target(y)

        self._init_params(X.shape[1])
        params = self._params()
        curve = []
        with np.errstate(over="ignore", invalid="ignore"):
            for epoch in range(self.epochs):
                loss, grads = self._loss_grad(Xn, yn)
                if not np.isfinite(loss):
                    raise DivergenceError(epoch, loss)
                curve.append(loss)
                for p, g in zip(params, grads):
                    p -= self.learning_rate * g
            final = self._loss_grad(Xn, yn)[0]
        if not np.isfinite(final):
            raise DivergenceError(self.epochs, final)
        self.loss_curve_ = curve
        self.final_loss_ = final
        return self

    def decision_function_norm(self, X):
        """Network output in normalized target units."""
        check_is_fitted(self, "coefs_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"window length {X.shape[1]} does not match window_n={self.n_features_in_}"
            )
        return self._forward_norm(self.normalize_inputs(X))[0]

    def predict(self, X):
        return self.denormalize_target(self.decision_function_norm(X))

    @property
    def window_n(self) -> int:
        return self.n_features_in_

    # -- persistence ------------------------------------------------------

    def to_dict(self, extra: dict | None = None) -> dict:
        check_is_fitted(self, "coefs_")
        doc = {
            "format": MODEL_FORMAT,
            "format_version": MODEL_FORMAT_VERSION,
            "window_n": int(self.n_features_in_),
            "hidden_units": int(self.hidden_units),
            "seed": int(self.seed),
            "learning_rate": float(self.learning_rate),
            "epochs": int(self.epochs),
            "layers": [
                {"weights": w.tolist(), "biases": b.tolist()}
                for w, b in zip(self.coefs_, self.intercepts_)
            ],
            "input_norm": {
                "scale": self.input_scale_.tolist(),
                "offset": self.input_offset_.tolist(),
            },
            "output_norm": {"scale": self.output_scale_, "offset": self.output_offset_},
        }
        if extra:
            doc.update(extra)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "TansigRegressor":
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError("not a tansig model document")
        if doc.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format_version {doc.get('format_version')!r}")
        model = cls.from_params(
            [layer["weights"] for layer in doc["layers"]],
            [layer["biases"] for layer in doc["layers"]],
            input_norm=(doc["input_norm"]["scale"], doc["input_norm"]["offset"]),
            output_norm=(doc["output_norm"]["scale"], doc["output_norm"]["offset"]),
            learning_rate=doc["learning_rate"],
            epochs=doc["epochs"],
            seed=doc["seed"],
        )
        if model.n_features_in_ != doc["window_n"] or model.hidden_units != doc["hidden_units"]:
            raise ValueError("model document header disagrees with its layers")
        return model


def dumps_model(model: TansigRegressor, extra: dict | None = None) -> str:
    # Python's float repr is the shortest string that round-trips exactly.
    return json.dumps(model.to_dict(extra), indent=2, sort_keys=True) + "\n"


def loads_model(text: str) -> tuple[TansigRegressor, dict]:
    doc = json.loads(text)
    return TansigRegressor.from_dict(doc), doc


# ---------------------------------------------------------------------------
# Pair/feature level helpers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10000
    learning_rate: float = 0.2
    seed: int = 42
    hidden_units: int = 8
    window_n: int = 5

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.window_n < 1:
            raise ValueError("window_n must be >= 1")
        if self.hidden_units < 0:
            raise ValueError("hidden_units must be >= 0")


@dataclass(frozen=True)
class TrainReport:
    n_windows: int
    loss_curve: tuple = field(repr=False)
    initial_loss: float
    final_loss: float


def trailing_windows(second_index: Sequence[int], values: Sequence[float], window_n: int):
    """Stack windows of ``window_n`` consecutive seconds ending at each position.

    Returns ``(X, ends)`` where ``ends`` holds the positions (into the input)
    whose trailing window covers ``window_n`` contiguous seconds.  Positions
    whose window would cross a missing second are skipped.
    """
    idx = np.asarray(second_index, dtype=np.int64)
    vals = np.asarray(values, dtype=float)
    if idx.shape != vals.shape:
        raise ValueError("second_index and values differ in length")
    n = len(vals)
    if n < window_n:
        return np.empty((0, window_n)), np.empty(0, dtype=np.int64)
    ends = np.arange(window_n - 1, n)
    contiguous = idx[ends] - idx[ends - (window_n - 1)] == window_n - 1
    ends = ends[contiguous]
    X = np.stack([vals[ends - (window_n - 1) + k] for k in range(window_n)], axis=1)
    return X, ends


def train(pairs, cfg: TrainConfig = TrainConfig()):
    """Fit a :class:`TansigRegressor` on paired (acceleration, IRI) seconds.

    Each target ``iri_mean`` is regressed on the window of acceleration
    features ending at the same second.
    """
    pairs = list(pairs)
    if len(pairs) < cfg.window_n + 1:
        raise InsufficientDataError(
            f"need at least {cfg.window_n + 1} pairs for window_n={cfg.window_n}, got {len(pairs)}"
        )
    X, ends = trailing_windows(
        [p.second_index for p in pairs], [p.accel_feature for p in pairs], cfg.window_n
    )
    if len(ends) < 2:
        raise InsufficientDataError("fewer than two contiguous windows in the training pairs")
    y = np.array([pairs[i].iri_mean for i in ends])
    model = TansigRegressor(
        hidden_units=cfg.hidden_units,
        learning_rate=cfg.learning_rate,
        epochs=cfg.epochs,
        seed=cfg.seed,
    ).fit(X, y)
    report = TrainReport(
        n_windows=len(ends),
        loss_curve=tuple(model.loss_curve_),
        initial_loss=model.loss_curve_[0],
        final_loss=model.final_loss_,
    )
    return model, report


def forward(model: TansigRegressor, window: Sequence[float]) -> float:
    """Predicted IRI (m/km) for a single window of raw acceleration features."""
    w = np.asarray(window, dtype=float)
    if w.ndim != 1 or len(w) != model.n_features_in_:
        raise ValueError(f"window length {w.size} does not match window_n={model.n_features_in_}")
    return float(model.predict(w[None, :])[0])


def predict(model: TansigRegressor, features) -> list[tuple[int, float]]:
    """Predict IRI for every second that has a full trailing window of features."""
    features = list(features)
    if len(features) < model.n_features_in_:
        raise InsufficientDataError(
            f"need at least {model.n_features_in_} features, got {len(features)}"
        )
    idx = [f.second_index for f in features]
    X, ends = trailing_windows(idx, [f.mean_magnitude for f in features], model.n_features_in_)
    if len(ends) == 0:
        return []
    preds = model.predict(X)
    return [(int(idx[i]), float(p)) for i, p in zip(ends, preds)]


def gradient_check(
    model: TansigRegressor, window: Sequence[float], target: float, step: float = 1e-5
) -> float:
    """Worst relative gap between backprop and central-difference gradients.

    The loss is the squared error of one window against ``target`` (IRI
    units), evaluated in normalized units.  The relative error of each
    parameter is ``|g_a - g_n| / max(|g_a|, |g_n|, floor)`` with
    ``floor = 1e-4 * max(1, loss)``.  Central differences lose about
    ``eps * loss / step`` to rounding, so gradients far below the loss scale
    (saturated units, near-zero weights) are compared in absolute terms.
    """
    Xn = model.normalize_inputs(np.asarray(window, dtype=float)[None, :])
    yn = np.atleast_1d(model.normalize_target(target))
    loss, grads = model._loss_grad(Xn, yn)
    floor = 1e-4 * max(1.0, loss)
    worst = 0.0
    for p, g in zip(model._params(), grads):
        flat = p.reshape(-1)
        g_flat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = model._loss_grad(Xn, yn)[0]
            flat[j] = orig - step
            down = model._loss_grad(Xn, yn)[0]
            flat[j] = orig
            numeric = (up - down) / (2.0 * step)
            denom = max(abs(g_flat[j]), abs(numeric), floor)
            worst = max(worst, abs(g_flat[j] - numeric) / denom)
    return worst


PRED_HEADER = ("second_index", "predicted_iri", "in_train")


def write_predictions_csv(rows, path, train_span=None) -> None:
    """Write ``(second_index, predicted_iri)`` rows, flagging seconds inside ``train_span``."""
    lo, hi = train_span if train_span is not None else (None, None)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PRED_HEADER)
        for sec, value in rows:
            inside = lo is not None and lo <= sec <= hi
            w.writerow([sec, repr(float(value)), int(inside)])


def read_predictions_csv(path) -> list[tuple[int, float, bool]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != PRED_HEADER:
            raise ValueError(f"{path}: expected header {','.join(PRED_HEADER)}")
        rows = []
        for row in reader:
            if not row:
                continue
            try:
                rows.append((int(row[0]), float(row[1]), bool(int(row[2]))))
            except (ValueError, IndexError):
                raise ValueError(f"{path}: line {reader.line_num}: malformed prediction row") from None
    return rows
