"""Nonlinear vector predictor: a small MLP trained by Levenberg-Marquardt.

The predictor maps a window of past samples to the next vector of samples
through one tanh hidden layer and a linear output layer. Training is
full-batch Levenberg-Marquardt on the flattened parameter vector with an
optional quadratic weight penalty, restarted from several seeded random
initializations; the retained nets form a committee whose outputs are
averaged at prediction time.

Everything here is deterministic given the configured seed, which is what
lets a backward-adaptive codec retrain the same nets on both ends of the
channel without transmitting coefficients.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_float_matrix, as_float_vector

DEFAULT_INPUT_DIM = 10
DEFAULT_HIDDEN_DIM = 2
DEFAULT_OUTPUT_DIM = 2

MU_OVERFLOW = 1e10
REL_OBJECTIVE_TOL = 1e-9
INIT_WEIGHT_RANGE = 0.5


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class MlpPredictor:
    """Weights of the input_dim -> hidden_dim (tanh) -> output_dim net."""

    hidden_weights: np.ndarray   # (hidden_dim, input_dim)
    hidden_bias: np.ndarray      # (hidden_dim,)
    output_weights: np.ndarray   # (output_dim, hidden_dim)
    output_bias: np.ndarray      # (output_dim,)

    def __post_init__(self):
        w1 = as_float_matrix(self.hidden_weights, "hidden_weights")
        b1 = as_float_vector(self.hidden_bias, "hidden_bias", length=w1.shape[0])
        w2 = as_float_matrix(self.output_weights, "output_weights",
                             n_cols=w1.shape[0])
        b2 = as_float_vector(self.output_bias, "output_bias", length=w2.shape[0])
        for name, arr in (("hidden_weights", w1), ("hidden_bias", b1),
                          ("output_weights", w2), ("output_bias", b2)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def input_dim(self):
        return self.hidden_weights.shape[1]

    @property
    def hidden_dim(self):
        return self.hidden_weights.shape[0]

    @property
    def output_dim(self):
        return self.output_weights.shape[0]

    @property
    def n_params(self):
        return (self.hidden_weights.size + self.hidden_bias.size
                + self.output_weights.size + self.output_bias.size)


@dataclass(frozen=True)
class TrainingConfig:
    """Levenberg-Marquardt schedule and multi-start settings."""

    num_starts: int = 5
    max_lm_iterations: int = 50
    mu_init: float = 1e-3
    mu_increase: float = 10.0
    mu_decrease: float = 0.1
    weight_decay: float = 1e-4
    rng_seed: int = 0
    committee: bool = True

    def __post_init__(self):
        if self.num_starts < 1:
            raise ValueError("num_starts must be >= 1")
        if self.mu_init <= 0:
            raise ValueError("mu_init must be positive")
        if not (self.mu_increase > 1.0 > self.mu_decrease > 0.0):
            raise ValueError("need mu_increase > 1 > mu_decrease > 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


@dataclass(frozen=True)
class Committee:
    """Retained nets from multi-start training; prediction averages them."""

    members: tuple
    member_sses: tuple = ()

    def __post_init__(self):
        if not self.members:
            raise ValueError("committee must have at least one member")
        dims = {(m.input_dim, m.hidden_dim, m.output_dim) for m in self.members}
        if len(dims) > 1:
            raise ValueError("committee members must share dimensions")

    @property
    def input_dim(self):
        return self.members[0].input_dim

    @property
    def output_dim(self):
        return self.members[0].output_dim


@dataclass
class LmResult:
    net: MlpPredictor
    sse: float
    n_iterations: int
    aborted: bool
    # Regularized objective after each accepted step, starting with the
    # initial value; non-increasing by construction.
    objective_history: list = field(default_factory=list)


def _forward_raw(net, x):
    hidden = np.tanh(net.hidden_weights @ x + net.hidden_bias)
    return net.output_weights @ hidden + net.output_bias


def mlp_forward(net, context):
    """Predict one output vector from input_dim past samples."""
    x = as_float_vector(context, "context", length=net.input_dim)
    return _forward_raw(net, x)


def committee_forward(committee, context):
    """Elementwise mean of the member predictions."""
    x = as_float_vector(context, "context", length=committee.input_dim)
    out = np.zeros(committee.output_dim)
    for member in committee.members:
        out += _forward_raw(member, x)
    return out / len(committee.members)


def flatten_params(net):
    """Parameter vector in the fixed layout used by the LM trainer:
    hidden weights row-major, hidden bias, output weights row-major,
    output bias."""
    return np.concatenate([
        net.hidden_weights.ravel(), net.hidden_bias,
        net.output_weights.ravel(), net.output_bias,
    ])


def unflatten_params(theta, input_dim, hidden_dim, output_dim):
    h_w = hidden_dim * input_dim
    o_w = output_dim * hidden_dim
    return MlpPredictor(
        hidden_weights=theta[:h_w].reshape(hidden_dim, input_dim),
        hidden_bias=theta[h_w:h_w + hidden_dim],
        output_weights=theta[h_w + hidden_dim:h_w + hidden_dim + o_w]
        .reshape(output_dim, hidden_dim),
        output_bias=theta[h_w + hidden_dim + o_w:],
    )


def residual_vector(theta, contexts, targets, input_dim, hidden_dim,
                    output_dim):
    """Residuals e = prediction - target, flattened row-major over
    (dataset item, output component)."""
    h_w = hidden_dim * input_dim
    o_w = output_dim * hidden_dim
    w1 = theta[:h_w].reshape(hidden_dim, input_dim)
    b1 = theta[h_w:h_w + hidden_dim]
    w2 = theta[h_w + hidden_dim:h_w + hidden_dim + o_w].reshape(
        output_dim, hidden_dim)
    b2 = theta[h_w + hidden_dim + o_w:]
    hidden = np.tanh(contexts @ w1.T + b1)      # (m, hidden)
    pred = hidden @ w2.T + b2                   # (m, output)
    return (pred - targets).ravel(), hidden


def lm_jacobian(theta, contexts, targets, input_dim, hidden_dim, output_dim):
    """Jacobian of the flattened residual vector w.r.t. the flattened
    parameters, rows ordered like the residuals."""
    m = contexts.shape[0]
    _, hidden = residual_vector(theta, contexts, targets,
                                input_dim, hidden_dim, output_dim)
    h_w = hidden_dim * input_dim
    o_w = output_dim * hidden_dim
    w2 = theta[h_w + hidden_dim:h_w + hidden_dim + o_w].reshape(
        output_dim, hidden_dim)
    dtanh = 1.0 - hidden ** 2                   # (m, hidden)
    eye = np.eye(output_dim)

    j_w1 = np.einsum("oj,sj,si->soji", w2, dtanh, contexts).reshape(
        m * output_dim, h_w)
    j_b1 = np.einsum("oj,sj->soj", w2, dtanh).reshape(
        m * output_dim, hidden_dim)
    j_w2 = np.einsum("op,sj->sopj", eye, hidden).reshape(
        m * output_dim, o_w)
    j_b2 = np.tile(eye, (m, 1))
    return np.hstack([j_w1, j_b1, j_w2, j_b2])


def lm_train(net, contexts, targets, cfg):
    """Full-batch Levenberg-Marquardt fit of the net to (context, target)
    pairs.

    Minimizes sse + weight_decay * ||theta||^2: each iteration solves the
    damped normal equations, accepts the step only if the objective
    decreases (shrinking the damping), otherwise grows the damping and
    retries. Stops on the iteration cap, damping overflow, or a relative
    objective decrease below 1e-9. Returns the iterate with the lowest raw
    SSE seen, so the reported SSE never exceeds the initial one.
    """
    contexts = as_float_matrix(contexts, "contexts", n_cols=net.input_dim)
    targets = as_float_matrix(targets, "targets", n_cols=net.output_dim)
    if contexts.shape[0] != targets.shape[0]:
        raise ValueError("contexts and targets must pair up")
    if contexts.shape[0] == 0:
        raise ValueError("dataset must be non-empty")

    dims = (net.input_dim, net.hidden_dim, net.output_dim)
    lam = cfg.weight_decay
    theta = flatten_params(net)
    e, _ = residual_vector(theta, contexts, targets, *dims)
    sse = float(e @ e)
    initial_sse = sse
    objective = sse + lam * float(theta @ theta)
    best_theta, best_sse = theta, sse
    history = [objective]
    mu = cfg.mu_init
    n_iter = 0

    for _ in range(cfg.max_lm_iterations):
        jac = lm_jacobian(theta, contexts, targets, *dims)
        if not np.all(np.isfinite(jac)):
            return LmResult(net=net, sse=initial_sse, n_iterations=n_iter,
                            aborted=True, objective_history=history)
        grad = jac.T @ e + lam * theta
        hess = jac.T @ jac + lam * np.eye(theta.size)

        accepted = False
        while mu <= MU_OVERFLOW:
            delta = np.linalg.solve(hess + mu * np.eye(theta.size), -grad)
            trial = theta + delta
            e_trial, _ = residual_vector(trial, contexts, targets, *dims)
            sse_trial = float(e_trial @ e_trial)
            obj_trial = sse_trial + lam * float(trial @ trial)
            if np.isfinite(obj_trial) and obj_trial < objective:
                accepted = True
                mu = max(mu * cfg.mu_decrease, 1e-15)
                break
            mu *= cfg.mu_increase
        if not accepted:
            break

        n_iter += 1
        rel_decrease = (objective - obj_trial) / max(objective, 1e-300)
        theta, e, sse, objective = trial, e_trial, sse_trial, obj_trial
        history.append(objective)
        if sse < best_sse:
            best_theta, best_sse = theta, sse
        if rel_decrease < REL_OBJECTIVE_TOL:
            break

    return LmResult(net=unflatten_params(best_theta, *dims), sse=best_sse,
                    n_iterations=n_iter, aborted=False,
                    objective_history=history)


def init_net(input_dim, hidden_dim, output_dim, seed_sequence):
    """Random net with all parameters uniform in [-0.5, 0.5]."""
    rng = np.random.default_rng(seed_sequence)
    r = INIT_WEIGHT_RANGE
    return MlpPredictor(
        hidden_weights=rng.uniform(-r, r, (hidden_dim, input_dim)),
        hidden_bias=rng.uniform(-r, r, hidden_dim),
        output_weights=rng.uniform(-r, r, (output_dim, hidden_dim)),
        output_bias=rng.uniform(-r, r, output_dim),
    )


def multi_start_train(contexts, targets, cfg,
                      input_dim=DEFAULT_INPUT_DIM,
                      hidden_dim=DEFAULT_HIDDEN_DIM,
                      output_dim=None,
                      initial_nets=None):
    """Train num_starts independently initialized nets and retain them.

    Each start draws its initial weights from a stream derived from
    (cfg.rng_seed, start index), so results are bit-reproducible. With
    cfg.committee all non-aborted starts are kept; otherwise only the
    lowest-SSE net. ``initial_nets`` overrides the random initialization
    (used for warm starts).
    """
    targets = as_float_matrix(targets, "targets")
    if output_dim is None:
        output_dim = targets.shape[1]
    if initial_nets is not None:
        starts = list(initial_nets)
    else:
        starts = [
            init_net(input_dim, hidden_dim, output_dim,
                     np.random.SeedSequence(entropy=(cfg.rng_seed, k)))
            for k in range(cfg.num_starts)
        ]
    results = [lm_train(net, contexts, targets, cfg) for net in starts]
    kept = [r for r in results if not r.aborted]
    if not kept:
        raise TrainingError("all training starts aborted on non-finite values")
    if cfg.committee:
        members = kept
    else:
        members = [min(kept, key=lambda r: r.sse)]
    return Committee(
        members=tuple(r.net for r in members),
        member_sses=tuple(r.sse for r in members),
    )


# ---------------------------------------------------------------------------
# JSON inspection format (the codec never transmits these; backward
# adaptation recomputes them from decoded samples).

def _float_list(values):
    # 17 significant digits: lossless decimal round trip
    return "[" + ", ".join(format(float(v), ".17g") for v in values) + "]"


def save_predictor(net, path):
    doc = (
        "{\n"
        f'  "input_dim": {net.input_dim},\n'
        f'  "hidden_dim": {net.hidden_dim},\n'
        f'  "output_dim": {net.output_dim},\n'
        f'  "hidden_weights": {_float_list(net.hidden_weights.ravel())},\n'
        f'  "hidden_bias": {_float_list(net.hidden_bias)},\n'
        f'  "output_weights": {_float_list(net.output_weights.ravel())},\n'
        f'  "output_bias": {_float_list(net.output_bias)}\n'
        "}\n"
    )
    with open(path, "w") as fh:
        fh.write(doc)


def load_predictor(path):
    with open(path) as fh:
        doc = json.load(fh)
    input_dim = int(doc["input_dim"])
    hidden_dim = int(doc["hidden_dim"])
    output_dim = int(doc["output_dim"])

    def as_array(key, shape):
        return np.asarray(doc[key], dtype=np.float64).reshape(shape)

    return MlpPredictor(
        hidden_weights=as_array("hidden_weights", (hidden_dim, input_dim)),
        hidden_bias=as_array("hidden_bias", (hidden_dim,)),
        output_weights=as_array("output_weights", (output_dim, hidden_dim)),
        output_bias=as_array("output_bias", (output_dim,)),
    )


class MlpVectorPredictor(RegressorMixin, BaseEstimator):
    """Multi-start LM-trained MLP regressor with committee averaging.

    Parameters mirror TrainingConfig; dimensions are taken from the data
    at fit time (X: (n_samples, input_dim), y: (n_samples, output_dim)).

    Attributes
    ----------
    committee_ : Committee
        Retained nets (all starts, or the single best when committee=False).
    sse_ : float
        Lowest training SSE among the retained nets.
    """

    def __init__(self, hidden_dim=DEFAULT_HIDDEN_DIM, num_starts=5,
                 max_lm_iterations=50, mu_init=1e-3, mu_increase=10.0,
                 mu_decrease=0.1, weight_decay=1e-4, committee=True,
                 random_state=0):
        self.hidden_dim = hidden_dim
        self.num_starts = num_starts
        self.max_lm_iterations = max_lm_iterations
        self.mu_init = mu_init
        self.mu_increase = mu_increase
        self.mu_decrease = mu_decrease
        self.weight_decay = weight_decay
        self.committee = committee
        self.random_state = random_state

    def _config(self):
        return TrainingConfig(
            num_starts=self.num_starts,
            max_lm_iterations=self.max_lm_iterations,
            mu_init=self.mu_init,
            mu_increase=self.mu_increase,
            mu_decrease=self.mu_decrease,
            weight_decay=self.weight_decay,
            rng_seed=self.random_state,
            committee=self.committee,
        )

    def fit(self, X, y):
        X = as_float_matrix(X, "X")
        y = as_float_matrix(y, "y")
        if y.shape[0] != X.shape[0]:
            raise ValueError("X and y must have the same number of rows")
        self.committee_ = multi_start_train(
            X, y, self._config(), input_dim=X.shape[1],
            hidden_dim=self.hidden_dim, output_dim=y.shape[1])
        self.sse_ = min(self.committee_.member_sses)
        return self

    def predict(self, X):
        check_is_fitted(self, "committee_")
        X = as_float_matrix(X, "X", n_cols=self.committee_.input_dim)
        return np.vstack([committee_forward(self.committee_, row)
                          for row in X])
