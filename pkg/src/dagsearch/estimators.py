"""Per-variable posterior-predictive log-likelihood estimation.

Each backend answers the same question: given a train/estimation split and a
(child, parent set) target, what is the summed log predictive density of the
child values on the estimation rows, conditioning only on the listed parent
columns?

Three backends share the interface:

* ``conjugate``: exact Bayesian linear regression with a normal-inverse-gamma
  prior; the predictive is a closed-form Student-t. Deterministic, no
  iterative fitting, the package's built-in stand-in for an amortized
  in-context regressor.
* ``mlp``: a small feed-forward net trained by full-batch gradient descent to
  output a Gaussian mean and log-variance. The conventional trained-per-task
  baseline.
* ``external``: forwards the query over a newline-delimited JSON protocol to
  an out-of-process model server.

All backends report densities of the raw child values: columns are
standardized internally with train-part statistics only, and the child's
Jacobian term is folded back into the result.
"""

from __future__ import annotations

import json
import shlex
import socket
import subprocess
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy import stats

from .graphs import ParentSet
from .scm import DataSplit


class EstimatorError(RuntimeError):
    """Base class for likelihood-estimation failures."""


class BridgeConnectionError(EstimatorError):
    """The external bridge could not be reached or died mid-conversation."""


class BridgeProtocolError(EstimatorError):
    """The bridge replied with something that is not a valid protocol line."""


class BridgeRemoteError(EstimatorError):
    """The bridge answered the query with an error payload."""


@dataclass(frozen=True)
class NigPrior:
    """Normal-inverse-gamma hyperparameters for the conjugate backend.

    Coefficient prior is N(mean, sigma^2 / precision * I); the noise variance
    prior is InvGamma(shape, rate). Defaults are weakly informative on
    standardized columns and give a finite predictive variance (shape > 1).
    """

    mean: float = 0.0
    precision: float = 1.0
    shape: float = 2.0
    rate: float = 1.0

    def __post_init__(self):
        if self.precision <= 0 or self.shape <= 0 or self.rate <= 0:
            raise ValueError("precision, shape and rate must be strictly positive")


@dataclass(frozen=True)
class MlpHyperparams:
    hidden: int = 64
    steps: int = 500
    learning_rate: float = 1e-2

    def __post_init__(self):
        if self.hidden < 1 or self.steps < 0 or self.learning_rate <= 0:
            raise ValueError("invalid MLP hyperparameters")


@dataclass(frozen=True)
class ConjugateGaussian:
    prior: NigPrior = field(default_factory=NigPrior)


@dataclass(frozen=True)
class MlpBaseline:
    hyperparams: MlpHyperparams = field(default_factory=MlpHyperparams)
    seed: int = 0


@dataclass(frozen=True)
class External:
    endpoint: str = ""


EstimatorKind = ConjugateGaussian | MlpBaseline | External


@dataclass(frozen=True)
class LikelihoodQuery:
    split: DataSplit
    target: ParentSet

    def __post_init__(self):
        d = self.split.d
        if not 0 <= self.target.child < d:
            raise ValueError(f"child {self.target.child} outside 0..{d - 1}")
        for p in self.target.parents:
            if not 0 <= p < d:
                raise ValueError(f"parent {p} outside 0..{d - 1}")


@dataclass(frozen=True)
class LikelihoodResult:
    total_logpred: float
    per_row: np.ndarray | None = None

    def __post_init__(self):
        if not np.isfinite(self.total_logpred):
            raise EstimatorError(f"non-finite log predictive: {self.total_logpred}")


def _train_standardizer(train: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and std from the train part; zero stds clamp to 1."""
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    return mean, std


def _project(q: LikelihoodQuery) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(X_train, y_train, X_est, y_est) restricted to the target's columns."""
    child = q.target.child
    parents = list(q.target.parents)
    tr, es = q.split.train.values, q.split.est.values
    return tr[:, parents], tr[:, child], es[:, parents], es[:, child]


# -- conjugate normal-inverse-gamma backend ------------------------------------


def nig_posterior(
    X: np.ndarray, y: np.ndarray, prior: NigPrior
) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Posterior (mu_n, Lambda_n, a_n, b_n) of the NIG linear model.

    ``X`` must already carry the intercept column. Lambda_n is the posterior
    precision matrix of the coefficients (up to the sigma^2 factor).
    """
    n, k = X.shape
    lam0 = prior.precision * np.eye(k)
    mu0 = np.full(k, prior.mean)
    lam_n = lam0 + X.T @ X
    mu_n = np.linalg.solve(lam_n, lam0 @ mu0 + X.T @ y)
    a_n = prior.shape + n / 2.0
    b_n = prior.rate + 0.5 * (y @ y + mu0 @ lam0 @ mu0 - mu_n @ lam_n @ mu_n)
    return mu_n, lam_n, a_n, float(b_n)


def _with_intercept(X: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((X.shape[0], 1)), X])


def estimate_conjugate_gaussian(
    q: LikelihoodQuery, prior: NigPrior = NigPrior()
) -> LikelihoodResult:
    """Exact posterior-predictive log density under Bayesian linear regression.

    The child is regressed on the listed parents plus an intercept; with no
    parents this reduces to a Bayesian Gaussian mean/variance model. The
    predictive at each estimation row is Student-t with 2*a_n degrees of
    freedom. Repeated calls are bit-identical: there is no randomness.
    """
    X_tr, y_tr, X_es, y_es = _project(q)
    if not (np.isfinite(X_tr).all() and np.isfinite(y_tr).all()):
        raise EstimatorError("non-finite training values")

    cols_mean, cols_std = _train_standardizer(X_tr)
    y_mean, y_std = _train_standardizer(y_tr[:, None])
    X_tr = (X_tr - cols_mean) / cols_std
    X_es = (X_es - cols_mean) / cols_std
    z_tr = (y_tr - y_mean[0]) / y_std[0]
    z_es = (y_es - y_mean[0]) / y_std[0]

    mu_n, lam_n, a_n, b_n = nig_posterior(_with_intercept(X_tr), z_tr, prior)

    D = _with_intercept(X_es)
    loc = D @ mu_n
    # leverage h = x^T Lambda_n^{-1} x, row-wise
    h = np.einsum("ij,ij->i", D, np.linalg.solve(lam_n, D.T).T)
    scale = np.sqrt(b_n / a_n * (1.0 + h))
    per_row = stats.t.logpdf(z_es, df=2.0 * a_n, loc=loc, scale=scale) - np.log(y_std[0])
    return LikelihoodResult(float(per_row.sum()), per_row)


# -- trained feed-forward baseline ----------------------------------------------


def _mlp_init(n_in: int, hidden: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    s1 = 1.0 / np.sqrt(max(n_in, 1))
    s2 = 1.0 / np.sqrt(hidden)
    return {
        "w1": rng.normal(0.0, s1, size=(n_in, hidden)),
        "b1": np.zeros(hidden),
        "w2": rng.normal(0.0, s2, size=(hidden, 2)),
        "b2": np.zeros(2),
    }


def _mlp_forward(params: dict[str, np.ndarray], X: np.ndarray):
    h = np.tanh(X @ params["w1"] + params["b1"])
    out = h @ params["w2"] + params["b2"]
    return out[:, 0], out[:, 1], h  # mean, logvar, hidden activations


def _gauss_logpdf(y: np.ndarray, mean: np.ndarray, logvar: np.ndarray) -> np.ndarray:
    return -0.5 * (np.log(2.0 * np.pi) + logvar + (y - mean) ** 2 * np.exp(-logvar))


def estimate_mlp(
    q: LikelihoodQuery,
    hp: MlpHyperparams = MlpHyperparams(),
    rng: np.random.Generator | None = None,
) -> LikelihoodResult:
    """Gaussian log density under a small trained feed-forward network.

    The net maps parent values to (mean, log-variance) of the child and is
    trained by full-batch gradient descent on the train-part negative log
    likelihood. A fixed generator makes the result deterministic. With
    ``steps=0`` the density under the freshly initialized network is
    returned.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    X_tr, y_tr, X_es, y_es = _project(q)
    if not (np.isfinite(X_tr).all() and np.isfinite(y_tr).all()):
        raise EstimatorError("non-finite training values")

    cols_mean, cols_std = _train_standardizer(X_tr)
    y_mean, y_std = _train_standardizer(y_tr[:, None])
    X_tr = (X_tr - cols_mean) / cols_std
    X_es = (X_es - cols_mean) / cols_std
    z_tr = (y_tr - y_mean[0]) / y_std[0]
    z_es = (y_es - y_mean[0]) / y_std[0]

    params = _mlp_init(X_tr.shape[1], hp.hidden, rng)
    n = X_tr.shape[0]
    # overflow on the way to divergence is expected and reported below
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(hp.steps):
            mean, logvar, h = _mlp_forward(params, X_tr)
            inv_var = np.exp(-logvar)
            resid = mean - z_tr
            loss = 0.5 * np.mean(np.log(2.0 * np.pi) + logvar + resid**2 * inv_var)
            if not np.isfinite(loss):
                raise EstimatorError(
                    f"MLP training diverged at step {step} "
                    f"(child={q.target.child}, parents={q.target.parents})"
                )
            # d loss / d mean, d loss / d logvar
            g_mean = resid * inv_var / n
            g_logvar = 0.5 * (1.0 - resid**2 * inv_var) / n
            g_out = np.stack([g_mean, g_logvar], axis=1)
            g_w2 = h.T @ g_out
            g_b2 = g_out.sum(axis=0)
            g_h = g_out @ params["w2"].T * (1.0 - h**2)
            g_w1 = X_tr.T @ g_h
            g_b1 = g_h.sum(axis=0)
            params["w1"] -= hp.learning_rate * g_w1
            params["b1"] -= hp.learning_rate * g_b1
            params["w2"] -= hp.learning_rate * g_w2
            params["b2"] -= hp.learning_rate * g_b2

    mean, logvar, _ = _mlp_forward(params, X_es)
    per_row = _gauss_logpdf(z_es, mean, logvar) - np.log(y_std[0])
    if not np.isfinite(per_row).all():
        raise EstimatorError("non-finite predictive density from MLP")
    return LikelihoodResult(float(per_row.sum()), per_row)


# -- external bridge backend -----------------------------------------------------
#
# Wire protocol: one JSON object per line. Request rows carry only the child
# and parent columns, child last; replies correlate by "id" and may arrive
# out of order.


class BridgeClient:
    """One connection to a likelihood bridge, stdio or TCP.

    At most one in-flight request per connection; parallel callers need a
    pool of clients.
    """

    def __init__(self, endpoint: str, timeout: float = 120.0):
        self.endpoint = endpoint
        self._next_id = 0
        self._pending: dict[int, dict] = {}
        self._proc: subprocess.Popen | None = None
        self._sock: socket.socket | None = None
        try:
            if endpoint.startswith("tcp://"):
                host, _, port = endpoint[6:].rpartition(":")
                self._sock = socket.create_connection((host, int(port)), timeout=timeout)
                self._reader = self._sock.makefile("rb")
                self._writer = self._sock.makefile("wb")
            else:
                self._proc = subprocess.Popen(
                    shlex.split(endpoint),
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                )
                self._reader = self._proc.stdout
                self._writer = self._proc.stdin
        except (OSError, ValueError) as exc:
            raise BridgeConnectionError(f"cannot reach bridge at {endpoint!r}: {exc}") from exc

    def close(self) -> None:
        for stream in (getattr(self, "_writer", None), getattr(self, "_reader", None)):
            try:
                if stream is not None:
                    stream.close()
            except OSError:
                pass
        if self._sock is not None:
            self._sock.close()
        if self._proc is not None:
            self._proc.terminate()
            self._proc.wait(timeout=10)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _read_reply(self, want_id: int) -> dict:
        while want_id not in self._pending:
            line = self._reader.readline()
            if not line:
                raise BridgeConnectionError(f"bridge at {self.endpoint!r} closed the connection")
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise BridgeProtocolError(f"malformed bridge reply: {line!r}") from exc
            if not isinstance(obj, dict) or "id" not in obj:
                raise BridgeProtocolError(f"bridge reply missing id: {line!r}")
            reply_id = obj["id"]
            # a null id means the bridge could not even parse our request
            if isinstance(reply_id, bool) or not isinstance(reply_id, int):
                raise BridgeProtocolError(f"bridge reply with unusable id: {line!r}")
            self._pending[reply_id] = obj
        return self._pending.pop(want_id)

    def query(self, q: LikelihoodQuery) -> float:
        req_id = self._next_id
        self._next_id += 1
        cols = list(q.target.parents) + [q.target.child]
        # numpy integer indices are common upstream; JSON needs plain ints
        payload = {
            "id": req_id,
            "child": int(q.target.child),
            "parents": [int(p) for p in q.target.parents],
            "train": q.split.train.values[:, cols].tolist(),
            "est": q.split.est.values[:, cols].tolist(),
        }
        try:
            self._writer.write((json.dumps(payload) + "\n").encode())
            self._writer.flush()
        except (OSError, BrokenPipeError) as exc:
            raise BridgeConnectionError(f"bridge write failed: {exc}") from exc
        reply = self._read_reply(req_id)
        if "error" in reply:
            raise BridgeRemoteError(f"bridge error for request {req_id}: {reply['error']}")
        if "total_logpred" not in reply or not isinstance(reply["total_logpred"], (int, float)):
            raise BridgeProtocolError(f"bridge reply missing total_logpred: {reply!r}")
        return float(reply["total_logpred"])


def estimate_external(q: LikelihoodQuery, endpoint: str | BridgeClient) -> LikelihoodResult:
    """Forward the query to an external bridge and wrap its answer."""
    if isinstance(endpoint, BridgeClient):
        return LikelihoodResult(endpoint.query(q))
    with BridgeClient(endpoint) as client:
        return LikelihoodResult(client.query(q))


# -- uniform front door -----------------------------------------------------------


class Estimator(Protocol):
    def total_logpred(self, q: LikelihoodQuery) -> float: ...


class _ConjugateEstimator:
    def __init__(self, kind: ConjugateGaussian):
        self.prior = kind.prior

    def total_logpred(self, q: LikelihoodQuery) -> float:
        return estimate_conjugate_gaussian(q, self.prior).total_logpred


class _MlpEstimator:
    def __init__(self, kind: MlpBaseline):
        self.kind = kind

    def total_logpred(self, q: LikelihoodQuery) -> float:
        # Seed derived from the query key so the estimator is a pure
        # function of (query, hyperparameters, seed) and cache-safe.
        seq = np.random.SeedSequence([self.kind.seed, q.target.child, q.target.mask])
        res = estimate_mlp(q, self.kind.hyperparams, np.random.default_rng(seq))
        return res.total_logpred


class _ExternalEstimator:
    def __init__(self, kind: External):
        self.endpoint = kind.endpoint
        self._client: BridgeClient | None = None

    def total_logpred(self, q: LikelihoodQuery) -> float:
        if self._client is None:
            self._client = BridgeClient(self.endpoint)
        return self._client.query(q)

    def close(self) -> None:
        if self._client is not None:
            self._client.close()
            self._client = None


def make_estimator(kind: EstimatorKind) -> Estimator:
    if isinstance(kind, ConjugateGaussian):
        return _ConjugateEstimator(kind)
    if isinstance(kind, MlpBaseline):
        return _MlpEstimator(kind)
    if isinstance(kind, External):
        return _ExternalEstimator(kind)
    raise TypeError(f"unknown estimator kind: {kind!r}")
