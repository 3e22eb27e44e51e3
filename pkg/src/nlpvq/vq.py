"""Vector quantizer: codebook structure, nearest-neighbor coding, and the
two codebook design procedures (seeded-random + generalized Lloyd, and
LBG splitting).

Codebooks are small (M <= 256 in this codec), so nearest-neighbor search
is an exhaustive scan. Both design procedures drive the same Lloyd
iteration and guarantee that every returned codeword wins at least one
training vector.
"""

import hashlib
import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_float_matrix, as_float_vector

DEFAULT_SPLIT_EPSILON = 0.01
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITERS = 100

# Extra assignment rounds allowed after distortion convergence to clear
# any cell left empty by the final re-centering.
_EMPTY_CELL_ROUNDS = 32

_DUPLICATE_TOL = 1e-12
_ZERO_SPLIT_FALLBACK = 1e-4


class CodebookDesignError(RuntimeError):
    pass


@dataclass(frozen=True)
class CodebookProvenance:
    algorithm: str = "random-lloyd"
    closed_loop_iteration: int = 0
    training_size: int = 0


@dataclass(frozen=True)
class Codebook:
    """M reproduction vectors of dimension dim, with design provenance."""

    dim: int
    codewords: np.ndarray
    provenance: CodebookProvenance = field(default_factory=CodebookProvenance)

    def __post_init__(self):
        cw = as_float_matrix(self.codewords, "codewords", n_cols=self.dim)
        diffs = np.abs(cw[:, None, :] - cw[None, :, :]).max(axis=2)
        np.fill_diagonal(diffs, np.inf)
        if diffs.min() < _DUPLICATE_TOL:
            raise ValueError("codebook contains duplicate codewords")
        cw.setflags(write=False)
        object.__setattr__(self, "codewords", cw)

    @property
    def size(self):
        return self.codewords.shape[0]


def _nearest(codewords, vectors, chunk=16384):
    """Index of the closest codeword per vector (squared Euclidean,
    ties to the lowest index), plus the winning squared distances.

    Accumulates (x_d - c_d)^2 one dimension at a time: identical
    arithmetic to a brute-force scan (exact zeros survive), without
    materializing the (n, M, dim) cube."""
    n = vectors.shape[0]
    dim = vectors.shape[1]
    indices = np.empty(n, dtype=np.int64)
    dists = np.empty(n, dtype=np.float64)
    for start in range(0, n, chunk):
        block = vectors[start:start + chunk]
        d = (block[:, None, 0] - codewords[None, :, 0]) ** 2
        for axis in range(1, dim):
            d += (block[:, None, axis] - codewords[None, :, axis]) ** 2
        idx = np.argmin(d, axis=1)
        indices[start:start + chunk] = idx
        dists[start:start + chunk] = d[np.arange(block.shape[0]), idx]
    return indices, dists


def vq_encode(cb, v):
    """Nearest codeword for one vector: returns (index, codeword)."""
    vec = as_float_vector(v, "vector", length=cb.dim)
    idx, _ = _nearest(cb.codewords, vec[None, :])
    i = int(idx[0])
    return i, cb.codewords[i]


def vq_distortion(cb, vectors):
    """Mean squared Euclidean distance (per vector) to the nearest codeword."""
    ts = as_float_matrix(vectors, "training vectors", n_cols=cb.dim)
    _, dists = _nearest(cb.codewords, ts)
    return float(np.mean(dists))


def _repair_empty_cells(codewords, counts, ts):
    """Move empty codewords onto the most populous cell's centroid plus a
    deterministic perturbation scaled to the data range."""
    empty = np.flatnonzero(counts == 0)
    if empty.size == 0:
        return codewords
    donor = int(np.argmax(counts))
    span = ts.max(axis=0) - ts.min(axis=0)
    if np.max(span) <= 0.0:
        span = np.ones_like(span)
    repaired = codewords.copy()
    for k, cell in enumerate(empty):
        repaired[cell] = codewords[donor] + DEFAULT_SPLIT_EPSILON * span * (k + 1)
    return repaired


def lloyd_iterate(cb, vectors):
    """One generalized Lloyd iteration: partition the training set by
    nearest codeword, then re-center each codeword on its cell.

    Returns (new Codebook, distortion), where distortion is the mean
    squared error of the *incoming* codebook on the training set. Empty
    cells are refilled from the most populous cell before re-centering.
    """
    ts = as_float_matrix(vectors, "training vectors", n_cols=cb.dim)
    assign, dists = _nearest(cb.codewords, ts)
    distortion = float(np.mean(dists))

    m = cb.size
    counts = np.bincount(assign, minlength=m)
    sums = np.zeros((m, cb.dim), dtype=np.float64)
    np.add.at(sums, assign, ts)
    nonzero = counts > 0
    new_cw = cb.codewords.copy()
    new_cw[nonzero] = sums[nonzero] / counts[nonzero, None]
    new_cw = _repair_empty_cells(new_cw, counts, ts)
    new_cb = replace(cb, codewords=new_cw)
    return new_cb, distortion


def _lloyd_until_converged(cb, ts, tol, max_iters):
    """Run Lloyd iterations until the relative distortion decrease falls
    below tol (or max_iters), then keep iterating (bounded) until every
    codeword owns at least one training vector."""
    prev = None
    for _ in range(max_iters):
        cb, distortion = lloyd_iterate(cb, ts)
        if prev is not None and (
            prev <= 0.0 or (prev - distortion) / prev < tol
        ):
            break
        prev = distortion
    for _ in range(_EMPTY_CELL_ROUNDS):
        counts = np.bincount(_nearest(cb.codewords, ts)[0], minlength=cb.size)
        if np.all(counts > 0):
            return cb
        cb, _ = lloyd_iterate(cb, ts)
    raise CodebookDesignError("empty cells persisted past repair budget")


def refine_codebook(cb, vectors, tol=DEFAULT_TOL, max_iters=DEFAULT_MAX_ITERS):
    """Update an existing codebook on a new training set with Lloyd
    iterations (the closed-loop 'update the VQ' step). Distortion on the
    new set never exceeds that of the incoming codebook."""
    ts = as_float_matrix(vectors, "training vectors", n_cols=cb.dim)
    return _lloyd_until_converged(cb, ts, tol, max_iters)


def design_random_lloyd(vectors, m, seed, tol=DEFAULT_TOL,
                        max_iters=DEFAULT_MAX_ITERS):
    """Design an M-codeword codebook from a seeded random initialization
    refined by generalized Lloyd iterations.

    Initial codewords are M distinct training vectors drawn uniformly
    without replacement from the set of unique rows.
    """
    ts = as_float_matrix(vectors, "training vectors")
    unique = np.unique(ts, axis=0)
    if m < 1:
        raise ValueError("m must be >= 1")
    if m > unique.shape[0]:
        raise ValueError(
            f"m = {m} exceeds the {unique.shape[0]} distinct training vectors"
        )
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    pick = rng.choice(unique.shape[0], size=m, replace=False)
    cb = Codebook(
        dim=ts.shape[1],
        codewords=unique[pick],
        provenance=CodebookProvenance(
            algorithm="random-lloyd",
            closed_loop_iteration=0,
            training_size=ts.shape[0],
        ),
    )
    return _lloyd_until_converged(cb, ts, tol, max_iters)


def _split_codewords(codewords, epsilon):
    """Double the codebook: c -> c*(1+eps), c*(1-eps); codewords at the
    origin split additively instead."""
    children = []
    for c in codewords:
        if np.max(np.abs(c)) * 2.0 * epsilon < _DUPLICATE_TOL:
            children.append(c + _ZERO_SPLIT_FALLBACK)
            children.append(c - _ZERO_SPLIT_FALLBACK)
        else:
            children.append(c * (1.0 + epsilon))
            children.append(c * (1.0 - epsilon))
    return np.asarray(children)


def design_lbg(vectors, m, epsilon=DEFAULT_SPLIT_EPSILON, tol=DEFAULT_TOL,
               max_iters=DEFAULT_MAX_ITERS):
    """Design an M-codeword codebook by LBG splitting.

    Starts from the global centroid and repeats split + Lloyd convergence
    log2(M) times. M must be a power of two.
    """
    ts = as_float_matrix(vectors, "training vectors")
    if m < 1 or (m & (m - 1)) != 0:
        raise ValueError(f"LBG requires a power-of-two codebook size, got {m}")
    provenance = CodebookProvenance(
        algorithm="lbg", closed_loop_iteration=0, training_size=ts.shape[0]
    )
    cb = Codebook(dim=ts.shape[1], codewords=ts.mean(axis=0, keepdims=True),
                  provenance=provenance)
    while cb.size < m:
        cb = replace(cb, codewords=_split_codewords(cb.codewords, epsilon))
        cb = _lloyd_until_converged(cb, ts, tol, max_iters)
    return cb


# ---------------------------------------------------------------------------
# Codebook files and the canonical hash embedded in bitstreams.

def codebook_canonical_bytes(cb):
    """Canonical binary form: u32 dim, u32 M, then row-major f64 codewords,
    all little-endian."""
    header = struct.pack("<II", cb.dim, cb.size)
    body = np.ascontiguousarray(cb.codewords, dtype="<f8").tobytes()
    return header + body


def codebook_hash(cb):
    """SHA-256 hex digest of the canonical binary form."""
    return hashlib.sha256(codebook_canonical_bytes(cb)).hexdigest()


def _fmt_float(x):
    return format(float(x), ".17g")


def save_codebook(cb, path):
    """Write a codebook as JSON (codewords row-major, 17 significant digits)."""
    rows = ",\n    ".join(
        "[" + ", ".join(_fmt_float(v) for v in row) + "]"
        for row in cb.codewords
    )
    provenance = json.dumps(
        {
            "algorithm": cb.provenance.algorithm,
            "closed_loop_iteration": cb.provenance.closed_loop_iteration,
            "training_size": cb.provenance.training_size,
        },
        sort_keys=True,
    )
    doc = (
        "{\n"
        f'  "dim": {cb.dim},\n'
        f'  "codewords": [\n    {rows}\n  ],\n'
        f'  "provenance": {provenance},\n'
        f'  "sha256": "{codebook_hash(cb)}"\n'
        "}\n"
    )
    with open(path, "w") as fh:
        fh.write(doc)


def load_codebook(path):
    with open(path) as fh:
        doc = json.load(fh)
    cb = Codebook(
        dim=int(doc["dim"]),
        codewords=np.asarray(doc["codewords"], dtype=np.float64),
        provenance=CodebookProvenance(**doc.get("provenance", {})),
    )
    stored = doc.get("sha256")
    if stored is not None and stored != codebook_hash(cb):
        raise ValueError(f"{path}: stored sha256 does not match codewords")
    return cb


# ---------------------------------------------------------------------------
# Estimator facade.

class VectorQuantizer(TransformerMixin, BaseEstimator):
    """Vector quantizer with fit/predict/transform semantics.

    Parameters
    ----------
    n_codewords : int
        Codebook size M.
    method : {"lbg", "random-lloyd"}
        Design procedure: LBG splitting (deterministic) or seeded random
        initialization plus generalized Lloyd.
    split_epsilon : float
        Relative perturbation used when LBG splits a codeword.
    tol : float
        Relative distortion decrease that ends the Lloyd loop.
    max_iter : int
        Lloyd iteration cap per design stage.
    random_state : int
        Seed for the random-init method (ignored by LBG).

    Attributes
    ----------
    codebook_ : Codebook
        The designed codebook.
    codewords_ : ndarray of shape (n_codewords, n_features)
    distortion_ : float
        Mean squared error per vector on the training set.
    """

    def __init__(self, n_codewords=64, method="lbg",
                 split_epsilon=DEFAULT_SPLIT_EPSILON, tol=DEFAULT_TOL,
                 max_iter=DEFAULT_MAX_ITERS, random_state=0):
        self.n_codewords = n_codewords
        self.method = method
        self.split_epsilon = split_epsilon
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        X = as_float_matrix(X, "X")
        if self.method == "lbg":
            cb = design_lbg(X, self.n_codewords, epsilon=self.split_epsilon,
                            tol=self.tol, max_iters=self.max_iter)
        elif self.method == "random-lloyd":
            cb = design_random_lloyd(X, self.n_codewords,
                                     seed=self.random_state, tol=self.tol,
                                     max_iters=self.max_iter)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        self.codebook_ = cb
        self.codewords_ = cb.codewords
        self.distortion_ = vq_distortion(cb, X)
        return self

    def predict(self, X):
        """Codeword index per row of X."""
        check_is_fitted(self, "codebook_")
        X = as_float_matrix(X, "X", n_cols=self.codebook_.dim)
        return _nearest(self.codewords_, X)[0]

    def transform(self, X):
        """Quantize each row of X to its nearest codeword."""
        return self.codewords_[self.predict(X)]

    def inverse_transform(self, indices):
        """Codewords for a sequence of indices."""
        check_is_fitted(self, "codebook_")
        return self.codewords_[np.asarray(indices, dtype=np.int64)]
