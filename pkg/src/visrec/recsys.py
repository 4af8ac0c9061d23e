"""Item-similarity recommendation: collective SLIM trained with pairwise ranking.

The similarity matrix S is learned from two signals sharing one set of
columns: sampled (user, positive, negative) ranking triples on the rating
matrix, weighted ``alpha``, and a full-batch reconstruction of the item
feature matrix, weighted ``1 - alpha``. An L2 penalty ``gamma`` applies to
every update and the diagonal of S is clamped to zero throughout, so an item
never recommends itself.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .errors import (
    AlignmentError,
    DivergenceError,
    DuplicateKeyError,
    FormatError,
    MissingUserError,
    ParameterError,
)

RATING_MIN, RATING_MAX = 0.5, 5.0
DEFAULT_RELEVANCE_THRESHOLD = 4.0


class InteractionMatrix:
    """Sparse user x item ratings with timestamps.

    User and item id universes are fixed at construction; an explicit
    ``item_ids`` list lets cold items (features but no ratings) occupy
    columns.
    """

    def __init__(self, entries, item_ids=None, user_ids=None):
        entries = list(entries)
        users = sorted({e[0] for e in entries}) if user_ids is None else list(user_ids)
        items = sorted({e[1] for e in entries}) if item_ids is None else list(item_ids)
        self.user_ids = tuple(users)
        self.item_ids = tuple(items)
        self._user_index = {u: i for i, u in enumerate(users)}
        self._item_index = {m: i for i, m in enumerate(items)}
        seen = set()
        u_idx = np.empty(len(entries), dtype=np.int64)
        i_idx = np.empty(len(entries), dtype=np.int64)
        ratings = np.empty(len(entries))
        stamps = np.zeros(len(entries), dtype=np.int64)
        for pos, entry in enumerate(entries):
            user, item, rating = entry[0], entry[1], float(entry[2])
            if user not in self._user_index:
                raise AlignmentError(f"user {user} outside the declared user universe")
            if item not in self._item_index:
                raise AlignmentError(f"item {item} outside the declared item universe")
            if not RATING_MIN <= rating <= RATING_MAX:
                raise ParameterError(
                    f"rating {rating} for ({user}, {item}) outside "
                    f"[{RATING_MIN}, {RATING_MAX}]"
                )
            key = (user, item)
            if key in seen:
                raise DuplicateKeyError(f"duplicate rating for {key}")
            seen.add(key)
            u_idx[pos] = self._user_index[user]
            i_idx[pos] = self._item_index[item]
            ratings[pos] = rating
            if len(entry) > 3 and entry[3] is not None:
                stamps[pos] = int(entry[3])
        self.entry_users = u_idx
        self.entry_items = i_idx
        self.entry_ratings = ratings
        self.entry_timestamps = stamps
        self.matrix = sp.csr_matrix(
            (ratings, (u_idx, i_idx)), shape=(len(users), len(items))
        )

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_entries(self) -> int:
        return len(self.entry_ratings)

    def user_index(self, user_id) -> int:
        try:
            return self._user_index[user_id]
        except KeyError:
            raise MissingUserError(f"unknown user {user_id}") from None

    def item_index(self, item_id) -> int:
        return self._item_index[item_id]

    def user_ratings(self, u: int) -> tuple[np.ndarray, np.ndarray]:
        """(item indices, rating values) of one user row."""
        row = self.matrix.getrow(u)
        return row.indices.astype(np.int64), row.data

    def restrict(self, entry_indices) -> "InteractionMatrix":
        """Same user/item universes, entries limited to the given positions."""
        entry_indices = np.asarray(entry_indices, dtype=np.int64)
        entries = [
            (
                self.user_ids[self.entry_users[i]],
                self.item_ids[self.entry_items[i]],
                self.entry_ratings[i],
                self.entry_timestamps[i],
            )
            for i in entry_indices
        ]
        return InteractionMatrix(entries, item_ids=self.item_ids, user_ids=self.user_ids)


def load_ratings_csv(path: str | Path, item_ids=None) -> InteractionMatrix:
    """MovieLens ratings.csv (userId,movieId,rating,timestamp)."""
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            entries.append(
                (
                    int(row["userId"]),
                    int(row["movieId"]),
                    float(row["rating"]),
                    int(row.get("timestamp") or 0),
                )
            )
    return InteractionMatrix(entries, item_ids=item_ids)


@dataclass(frozen=True)
class FeatureMatrix:
    """Dense items x d feature matrix, row-aligned against an item id list."""

    family: str
    item_ids: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ParameterError(f"feature matrix must be 2-D, got shape {v.shape}")
        if v.shape[0] != len(self.item_ids):
            raise AlignmentError(
                f"{v.shape[0]} feature rows for {len(self.item_ids)} item ids"
            )
        if not np.isfinite(v).all():
            raise ValueError("feature matrix contains non-finite values")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "item_ids", tuple(self.item_ids))

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.5
    gamma: float = 1e-4
    learning_rate: float = 0.05
    epochs: int = 30
    seed: int = 0
    relevance_threshold: float = DEFAULT_RELEVANCE_THRESHOLD

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ParameterError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.gamma < 0:
            raise ParameterError(f"gamma must be nonnegative, got {self.gamma}")
        if self.learning_rate <= 0:
            raise ParameterError(f"learning rate must be positive, got {self.learning_rate}")
        if self.epochs < 1:
            raise ParameterError(f"epochs must be >= 1, got {self.epochs}")


@dataclass(frozen=True)
class SimilarityModel:
    matrix: np.ndarray  # n_items x n_items, zero diagonal
    config: TrainConfig
    item_ids: tuple[int, ...]
    loss_history: tuple[float, ...] = field(default=())

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ParameterError(f"similarity matrix must be square, got {m.shape}")
        if not np.isfinite(m).all():
            raise ValueError("similarity matrix contains non-finite values")
        if np.abs(np.diag(m)).max(initial=0.0) != 0.0:
            raise ValueError("similarity matrix must have a zero diagonal")
        object.__setattr__(self, "matrix", m)


def standardize_columns(values: np.ndarray) -> np.ndarray:
    """Zero-mean unit-variance columns; constant columns become zero."""
    centered = values - values.mean(axis=0)
    std = centered.std(axis=0)
    std[std == 0] = 1.0
    return centered / std


def sample_negative(rng: np.random.Generator, rated: set[int], n_items: int) -> int:
    """Uniform item the user has not rated (rejection sampling)."""
    while True:
        j = int(rng.integers(n_items))
        if j not in rated:
            return j


def _spectral_norm(G: np.ndarray, iters: int = 60) -> float:
    """Largest eigenvalue of G @ G.T by power iteration.

    The start vector is pseudo-random from a fixed seed: deterministic, and
    never exactly orthogonal to the dominant eigenspace the way a structured
    start (all-ones) can be on block-patterned features.
    """
    v = np.random.default_rng(1905).standard_normal(G.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = G @ (G.T @ v)
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.0
        lam = v @ w
        v = w / norm
    return float(max(lam, 0.0))


def train_collective_slim(
    R: InteractionMatrix, F: FeatureMatrix, cfg: TrainConfig
) -> SimilarityModel:
    """Learn S from sampled ranking triples (weight alpha), each triple
    update interleaved with one gradient step on the feature-reconstruction
    term (weight 1 - alpha). Deterministic given cfg.seed.

    Feature columns are standardized first so ``alpha`` means the same thing
    across feature families. Each feature gradient step is scaled by the
    feature Gram spectral norm, which makes it a guaranteed descent step for
    any ``learning_rate * (1 - alpha) <= 0.5`` and keeps the two pulls in
    balance, so the ranking updates cannot outrun the reconstruction term.
    """
    if R.n_entries == 0:
        raise ParameterError("cannot train on an empty interaction matrix")
    if F.item_ids != R.item_ids:
        raise AlignmentError(
            "feature matrix items and interaction matrix items are not aligned"
        )
    n = R.n_items
    G = standardize_columns(F.values)
    GT = G.T.copy()

    rated_idx: list[np.ndarray] = []
    rated_val: list[np.ndarray] = []
    rated_set: list[set[int]] = []
    for u in range(R.n_users):
        idx, val = R.user_ratings(u)
        rated_idx.append(idx)
        rated_val.append(val)
        rated_set.append(set(int(i) for i in idx))

    pairs = [
        (u, int(i))
        for u in range(R.n_users)
        if 0 < len(rated_idx[u]) < n
        for i, r in zip(rated_idx[u], rated_val[u])
        if r >= cfg.relevance_threshold
    ]

    lam_f = _spectral_norm(G) if cfg.alpha < 1.0 else 0.0
    use_features = cfg.alpha < 1.0 and lam_f > 0.0
    lr, alpha, gamma = cfg.learning_rate, cfg.alpha, cfg.gamma
    run_bpr = alpha > 0.0 and bool(pairs)
    # without ranking triples to pace them, run enough feature steps per
    # epoch to keep plain gradient descent moving at any learning rate
    if use_features and not run_bpr:
        feature_steps = min(400, max(1, round(2.0 / (lr * (1.0 - alpha)))))
    else:
        feature_steps = 0

    sse_acc = [0.0, 0]

    def feature_step(S):
        resid = GT - GT @ S
        sse_acc[0] += float((resid ** 2).sum())
        sse_acc[1] += 1
        S += lr * ((2.0 * (1.0 - alpha) / lam_f) * (G @ resid) - gamma * S)
        np.fill_diagonal(S, 0.0)

    S = np.zeros((n, n))
    rng = np.random.default_rng(cfg.seed)
    history = []
    for epoch in range(cfg.epochs):
        bpr_loss = 0.0
        sse_acc[:] = [0.0, 0]
        if run_bpr:
            order = rng.permutation(len(pairs))
            for p in order:
                u, i = pairs[p]
                j = sample_negative(rng, rated_set[u], n)
                idx, val = rated_idx[u], rated_val[u]
                x_i = val @ S[idx, i]
                x_j = val @ S[idx, j]
                bpr_loss += np.logaddexp(0.0, x_j - x_i)
                z = expit(x_j - x_i)
                S[idx, i] += lr * (alpha * z * val - gamma * S[idx, i])
                S[idx, j] += lr * (-alpha * z * val - gamma * S[idx, j])
                S[i, i] = 0.0
                if use_features:
                    feature_step(S)
        else:
            for _ in range(feature_steps):
                feature_step(S)
        if not np.isfinite(S).all():
            raise DivergenceError(
                f"similarity matrix diverged at epoch {epoch}; lower the learning rate"
            )
        # monitor: every component averaged over the epoch's steps
        total = alpha * (bpr_loss / len(pairs) if pairs else 0.0)
        if alpha < 1.0:
            if sse_acc[1]:
                total += (1.0 - alpha) * sse_acc[0] / sse_acc[1]
            else:
                total += (1.0 - alpha) * float(((GT - GT @ S) ** 2).sum())
        total += gamma * float((S ** 2).sum())
        history.append(total)
    return SimilarityModel(
        matrix=S, config=cfg, item_ids=R.item_ids, loss_history=tuple(history)
    )


def score(model: SimilarityModel, R: InteractionMatrix, user_id) -> np.ndarray:
    """score(u, t) = sum over rated items l of r_ul * S[l, t]."""
    u = R.user_index(user_id)
    idx, val = R.user_ratings(u)
    if len(idx) == 0:
        return np.zeros(R.n_items)
    return val @ model.matrix[idx, :]


def recommend(model: SimilarityModel, R: InteractionMatrix, user_id, n: int) -> list:
    """Top-n unrated items; ties broken by ascending item id."""
    if n < 1:
        raise ParameterError(f"cutoff must be >= 1, got {n}")
    scores = score(model, R, user_id)
    u = R.user_index(user_id)
    rated, _ = R.user_ratings(u)
    mask = np.ones(R.n_items, dtype=bool)
    mask[rated] = False
    candidates = np.flatnonzero(mask)
    ids = np.array([model.item_ids[c] for c in candidates])
    order = np.lexsort((ids, -scores[candidates]))
    return [model.item_ids[candidates[o]] for o in order[:n]]


# ---------------------------------------------------------------------------
# Checkpoints: header + column-sparse payload
# ---------------------------------------------------------------------------

_MAGIC = b"VRSLIM1\n"
_HEADER = struct.Struct("<8sIIddddqQ")


def save_model(path: str | Path, model: SimilarityModel, feature_dim: int = 0) -> None:
    cfg = model.config
    csc = sp.csc_matrix(model.matrix)
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                _MAGIC,
                model.matrix.shape[0],
                feature_dim,
                cfg.alpha,
                cfg.gamma,
                cfg.learning_rate,
                cfg.relevance_threshold,
                cfg.seed,
                cfg.epochs,
            )
        )
        fh.write(np.asarray(model.item_ids, dtype="<i8").tobytes())
        fh.write(struct.pack("<Q", csc.nnz))
        fh.write(csc.indptr.astype("<i8").tobytes())
        fh.write(csc.indices.astype("<i8").tobytes())
        fh.write(csc.data.astype("<f8").tobytes())


def load_model(path: str | Path) -> SimilarityModel:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size or not data.startswith(_MAGIC):
        raise FormatError(f"{path}: not a similarity checkpoint", offset=0)
    (_, n, _d, alpha, gamma, lr, threshold, seed, epochs) = _HEADER.unpack_from(data)
    pos = _HEADER.size
    item_ids = np.frombuffer(data, dtype="<i8", count=n, offset=pos)
    pos += 8 * n
    (nnz,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    indptr = np.frombuffer(data, dtype="<i8", count=n + 1, offset=pos)
    pos += 8 * (n + 1)
    indices = np.frombuffer(data, dtype="<i8", count=nnz, offset=pos)
    pos += 8 * nnz
    values = np.frombuffer(data, dtype="<f8", count=nnz, offset=pos)
    matrix = sp.csc_matrix((values, indices, indptr), shape=(n, n)).toarray()
    cfg = TrainConfig(
        alpha=alpha,
        gamma=gamma,
        learning_rate=lr,
        epochs=int(epochs),
        seed=int(seed),
        relevance_threshold=threshold,
    )
    return SimilarityModel(matrix=matrix, config=cfg, item_ids=tuple(int(i) for i in item_ids))
