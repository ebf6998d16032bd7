"""Blocked time-series cross-validation, grid search and feed ranking.

The outer loop splits the trimmed time axis into contiguous blocks, holds
one out for testing and discards the samples right after it whose
embedding windows would otherwise reach into the test block. Inside each
training block a nested blocked CV picks the number of lags and the
regularizer from a grid. Per fold the canonical pair is fit, the held-out
correlation is recorded, and feeds are ranked by their mean fold score.

Per-side factorizations switch between a primal (covariance) and a dual
(Gram) route depending on which matrix is smaller; both produce the same
kernel spectrum, so results do not depend on the route. All randomness is
confined to the shuffle control, with per-task seeds derived from the
master seed, the feed id and the task purpose; given identical inputs the
whole analysis is deterministic regardless of worker count.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .corpus import Corpus
from .embedding import embed_columns, pool_excluding
from .exceptions import (
    DegenerateProjection,
    NotEnoughFeeds,
    TooShortForFolds,
    UnknownFeed,
)
from .kcca import (
    KAPPA_FLOOR,
    KccaModel,
    PrimalWeights,
    center_cross,
    center_kernel,
    pearson_correlation,
    project,
    _canonical_pair,
    _canonical_pairs,
    _psd_eigenbasis,
)

# dense conversion threshold for embedded matrices (elements)
_DENSE_LIMIT = 4_000_000


@dataclass(frozen=True)
class Fold:
    """One train/test split with its post-test discard buffer."""

    test_indices: np.ndarray
    train_indices: np.ndarray
    discarded_indices: np.ndarray


@dataclass
class FoldPlan:
    """Contiguous blocked folds over a (possibly gapped) time index list."""

    n_folds: int
    n_lags: int
    axis: np.ndarray
    folds: list[Fold]


@dataclass(frozen=True)
class HyperGrid:
    """Grid of lag counts and regularizers for the nested search."""

    lags: tuple[int, ...] = tuple(range(1, 11))
    kappas: tuple[float, ...] = (1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1e0, 1e1)

    def __post_init__(self):
        if not self.lags or not self.kappas:
            raise ValueError("hyperparameter grid must be non-empty")
        if min(self.lags) < 1:
            raise ValueError("lags must be >= 1")
        if min(self.kappas) < KAPPA_FLOOR:
            raise ValueError(f"kappas must be >= {KAPPA_FLOOR:g}")

    @property
    def max_lag(self) -> int:
        return max(self.lags)


def plan_folds(axis, n_folds: int, n_lags: int) -> FoldPlan:
    """Split a time axis into contiguous test blocks with discard buffers.

    ``axis`` is either the axis length (planned over 0..T_eff-1) or an
    explicit sorted index array, as used for the nested plans over a
    training block with a hole in it. Block lengths differ by at most one.
    For each fold, indices whose time value lies within ``n_lags`` after
    the test block go to the discard buffer: their embedding windows
    overlap the test block, so training on them would leak test data.
    """
    if np.isscalar(axis):
        axis = np.arange(int(axis))
    else:
        axis = np.asarray(axis, dtype=int)
    n = len(axis)
    if n < n_folds * (n_lags + 2):
        raise TooShortForFolds(
            f"axis of length {n} cannot support {n_folds} folds with "
            f"{n_lags} lags (need at least {n_folds * (n_lags + 2)})"
        )
    bounds = np.linspace(0, n, n_folds + 1).astype(int)
    folds = []
    for i in range(n_folds):
        test = axis[bounds[i]:bounds[i + 1]]
        hi = test[-1]
        discard_mask = (axis > hi) & (axis <= hi + n_lags)
        train_mask = np.ones(n, dtype=bool)
        train_mask[bounds[i]:bounds[i + 1]] = False
        train_mask &= ~discard_mask
        folds.append(Fold(test, axis[train_mask], axis[discard_mask]))
    return FoldPlan(n_folds, n_lags, axis, folds)


def _embed_on_axis(x, n_lags: int, trim: int):
    """Embed with ``n_lags`` but align columns to the axis trimmed by ``trim``."""
    emb = embed_columns(x, n_lags)
    return emb if trim == n_lags else emb[:, trim - n_lags:]


def _as_dense_if_small(m):
    if sp.issparse(m) and m.shape[0] * m.shape[1] <= _DENSE_LIMIT:
        return m.toarray()
    return m


def _gram(a) -> np.ndarray:
    k = (a.T @ a).toarray() if sp.issparse(a) else a.T @ a
    return (k + k.T) / 2.0


def _cols(m, idx) -> np.ndarray:
    sub = m[:, idx]
    return sub.toarray() if sp.issparse(sub) else np.asarray(sub, dtype=float)


class _SideFactor:
    """Centered, spectrally factored view of one side's training columns.

    Works in whichever space is smaller: the covariance of the (dense)
    training columns when the feature dimension is at most the sample
    count, the centered Gram matrix otherwise. Either way ``theta`` holds
    the centered-kernel eigenvalues, so the canonical solve downstream is
    identical.
    """

    def __init__(self, data_full, train_idx, gram_fn=None):
        self.data_full = data_full
        self.train_idx = np.asarray(train_idx, dtype=int)
        n = len(self.train_idx)
        d = data_full.shape[0]
        self.primal = d <= n
        if self.primal:
            a = _cols(data_full, self.train_idx)
            self.mean = a.mean(axis=1)
            self.ac = a - self.mean[:, None]
            self.theta, self.basis = _psd_eigenbasis(self.ac @ self.ac.T)
            self.sigma = np.sqrt(self.theta)
        else:
            self.k_full = gram_fn() if gram_fn is not None else _gram(data_full)
            k_train = self.k_full[np.ix_(self.train_idx, self.train_idx)]
            kc, self.means = center_kernel(k_train)
            self.theta, self.basis = _psd_eigenbasis(kc)

    def dual_coef(self, a: np.ndarray) -> np.ndarray:
        if self.primal:
            return self.ac.T @ (self.basis @ (a / self.sigma))
        return self.basis @ a

    def train_projection(self, a: np.ndarray) -> np.ndarray:
        if self.primal:
            return self.ac.T @ self.primal_weight(a)
        return self.basis @ (self.theta * a)

    def primal_weight(self, a: np.ndarray) -> np.ndarray:
        if self.primal:
            return self.basis @ (a * self.sigma)
        w = self.data_full[:, self.train_idx] @ self.dual_coef(a)
        return np.asarray(w).ravel()

    def prepare_cols(self, idx) -> np.ndarray:
        """Centered evaluation data for :meth:`project_prepared`."""
        idx = np.asarray(idx, dtype=int)
        if self.primal:
            return _cols(self.data_full, idx) - self.mean[:, None]
        return center_cross(self.k_full[np.ix_(self.train_idx, idx)], self.means)

    def project_prepared(self, a: np.ndarray, prepared: np.ndarray) -> np.ndarray:
        if self.primal:
            return self.primal_weight(a) @ prepared
        return self.dual_coef(a) @ prepared

    def project_batch(self, a_rows: np.ndarray, prepared: np.ndarray) -> np.ndarray:
        """Project a whole batch of coefficient rows at once: (k, m)."""
        if self.primal:
            return (a_rows * self.sigma) @ self.basis.T @ prepared
        return a_rows @ self.basis.T @ prepared

    def cross_with(self, other: "_SideFactor") -> np.ndarray:
        """Ux^T Uy between the two sides' kernel eigenbases."""
        if self.primal and other.primal:
            left = self.basis / self.sigma
            right = other.basis / other.sigma
            return (left.T @ (self.ac @ other.ac.T)) @ right
        if self.primal:
            return (self.basis / self.sigma).T @ (self.ac @ other.basis)
        if other.primal:
            return other.cross_with(self).T
        return self.basis.T @ other.basis


@dataclass
class FoldOutcome:
    """Everything the report needs from one (feed, fold) fit."""

    fold: int
    n_lags: int
    kappa: float
    correlation: float
    degenerate: bool
    model: KccaModel | None
    w_x: np.ndarray | None  # oriented, W x n_lags, column tau-1 = lag tau
    w_y: np.ndarray | None
    correlogram: list[tuple[int, float | None]]
    inner_scores: np.ndarray | None = field(default=None, repr=False)


class _lazy_gram:
    """Compute a full-axis Gram matrix on first use, then cache it."""

    def __init__(self, data):
        self.data = data
        self.k = None

    def __call__(self) -> np.ndarray:
        if self.k is None:
            self.k = _gram(self.data)
        return self.k


class _FeedData:
    """Per-feed precomputed views shared by every fold and grid point.

    Embedded matrices are built once per lag on the common trimmed axis
    and densified when small; full-axis Gram matrices for the dual route
    are cached lazily.
    """

    def __init__(self, x_raw, pool_raw, grid: HyperGrid, trim: int):
        self.x_raw = _as_dense_if_small(x_raw)
        self.pool_raw = _as_dense_if_small(pool_raw)
        self.trim = trim
        self.grid = grid
        self.pool_trim = self.pool_raw[:, trim:]
        self.emb = {lag: _as_dense_if_small(_embed_on_axis(self.x_raw, lag, trim))
                    for lag in grid.lags}
        self.gram_x = {lag: _lazy_gram(self.emb[lag]) for lag in grid.lags}
        self.gram_y = _lazy_gram(self.pool_trim)


def _pearson_rows(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Row-wise Pearson correlations; zero-variance rows score 0."""
    du = u - u.mean(axis=1, keepdims=True)
    dv = v - v.mean(axis=1, keepdims=True)
    den = np.linalg.norm(du, axis=1) * np.linalg.norm(dv, axis=1)
    num = np.einsum("ij,ij->i", du, dv)
    out = np.zeros(u.shape[0])
    ok = den > 0
    out[ok] = np.clip(num[ok] / den[ok], -1.0, 1.0)
    return out


def _score_fold_primal(data: _FeedData, train_idx, test_idx,
                       kappas: np.ndarray) -> np.ndarray:
    """Score every (lag, kappa) grid point on one fold, sharing work.

    The lag-L embedding consists of the last L blocks of the lag-max
    embedding, so the centered covariance, cross-covariance and test
    columns for every smaller lag are trailing sub-blocks of the lag-max
    ones and need computing only once per fold.
    """
    grid = data.grid
    w_dim = data.x_raw.shape[0]
    emb_max = data.emb[grid.max_lag]
    d_max = emb_max.shape[0]
    scores = np.zeros((len(grid.lags), len(kappas)))

    a_tr = emb_max[:, train_idx]
    mean_x = a_tr.mean(axis=1)
    ac = a_tr - mean_x[:, None]
    y_tr = data.pool_trim[:, train_idx]
    mean_y = y_tr.mean(axis=1)
    yc = y_tr - mean_y[:, None]
    theta_y, p_y = _psd_eigenbasis(yc @ yc.T)  # pool degenerate aborts the fold
    sig_y = np.sqrt(theta_y)
    cov_x = ac @ ac.T
    cov_xy = ac @ yc.T
    x_te = emb_max[:, test_idx] - mean_x[:, None]
    y_te_proj = p_y.T @ (data.pool_trim[:, test_idx] - mean_y[:, None])

    for li, lag in enumerate(grid.lags):
        rows = slice(d_max - w_dim * lag, d_max)
        try:
            theta_x, p_x = _psd_eigenbasis(cov_x[rows, rows])
        except DegenerateProjection:
            continue
        sig_x = np.sqrt(theta_x)
        cross = (p_x / sig_x).T @ cov_xy[rows] @ (p_y / sig_y)
        _, a, b = _canonical_pairs(theta_x, theta_y, cross, kappas)
        u = (a * sig_x) @ (p_x.T @ x_te[rows])
        v = (b * sig_y) @ y_te_proj
        scores[li] = _pearson_rows(u, v)
    return scores


def _score_fold_generic(data: _FeedData, train_idx, test_idx,
                        kappas: np.ndarray) -> np.ndarray:
    grid = data.grid
    scores = np.zeros((len(grid.lags), len(kappas)))
    for li, lag in enumerate(grid.lags):
        try:
            sx = _SideFactor(data.emb[lag], train_idx, data.gram_x[lag])
            sy = _SideFactor(data.pool_trim, train_idx, data.gram_y)
        except DegenerateProjection:
            continue  # counts as zero for every kappa
        cross = sx.cross_with(sy)
        prep_x = sx.prepare_cols(test_idx)
        prep_y = sy.prepare_cols(test_idx)
        _, a, b = _canonical_pairs(sx.theta, sy.theta, cross, kappas)
        scores[li] = _pearson_rows(sx.project_batch(a, prep_x),
                                   sy.project_batch(b, prep_y))
    return scores


def select_best_grid_point(scores: np.ndarray, grid: HyperGrid
                           ) -> tuple[int, float]:
    """Best (n_lags, kappa) by mean score; ties prefer fewer lags, then
    a larger regularizer (simpler models)."""
    best = None
    for li, lag in enumerate(grid.lags):
        for ki, kappa in enumerate(grid.kappas):
            key = (scores[li, ki], -lag, kappa)
            if best is None or key > best[0]:
                best = (key, lag, kappa)
    return best[1], best[2]


def _nested_select(data: _FeedData, train_positions, n_inner: int
                   ) -> tuple[int, float, np.ndarray]:
    grid = data.grid
    inner_plan = plan_folds(np.asarray(train_positions, dtype=int), n_inner,
                            data.trim)
    kappas = np.asarray(grid.kappas)
    emb_max = data.emb[grid.max_lag]
    scores = np.zeros((len(grid.lags), len(kappas)))
    for fold in inner_plan.folds:
        fast = (isinstance(emb_max, np.ndarray)
                and emb_max.shape[0] <= len(fold.train_indices))
        if fast:
            try:
                scores += _score_fold_primal(data, fold.train_indices,
                                             fold.test_indices, kappas)
            except DegenerateProjection:
                pass  # pool side has no variance: fold scores zero
        else:
            scores += _score_fold_generic(data, fold.train_indices,
                                          fold.test_indices, kappas)
    scores /= n_inner
    lag, kappa = select_best_grid_point(scores, grid)
    return lag, kappa, scores


def nested_select(x_feed, pool, train_positions, grid: HyperGrid, trim: int,
                  n_inner: int = 10) -> tuple[int, float, np.ndarray]:
    """Pick (n_lags, kappa) by nested blocked CV over the training block.

    Returns the grid point with the best mean inner-fold test correlation;
    ties prefer fewer lags, then a larger regularizer. The inner folds are
    planned once with the full ``trim`` buffer so every grid point sees
    identical fold boundaries. Degenerate inner folds score zero rather
    than being dropped. Also returns the mean score table.
    """
    data = _FeedData(x_feed, pool, grid, trim)
    return _nested_select(data, train_positions, n_inner)


def canonical_correlogram(weights: PrimalWeights, x_feed, pool,
                          eval_times: np.ndarray
                          ) -> list[tuple[int, float | None]]:
    """Lag-resolved correlation between per-lag feed and pool projections.

    For each lag tau, correlates w_x(tau)^T X(:, t - tau) against
    w_y^T Y(:, t) over the evaluation times (absolute, on the trimmed
    axis so t - tau never underruns). Lags whose series degenerate are
    reported as None.
    """
    eval_times = np.asarray(eval_times, dtype=int)
    n_lags = weights.w_x.shape[1]
    if eval_times.min() < n_lags:
        raise ValueError("evaluation times underrun the earliest usable lag")
    series_y = weights.w_y @ _cols(pool, eval_times)
    out: list[tuple[int, float | None]] = []
    for tau in range(1, n_lags + 1):
        series_x = weights.w_x[:, tau - 1] @ _cols(x_feed, eval_times - tau)
        try:
            rho = pearson_correlation(series_x, series_y)
        except DegenerateProjection:
            rho = None
        out.append((tau, rho))
    return out


def test_correlation(model: KccaModel, kx_cross: np.ndarray,
                     ky_cross: np.ndarray) -> float:
    """Pearson correlation of the projected test series.

    The cross blocks (training rows, test columns) must be centered with
    the training means. Raises DegenerateProjection on zero variance; the
    pipeline scores such folds as 0 and flags them.
    """
    u, v = project(model, kx_cross, ky_cross)
    return pearson_correlation(u, v)


test_correlation.__test__ = False  # not a pytest case, despite the name


def _oriented(w_x: np.ndarray, w_y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # reporting convention: dominant pooled-side weight positive; flipping
    # both sides together leaves every correlation unchanged
    if w_y[np.argmax(np.abs(w_y))] < 0:
        return -w_x, -w_y
    return w_x, w_y


def _fit_feed_fold(data: _FeedData, fold: Fold, fold_index: int,
                   n_inner: int) -> FoldOutcome:
    lag, kappa, inner_scores = _nested_select(data, fold.train_indices, n_inner)
    try:
        sx = _SideFactor(data.emb[lag], fold.train_indices, data.gram_x[lag])
        sy = _SideFactor(data.pool_trim, fold.train_indices, data.gram_y)
    except DegenerateProjection:
        return FoldOutcome(fold_index, lag, kappa, 0.0, True, None, None, None,
                           [], inner_scores)
    lam_raw, a, b = _canonical_pair(sx.theta, sy.theta, sx.cross_with(sy), kappa)
    beta = sy.dual_coef(b)
    if beta[np.argmax(np.abs(beta))] < 0:
        a, b, beta = -a, -b, -beta
    alpha = sx.dual_coef(a)
    u_tr = sx.train_projection(a)
    v_tr = sy.train_projection(b)
    lam = pearson_correlation(u_tr, v_tr)
    norms = (float(np.linalg.norm(u_tr - u_tr.mean())),
             float(np.linalg.norm(v_tr - v_tr.mean())))
    model = KccaModel(alpha, beta, lam, lam_raw, kappa, n_lags=lag,
                      train_indices=fold.train_indices, side_norms=norms)

    degenerate = False
    try:
        c = pearson_correlation(
            sx.project_prepared(a, sx.prepare_cols(fold.test_indices)),
            sy.project_prepared(b, sy.prepare_cols(fold.test_indices)))
    except DegenerateProjection:
        c = 0.0
        degenerate = True

    w_flat = sx.primal_weight(a)
    w_x = w_flat.reshape(lag, -1)[::-1].T  # column tau-1 = lag tau
    w_y = sy.primal_weight(b)
    w_x, w_y = _oriented(w_x, w_y)
    correlogram = canonical_correlogram(
        PrimalWeights(w_x, w_y), data.x_raw, data.pool_raw,
        fold.test_indices + data.trim)
    return FoldOutcome(fold_index, lag, kappa, c, degenerate, model,
                       w_x, w_y, correlogram, inner_scores)


def fit_feed_fold(x_feed, pool, fold: Fold, fold_index: int, grid: HyperGrid,
                  trim: int, n_inner: int = 10) -> FoldOutcome:
    """Nested selection plus final fit and held-out scoring for one fold."""
    return _fit_feed_fold(_FeedData(x_feed, pool, grid, trim), fold,
                          fold_index, n_inner)


# ---------------------------------------------------------------------------
# baselines and controls

def lsa_direction(m) -> np.ndarray:
    """Unit-norm top eigenvector of M M^T, via the smaller side's Gram.

    Sign fixed so the largest-magnitude entry is positive.
    """
    d, n = m.shape
    if d <= n:
        theta, basis = _psd_eigenbasis(_gram(m.T))
        v = basis[:, 0]
    else:
        theta, basis = _psd_eigenbasis(_gram(m))
        u = basis[:, 0]
        v = np.asarray(m @ u).ravel() / np.sqrt(theta[0])
    v = v / np.linalg.norm(v)
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    return v


def lsa_baseline(x_feed, pool, plan: FoldPlan, lags, trim: int
                 ) -> tuple[list[float], list[list[float | None]]]:
    """Per-fold score of the strongest-topic baseline.

    Both directions come from uncentered variance maximization on the
    training columns (feed unembedded, pool trimmed); the fold score is
    the best test correlation over the same lag grid the main method
    searches. Returns fold scores and the per-lag table behind the max.
    """
    pool_trim = pool[:, trim:]
    x_trim = x_feed[:, trim:]
    fold_scores: list[float] = []
    per_lag_all: list[list[float | None]] = []
    for fold in plan.folds:
        eval_times = fold.test_indices + trim
        try:
            v_x = lsa_direction(x_trim[:, fold.train_indices])
            v_y = lsa_direction(pool_trim[:, fold.train_indices])
            series_y = v_y @ _cols(pool, eval_times)
        except DegenerateProjection:
            fold_scores.append(0.0)
            per_lag_all.append([None] * len(lags))
            continue
        per_lag: list[float | None] = []
        for tau in lags:
            series_x = v_x @ _cols(x_feed, eval_times - tau)
            try:
                per_lag.append(pearson_correlation(series_x, series_y))
            except DegenerateProjection:
                per_lag.append(None)
        defined = [r for r in per_lag if r is not None]
        fold_scores.append(max(defined) if defined else 0.0)
        per_lag_all.append(per_lag)
    return fold_scores, per_lag_all


def _sample_permutation(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform permutation, resampled if it comes out as the identity."""
    perm = rng.permutation(n)
    identity = np.arange(n)
    while n > 5 and np.array_equal(perm, identity):
        perm = rng.permutation(n)
    return perm


def shuffle_control(corpus: Corpus, feed_id: str, seed, grid: HyperGrid | None = None,
                    n_folds: int = 10, n_inner: int = 10) -> list[FoldOutcome]:
    """Rerun the full pipeline for one feed with its columns time-shuffled.

    Only the feed's own matrix is permuted; the pool stays untouched, so
    any surviving correlation estimates the null score distribution.
    """
    grid = grid or HyperGrid()
    rng = np.random.default_rng(seed)
    perm = _sample_permutation(rng, corpus.T)
    x_shuffled = corpus.feed(feed_id).matrix[:, perm]
    pool = pool_excluding(corpus, feed_id).matrix
    trim = grid.max_lag
    plan = plan_folds(corpus.T - trim, n_folds, trim)
    data = _FeedData(x_shuffled, pool, grid, trim)
    return [_fit_feed_fold(data, fold, i, n_inner)
            for i, fold in enumerate(plan.folds)]


# ---------------------------------------------------------------------------
# reports and ranking

@dataclass
class FeedReport:
    """Per-feed cross-validation summary."""

    feed_id: str
    fold_correlations: list[float]
    percentiles: dict[str, float]
    chosen: list[dict]
    correlogram: list[tuple[int, float | None]]
    top_terms: list[tuple[str, float, int]]
    degenerate_folds: list[int]
    lsa_fold_scores: list[float] | None = None
    lsa_per_lag: list[list[float | None]] | None = None
    shuffle_fold_scores: list[float] | None = None

    @property
    def mean_correlation(self) -> float:
        return float(np.mean(self.fold_correlations))


@dataclass
class Ranking:
    """Feeds ordered by mean fold correlation, ties by feed id."""

    entries: list[tuple[str, float]]


def rank_feeds(reports: list[FeedReport]) -> Ranking:
    counts = {len(r.fold_correlations) for r in reports}
    if len(counts) > 1:
        raise ValueError(f"reports disagree on fold count: {sorted(counts)}")
    entries = sorted(((r.feed_id, r.mean_correlation) for r in reports),
                     key=lambda e: (-e[1], e[0]))
    return Ranking(entries)


def emit_trend(weights: PrimalWeights, x_feed, pool, eval_times: np.ndarray
               ) -> tuple[np.ndarray, np.ndarray]:
    """Canonical trend and its prediction over the given absolute times.

    Both series are normalized to unit sum of squares; their Pearson
    correlation equals the fold test correlation on the same indices.
    """
    eval_times = np.asarray(eval_times, dtype=int)
    n_lags = weights.w_x.shape[1]
    if eval_times.min() < n_lags:
        raise ValueError("evaluation times underrun the earliest usable lag")
    y = weights.w_y @ _cols(pool, eval_times)
    yhat = np.zeros(len(eval_times))
    for tau in range(1, n_lags + 1):
        yhat += weights.w_x[:, tau - 1] @ _cols(x_feed, eval_times - tau)
    ny = np.linalg.norm(y)
    nyhat = np.linalg.norm(yhat)
    if ny == 0.0 or nyhat == 0.0:
        raise DegenerateProjection("trend series has zero energy")
    return y / ny, yhat / nyhat


# ---------------------------------------------------------------------------
# full pipeline

@dataclass
class AnalysisResult:
    """Complete output of :func:`analyze` for one corpus."""

    n_folds: int
    grid: HyperGrid
    seed: int
    trim: int
    n_inner: int
    reports: list[FeedReport]
    ranking: Ranking
    fold_outcomes: dict[str, list[FoldOutcome]]
    plan: FoldPlan


def derive_seed(master: int, feed_id: str, fold: int, purpose: str
                ) -> np.random.SeedSequence:
    """Stable per-task seed from the master seed, feed, fold and purpose."""
    fh = int.from_bytes(hashlib.sha256(feed_id.encode()).digest()[:4], "big")
    ph = int.from_bytes(hashlib.sha256(purpose.encode()).digest()[:4], "big")
    return np.random.SeedSequence([int(master), fh, int(fold), ph])


_CTX: dict = {}
_FEED_CACHE: dict = {}


def _init_worker(context):
    global _CTX, _FEED_CACHE
    _CTX = context
    _FEED_CACHE = {}


def _feed_data(feed_id: str) -> _FeedData:
    if feed_id not in _FEED_CACHE:
        _FEED_CACHE[feed_id] = _FeedData(_CTX["x"][feed_id], _CTX["pool"][feed_id],
                                         _CTX["grid"], _CTX["trim"])
    return _FEED_CACHE[feed_id]


def _run_task(task):
    kind, fi = task[0], task[1]
    ctx = _CTX
    feed_id = ctx["feed_ids"][fi]
    if kind == "ct":
        fold_i = task[2]
        return _fit_feed_fold(_feed_data(feed_id), ctx["plan"].folds[fold_i],
                              fold_i, ctx["n_inner"])
    if kind == "lsa":
        data = _feed_data(feed_id)
        return lsa_baseline(data.x_raw, data.pool_raw, ctx["plan"],
                            ctx["grid"].lags, ctx["trim"])
    if kind == "shuffle":
        return shuffle_control(ctx["corpus"], feed_id,
                               derive_seed(ctx["seed"], feed_id, 0, "shuffle"),
                               ctx["grid"], ctx["n_folds"], ctx["n_inner"])
    raise ValueError(f"unknown task kind {kind!r}")


def _top_terms(w_x: np.ndarray, terms: list[str], k: int
               ) -> list[tuple[str, float, int]]:
    """Strongest terms of a convolution, by |weight| summed over lags.

    Each row reports the term's weight at its strongest lag, normalized by
    the overall strongest weight so the top row is +-1.0.
    """
    importance = np.abs(w_x).sum(axis=1)
    order = sorted(range(len(terms)), key=lambda w: (-importance[w], terms[w]))
    rows = []
    for w in order[:k]:
        if importance[w] == 0.0:
            break
        tau = int(np.argmax(np.abs(w_x[w]))) + 1
        rows.append((terms[w], float(w_x[w, tau - 1]), tau))
    if rows:
        top = max(abs(r[1]) for r in rows)
        if top > 0:
            rows = [(t, v / top, tau) for t, v, tau in rows]
    return rows


def mean_correlogram(correlograms: list[list[tuple[int, float | None]]]
                     ) -> list[tuple[int, float | None]]:
    """Fold-mean correlogram; lags undefined everywhere stay None."""
    max_lag = max((len(c) for c in correlograms), default=0)
    out: list[tuple[int, float | None]] = []
    for tau in range(1, max_lag + 1):
        vals = [dict(c).get(tau) for c in correlograms]
        vals = [v for v in vals if v is not None]
        out.append((tau, float(np.mean(vals)) if vals else None))
    return out


def analyze(corpus: Corpus, grid: HyperGrid | None = None, n_folds: int = 10,
            seed: int = 0, feed_ids: list[str] | None = None,
            with_lsa: bool = False, with_shuffle: bool = False,
            jobs: int = 1, n_inner: int = 10, top_k: int = 10
            ) -> AnalysisResult:
    """Run the whole trend-setter pipeline over a corpus.

    Optionally restricts scoring to ``feed_ids`` (pools are always built
    from the full corpus). ``jobs`` > 1 fans the per-(feed, fold) tasks
    out to worker processes; the reduction order is fixed, so reports are
    identical for any worker count.
    """
    corpus.validate()
    if corpus.F < 2:
        raise NotEnoughFeeds(f"analysis needs at least 2 feeds, got {corpus.F}")
    grid = grid or HyperGrid()
    trim = grid.max_lag
    plan = plan_folds(corpus.T - trim, n_folds, trim)

    if feed_ids is None:
        feed_ids = corpus.feed_ids
    else:
        unknown = set(feed_ids) - set(corpus.feed_ids)
        if unknown:
            raise UnknownFeed(f"no feed named {sorted(unknown)!r}")

    context = {
        "corpus": corpus,
        "feed_ids": feed_ids,
        "x": {f: corpus.feed(f).matrix for f in feed_ids},
        "pool": {f: pool_excluding(corpus, f).matrix for f in feed_ids},
        "plan": plan,
        "grid": grid,
        "trim": trim,
        "n_folds": n_folds,
        "n_inner": n_inner,
        "seed": seed,
    }
    tasks = [("ct", fi, fold_i)
             for fi in range(len(feed_ids)) for fold_i in range(n_folds)]
    if with_lsa:
        tasks += [("lsa", fi) for fi in range(len(feed_ids))]
    if with_shuffle:
        tasks += [("shuffle", fi) for fi in range(len(feed_ids))]

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                 initargs=(context,)) as executor:
            results = list(executor.map(_run_task, tasks))
    else:
        _init_worker(context)
        results = [_run_task(t) for t in tasks]

    by_task = dict(zip(tasks, results))
    reports = []
    fold_outcomes: dict[str, list[FoldOutcome]] = {}
    for fi, feed_id in enumerate(feed_ids):
        outcomes = [by_task[("ct", fi, fold_i)] for fold_i in range(n_folds)]
        fold_outcomes[feed_id] = outcomes
        corrs = [o.correlation for o in outcomes]
        p25, p50, p75 = np.percentile(corrs, [25, 50, 75])
        usable = [o for o in outcomes if o.w_x is not None]
        top = []
        if usable:
            best = max(usable, key=lambda o: (o.correlation, -o.fold))
            top = _top_terms(best.w_x, corpus.vocabulary.terms, top_k)
        report = FeedReport(
            feed_id=feed_id,
            fold_correlations=corrs,
            percentiles={"p25": float(p25), "p50": float(p50), "p75": float(p75)},
            chosen=[{"fold": o.fold, "n_lags": o.n_lags, "kappa": o.kappa}
                    for o in outcomes],
            correlogram=mean_correlogram([o.correlogram for o in outcomes]),
            top_terms=top,
            degenerate_folds=[o.fold for o in outcomes if o.degenerate],
        )
        if with_lsa:
            scores, per_lag = by_task[("lsa", fi)]
            report.lsa_fold_scores = scores
            report.lsa_per_lag = per_lag
        if with_shuffle:
            report.shuffle_fold_scores = [
                o.correlation for o in by_task[("shuffle", fi)]]
        reports.append(report)

    return AnalysisResult(n_folds, grid, seed, trim, n_inner, reports,
                          rank_feeds(reports), fold_outcomes, plan)
