"""Reference predictors: popularity, first-order Markov chain, linear RNN.

All baselines plug into evaluation through the same score_items interface
as the model scorers. The linear RNN is not a separate implementation: it
is an RLBL configuration with window width 1 and identity behavior
matrices, trained by the shared trainer.
"""

import numpy as np

from rlbl.model import RlblParams, init_rlbl_params


class PopModel:
    """Scores every item by its training-segment count, behavior-agnostic."""

    def __init__(self, corpus=None):
        self.item_counts = None
        if corpus is not None:
            self.fit(corpus)

    def fit(self, corpus):
        counts = np.zeros(corpus.n_items, dtype=np.int64)
        for u in range(corpus.n_users):
            seq = corpus.sequences[u]
            train = seq.items[: corpus.train_end[u]]
            np.add.at(counts, train, 1)
        if counts.sum() == 0:
            raise ValueError("empty training segment")
        self.item_counts = counts
        return self

    def score_items(self, seq, k, behavior):
        return self.item_counts.astype(np.float64)


class MarkovModel:
    """Row-normalized item-to-item transition frequencies over the training
    segments, with a popularity fallback for unseen previous items."""

    def __init__(self, corpus=None):
        self.transitions = None
        self.fallback = None
        self.row_observed = None
        if corpus is not None:
            self.fit(corpus)

    def fit(self, corpus):
        n = corpus.n_items
        counts = np.zeros((n, n), dtype=np.float64)
        for u in range(corpus.n_users):
            seq = corpus.sequences[u]
            train = seq.items[: corpus.train_end[u]]
            for a, b in zip(train[:-1], train[1:]):
                counts[a, b] += 1.0
        row_sums = counts.sum(axis=1)
        self.row_observed = row_sums > 0
        trans = np.zeros_like(counts)
        trans[self.row_observed] = counts[self.row_observed] / row_sums[self.row_observed, None]
        self.transitions = trans
        pop = PopModel(corpus).item_counts.astype(np.float64)
        total = pop.sum()
        self.fallback = pop / total if total > 0 else pop
        return self

    def score_items(self, seq, k, behavior):
        prev = int(seq.items[k - 1]) if k >= 1 else None
        if prev is None or not self.row_observed[prev]:
            return self.fallback.copy()
        return self.transitions[prev].copy()


def linear_rnn_as_rlbl(corpus, d, seed=0):
    """RLBL configuration equivalent to a linear RNN: n=1, identity M_b.

    Train it with train_behavior_mats=False to keep the behavior matrices
    at identity.
    """
    params = init_rlbl_params(
        corpus.n_users, corpus.n_items, corpus.n_behaviors, d=d, n=1, seed=seed
    )
    params.M = np.broadcast_to(np.eye(d), params.M.shape).copy()
    return params
