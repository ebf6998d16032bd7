"""Recover a planted trend from the two-feed toy corpus.

Feed X reports a latent story three hours before feed Y. The pipeline
should pick lag 3, put its pooled-side weight on Y's trend-carrying terms
(Cloud, Ash) and its feed-side weight on X's (Volcano, Airplane), and the
canonical correlogram should spike at tau = 3.

Run:  python demos/toy_trend_recovery.py
"""

import numpy as np

from ctrend import HyperGrid, ToyConfig, analyze, generate_toy

corpus = generate_toy(ToyConfig(T=2000, gamma=0.9, lag=3, seed=42))
print(f"corpus: feeds={corpus.feed_ids}, W={corpus.W} terms, T={corpus.T} hourly bins")
print(f"vocabulary: {corpus.vocabulary.terms}")

result = analyze(corpus, HyperGrid(), seed=42)

print("\nranking (mean held-out correlation across 10 folds):")
for rank, (feed, score) in enumerate(result.ranking.entries, start=1):
    print(f"  {rank}. {feed:8s} {score:+.3f}")

report = result.reports[0]  # feed X
print(f"\nfeed X chose n_lags={report.chosen[0]['n_lags']}, "
      f"kappa={report.chosen[0]['kappa']:g} on fold 0")

print("\ncanonical correlogram for feed X (mean over folds):")
for tau, rho in report.correlogram:
    bar = "#" * int(abs(rho or 0.0) * 40)
    print(f"  tau={tau}h  rho={rho:+.3f}  {bar}")

best = max((o for o in result.fold_outcomes["X"] if o.w_x is not None),
           key=lambda o: o.correlation)
print("\npooled-side weights w_y (trend lives on Cloud and Ash):")
for term, w in zip(corpus.vocabulary.terms, best.w_y):
    print(f"  {term:10s} {w:+.3f}")

print("\nfeed-side weights w_x at the chosen lags (rows: terms, cols: tau):")
header = "  ".join(f"tau={t}" for t in range(1, best.n_lags + 1))
print(f"  {'':10s} {header}")
for term, row in zip(corpus.vocabulary.terms, best.w_x):
    cells = "  ".join(f"{v:+.3f}" for v in row)
    print(f"  {term:10s} {cells}")

peak = max(((rho, tau) for tau, rho in report.correlogram if rho is not None))
print(f"\npeak at tau = {peak[1]} hours: feed X leads the pool by {peak[1]}h")
