"""
A small model comparison
========================

The full study runs 1000 trials; 20 are enough to see the ordering. Each
row is an estimator, each column an error metric against the truth, and
the value is the mean over trials. The K-fold barycenter ("cv") should
sit at or below plain NNLS for the transport metric.
"""

from fodfemd.experiments import ExperimentConfig, run_model_comparison

cfg = ExperimentConfig(trials=20, seed=1, bayes_p=60, K_folds=10, posterior_draws=20)
table = run_model_comparison(cfg)
print(table.to_csv())

for row in ("nnls", "cv"):
    print(f"{row:>5}: EMD {table.cell(row, 'EMD'):.3f} +- {table.cell_se(row, 'EMD'):.3f}")
