# Five-fold cross-validation with confidence intervals, then a small
# hyperparameter sweep. Both are deterministic under a fixed seed and
# jobs-invariant (worker count never changes the numbers).

import numpy as np

from hazardnet.data_io import SyntheticSpec, synthesize_cohort
from hazardnet.training import ModelSpec, TrainConfig, cross_validate, grid_search

spec = SyntheticSpec(n=500, dimension=3, beta=np.array([0.7, -0.4, 0.0]),
                     baseline_rate=0.004, censor_rate=0.0017, seed=9,
                     sequence_length=1)
cohort, _ = synthesize_cohort(spec)

config = TrainConfig(learning_rate=0.02, max_epochs=15, early_stop_patience=5,
                     dropout_rate=0.0, full_risk_sets=True, seed=3, folds=5)
result = cross_validate(cohort, ModelSpec("linear"), config)

print("5-fold cross-validation, linear model")
for rep in result.reports:
    folds = " ".join(f"{v:.3f}" for v in rep.fold_values)
    print(f"  {rep.metric:10}  {rep.mean:.3f} +/- {rep.ci_half_width:.3f}   folds: {folds}")

# sweep learning rate and hidden width for the mlp; cells that diverge are
# kept on the leaderboard as failed instead of aborting the sweep
grid = {"learning_rate": [3e-3, 1e-2], "hidden": [(8,), (16,)]}
mlp_config = TrainConfig(learning_rate=1e-3, max_epochs=15, early_stop_patience=5,
                         dropout_rate=0.0, batch_size=256, seed=3)
best, board = grid_search(cohort, grid, ModelSpec("mlp"), mlp_config)

print("\ngrid search leaderboard (mlp)")
for cell in board:
    params = ", ".join(f"{k}={v}" for k, v in cell.params)
    status = "failed" if cell.failed else f"val_loss {cell.val_loss:.4f}  val_C {cell.val_c_index:.3f}"
    print(f"  {params:40} {status}")
print(f"\nselected: {dict(best.params)}")
