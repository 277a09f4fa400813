"""Slot order matters: LSTM vs flattened MLP on drifting sequences.

In drifting mode the generator hides the risk-bearing vector in the most
recent slot and noises up older slots more the further back they sit. A
flattened model sees all slots as exchangeable columns; the recurrent
model can learn to trust recency.
"""

import numpy as np

from hazardnet.data_io import SyntheticSpec, synthesize_cohort
from hazardnet.metrics import RiskScoreSet, harrell_c_index
from hazardnet.models import risk_scores
from hazardnet.training import ModelSpec, TrainConfig, stratified_split, train

SEED = 0

spec = SyntheticSpec(n=1200, dimension=4, beta=np.full(4, 0.6), baseline_rate=0.004,
                     censor_rate=0.002, seed=SEED, sequence_mode="drifting",
                     sequence_length=4, drift_noise=1.5)
cohort, _ = synthesize_cohort(spec)
rng = np.random.default_rng([SEED, 5])
tr, va, te = stratified_split(cohort.times(), cohort.events(), (0.7, 0.1, 0.2), rng)
train_c, val_c, test_c = cohort.subset(tr), cohort.subset(va), cohort.subset(te)

results = {}
for kind in ("mlp", "lstm"):
    config = TrainConfig(learning_rate=3e-3, max_epochs=40, early_stop_patience=8,
                         dropout_rate=0.6, batch_size=256, seed=SEED)
    ms = ModelSpec(kind, hidden=(32,), hidden_size=32)
    model = ms.build(4, 4, 0.6, np.random.default_rng([SEED, kind == "lstm", 1]))
    model, hist = train(model, train_c, val_c, config,
                        rng=np.random.default_rng([SEED, kind == "lstm", 2]))
    s = risk_scores(model, test_c)
    results[kind] = harrell_c_index(RiskScoreSet(s, test_c.times(), test_c.events()))
    print(f"{kind}: {ms.param_count(4, 4)} parameters, "
          f"best epoch {hist.best_epoch}, test C {results[kind]:.4f}")

print(f"\nlstm - mlp concordance gap: {results['lstm'] - results['mlp']:+.4f}")
print("(averaged over seeds the gap stays positive; one seed is noisy)")
