"""
Ablations and baselines on the synthetic benchmark
==================================================

Trains once and reports accuracy per test scenario for the FC baseline,
the three stages of the model, average fusion and the confidence-max
dual model.
"""

from mmhcl import TrainConfig, standard_benchmark, train
from mmhcl.evaluation import ablation_suite, comparison_suite, reports_to_text

spec, catalog, ds = standard_benchmark(seed=0)
cfg = TrainConfig(epochs=30, seed=0)
model = train(ds, catalog, cfg)

# %%
# B: linear classifiers; B+O: embedding-space ensembles with averaged
# logits; B+O+D: dominant modality only; B+O+D+C: full fusion.
print(reports_to_text(ablation_suite(ds, catalog, cfg, model=model)))

# %%
print(reports_to_text(comparison_suite(model, ds)))
