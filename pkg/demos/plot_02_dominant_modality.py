"""
Which modality should lead?
===========================

For a complete sample both ensembles make predictions. Each modality's
uncertainty combines how much its own modules disagree with how flat its
averaged prediction is compared to the other modality. The modality with
lower uncertainty becomes dominant.
"""

import numpy as np

from mmhcl import TrainConfig, standard_benchmark, train
from mmhcl.dmss import assess
from mmhcl.evaluation import uncertainty_dump
from mmhcl.osrs import ensemble_predict

spec, catalog, ds = standard_benchmark(seed=1)
model = train(ds, catalog, TrainConfig(epochs=30, seed=1))

# %%
# A complete sample whose class only modality B saw during training.
s = next(t for t in ds.test if t.is_complete and t.label in ds.partition.seen_b)
rep = assess(
    ensemble_predict(model.ensemble_a, s.feat_a, catalog),
    ensemble_predict(model.ensemble_b, s.feat_b, catalog),
)
for mod in "AB":
    print(f"{mod}: module entropies {np.round(rep.h_modules[mod], 3)}  Inc {rep.inc[mod]:.3f}  dif {rep.dif[mod]:.3f}  u {rep.u[mod]:.3f}")
print("dominant:", rep.dominant)

# %%
# Over many complete samples, the modality that saw the class usually has lower u.
rows = uncertainty_dump(model, [t for t in ds.test if t.is_complete], 200, seed=1)
hits = [
    (r["u_A"] < r["u_B"]) == (r["label"] in ds.partition.seen_a)
    for r in rows
]
print(f"seeing modality has lower u in {100 * np.mean(hits):.1f}% of 200 samples")
