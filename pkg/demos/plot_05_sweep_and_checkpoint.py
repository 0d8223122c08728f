"""
Sweeping k and saving the model
===============================

The pruning level only affects inference, so one trained model serves
the whole sweep. Checkpoints reload to bit-identical predictions.
"""

import tempfile
from pathlib import Path

import numpy as np

from mmhcl import TrainConfig, load_checkpoint, predict_batch, save_checkpoint, standard_benchmark, train
from mmhcl.evaluation import topk_sweep

spec, catalog, ds = standard_benchmark(seed=2)
model = train(ds, catalog, TrainConfig(epochs=30, seed=2))

for k, rep in topk_sweep(model, ds, [1, 2, 3, 5, 10, 20]):
    print(f"k={k:>4}  mix {rep.accuracy['mix']:6.2f}  A_all+B_all {rep.accuracy['A_all+B_all']:6.2f}")

# %%
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "model.ckpt"
    save_checkpoint(model, path)
    again = load_checkpoint(path)
    probe = ds.test[:100]
    same = np.array_equal(predict_batch(model, probe).fused, predict_batch(again, probe).fused)
    print(f"checkpoint {path.stat().st_size} bytes, identical predictions: {same}")
