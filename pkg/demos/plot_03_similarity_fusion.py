"""
Fusing with class similarity
============================

The auxiliary modality's logits are passed through a pruned class
similarity matrix before being added to the dominant logits, so support
for a class also counts, scaled down, for its close relatives.
"""

import numpy as np

from mmhcl import ClassCatalog, class_similarity, fuse, prune_topk

# %%
# Three classes; "wolf" and "dog" are close, "car" is unrelated.
catalog = ClassCatalog(("wolf", "dog", "car"), np.array([[1.0, 0.2, 0.0], [0.9, 0.4, 0.0], [0.0, 0.1, 1.0]]))
sim = prune_topk(class_similarity(catalog), k=2)
print(np.round(sim.values, 3))

# %%
# The dominant modality is torn between wolf and car; the auxiliary one
# never saw wolves and votes dog. Plain addition picks dog, fusion through
# the similarity matrix picks wolf.
lo_dom = np.array([4.0, 0.0, 3.8])
lo_aux = np.array([0.0, 5.0, 0.0])
print("plain sum ->", catalog.names[int(np.argmax(lo_dom + lo_aux))])
d = fuse(lo_dom, lo_aux, sim, sim, u_a=0.4, u_b=1.6)
print("fused     ->", catalog.names[d.predicted_class], np.round(d.lo_fused, 2))

# %%
# With k=1 only the diagonal survives and fusion is plain addition.
identity = prune_topk(class_similarity(catalog), 1)
d1 = fuse(lo_dom, lo_aux, identity, identity, 0.4, 1.6)
print("k=1       ->", catalog.names[d1.predicted_class])
