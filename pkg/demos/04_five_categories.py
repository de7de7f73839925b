# %% [markdown]
# Five income ranges with the Dirichlet model.
#
# Incomes are spread wider than in the binary demo so that every range
# ([54,135), [135,405), [405,1080), [1080,2700), [2700,inf)) has users.

# %%
import math
from dataclasses import replace

from incomenet.data_model import FIVE_CLASS_SCHEMA
from incomenet.evaluation import evaluate_multiclass, make_splits
from incomenet.synthgen import SynthConfig, calibrate_homophily, generate

cfg = SynthConfig(n_users=10_000, seed=0, income_mu=math.log(600), income_sigma=1.3)
h, r = calibrate_homophily(cfg, FIVE_CLASS_SCHEMA)
g = generate(replace(cfg, homophily=h), FIVE_CLASS_SCHEMA).to_graph()
print(f"h={h:.3f} r_s={r:.3f}")

rep = evaluate_multiclass(g, make_splits(g, kfold=5, seed=0))
for i, (auc, n) in enumerate(zip(rep.aucs, rep.support), start=1):
    lo, hi = FIVE_CLASS_SCHEMA.ranges[i - 1]
    print(f"R{i} [{lo:g}, {hi:g}): support={n:4d}  one-vs-rest AUC={auc:.3f}")
print(f"argmax accuracy={rep.overall_accuracy:.3f}  random={rep.random_accuracy:.3f}  majority={rep.majority_accuracy:.3f}")
