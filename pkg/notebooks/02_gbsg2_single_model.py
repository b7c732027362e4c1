# %% [markdown]
# Train one single-network model on the bundled GBSG2 data and score it.

# %%
import numpy as np

from tabsurv.dataset import SplitSpec, load_gbsg2, prepare_splits
from tabsurv.training import TrainConfig, evaluate, train

train_set, val_set, test_set = prepare_splits(load_gbsg2(), SplitSpec(seed=0))
train_set.n_rows, val_set.n_rows, test_set.n_rows
train_set.feature_names

# %%
cfg = TrainConfig(head="LS", n_layers=2, hidden=128, layer_norm=True, lr=3e-4, r=5, batch_size=32,
                  grid_fraction=0.1, patience=16, seed=0)
bundle, log = train(train_set, val_set, cfg)
print("epochs", log.epochs_trained, "best epoch", log.best_epoch, "val C", round(log.best_val_cindex, 4))

# %%
report = evaluate(bundle, test_set, with_ks=True)
report

# %%
# Predicted survival for the first three test patients at a few grid points.
curves = bundle.predict(test_set.features[:3])
cols = np.linspace(0, bundle.grid.m - 1, 5).astype(int)
print(np.round(bundle.grid.taus[cols]))
print(np.round(curves.survival[:, cols], 3))
