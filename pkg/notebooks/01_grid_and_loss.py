# %% [markdown]
# Time grid and histogram loss on a tiny hand example.

# %%
import numpy as np

from tabsurv.survhl import SurvHLConfig, gaussian_weights, survhl_row
from tabsurv.timegrid import build_grid, interval_index, probs_to_survival

times = np.array([2.0, 5.0, 5.0, 7.0, 9.0, 11.0])
events = np.array([1, 1, 0, 1, 0, 1])
grid = build_grid(times, events)
grid.taus                      # unique uncensored times: 2, 5, 7, 11
interval_index(grid, 8.0)      # 8 falls in [7, 11) -> bin 3
interval_index(grid, 1.0)      # before the first grid point -> 0

# %%
# Gaussian smoothing spreads an event's target over neighbouring bins.
for r in (1, 3, 5):
    print(r, np.round(gaussian_weights(2, r, grid.m), 4))

# %%
# A model that puts 80% on the right bin pays less than a uniform one,
# and a uniform curve always costs log(m) whatever the smoothing width.
sharp = probs_to_survival([0.1, 0.8, 0.05, 0.05])
flat = probs_to_survival(np.full(grid.m, 1 / grid.m))
for r in (1, 3):
    cfg = SurvHLConfig(r=r)
    print(r, survhl_row(sharp, 2, 1, cfg), survhl_row(flat, 2, 1, cfg), np.log(grid.m))

# %%
# Censored rows only ask that survival stays high up to their bin.
survhl_row(sharp, 2, 0), -np.log(sharp.survival[1])
