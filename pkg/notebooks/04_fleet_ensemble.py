# ---
# jupyter:
#   jupytext:
#     text_representation:
#       extension: .py
#       format_name: percent
#       format_version: '1.3'
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # Fleet ensembles over CAV penetration
#
# A hundred vehicles, CAVs placed at random.  Five seeds per level keep this
# quick; the acceptance suite uses twenty.

# %%
from dataclasses import replace

import matplotlib.pyplot as plt
import numpy as np

from cavpair import FleetScenario, seed_ensemble

levels = np.round(np.arange(0, 1.01, 0.1), 1)
template = FleetScenario()
rows = {}
for conn in (True, False):
    sc = replace(template, connectivity_enabled=conn)
    rows[conn] = [seed_ensemble(sc, p, n_seeds=5).summary() for p in levels]

# %%
for conn, label in ((True, "connected"), (False, "no connectivity")):
    mean = np.array([r["gamma_bar_mean"] for r in rows[conn]])
    std = np.array([r["gamma_bar_std"] for r in rows[conn]])
    plt.errorbar(levels, mean, std, capsize=3, label=label)
plt.axhline(1, color="k", lw=0.5)
plt.yscale("log")
plt.xlabel("penetration")
plt.ylabel("mean Gamma")
plt.legend()
plt.show()
