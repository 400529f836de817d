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
# # Stability chart in the cross-gain plane
#
# Each cell of the grid is classified as plant unstable, plant stable but
# string unstable, or stable.  The traced boundaries should hug the edges of
# the coloured regions.

# %%
import matplotlib.pyplot as plt
import numpy as np

from cavpair import ChartSpec, PacketScenario, build_chart, linearize
from cavpair.charts import PLANT_UNSTABLE, STABLE, STRING_UNSTABLE

lin = linearize(PacketScenario(n_hv=4))
grid, curves = build_chart(lin, ChartSpec(n_tail=101, n_head=101))
grid.stable_count

# %%
codes = {PLANT_UNSTABLE: 0, STRING_UNSTABLE: 1, STABLE: 2}
img = np.vectorize(codes.get)(grid.verdicts)
extent = [grid.beta_tail[0], grid.beta_tail[-1], grid.beta_head[0], grid.beta_head[-1]]
plt.imshow(img, origin="lower", extent=extent, cmap="Greys", alpha=0.6, aspect="auto")
for c in curves:
    style = {"hopf": "r-", "string_zero": "b--"}.get(c.kind, "g-")
    plt.plot(c.points[:, 0], c.points[:, 1], style, lw=0.6)
plt.plot(0.8, 0.1, "k*", ms=10)
plt.xlim(extent[:2])
plt.ylim(extent[2:])
plt.xlabel("beta_cross (tail)")
plt.ylabel("beta_cross (head)")
plt.show()

# %% [markdown]
# The region as the human chain grows.

# %%
for n in range(4, 10):
    g, _ = build_chart(linearize(PacketScenario(n_hv=n)), ChartSpec(n_tail=61, n_head=61), False)
    print(n, g.stable_count)
