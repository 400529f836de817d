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
# # A paired packet following a speed dip
#
# Five human drivers sit between the two CAVs.  With the cross gains switched
# off both CAVs behave as plain ACC vehicles.

# %%
from dataclasses import replace

import matplotlib.pyplot as plt

from cavpair import PacketScenario, fleet_metrics, simulate_packet
from cavpair.models import HEAD_CAV, TAIL_CAV

paired = simulate_packet(PacketScenario(n_hv=5))
acc = simulate_packet(PacketScenario(n_hv=5, cav_tail=replace(TAIL_CAV, beta_cross=0.0),
                                     cav_head=replace(HEAD_CAV, beta_cross=0.0)))

# %%
fig, axes = plt.subplots(1, 2, sharey=True, figsize=(10, 4))
for ax, traj, title in zip(axes, (paired, acc), ("paired", "ACC")):
    ax.plot(traj.times, traj.v_lead, "k", lw=2, label="lead")
    for i in range(traj.n_followers):
        ax.plot(traj.times, traj.v[:, i], lw=0.8, label=traj.roles[i] if i in (0, 6) else None)
    ax.set_title(f"{title}: Gamma_0 = {fleet_metrics(traj).gamma_0:.2f}")
    ax.set_xlim(0, 40)
    ax.set_xlabel("t [s]")
axes[0].set_ylabel("v [m/s]")
axes[0].legend()
plt.show()
