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
# # Frequency response of a paired packet
#
# A single human driver amplifies slow speed oscillations.  A chain of them
# compounds the effect, and the CAV pair wrapped around the chain can undo it.

# %%
from dataclasses import replace

import matplotlib.pyplot as plt
import numpy as np

from cavpair import PacketScenario, frequency_response, linearize, link_tf, string_stability_margin

lin = linearize(PacketScenario(n_hv=4))
lin

# %% [markdown]
# One human link at its equilibrium gradient, and at the rounded value 0.7.

# %%
w = np.linspace(0.01, 3, 600)
for kappa in (lin.kappa_hv, 0.7):
    plt.plot(w, np.abs(link_tf("hv", 1j * w, replace(lin, kappa_hv=kappa))),
             label=f"kappa_h = {kappa:.3f}")
plt.axhline(1, color="k", lw=0.5)
plt.xlabel("omega [rad/s]")
plt.ylabel("|T_hv|")
plt.legend()
plt.show()

# %% [markdown]
# Head-to-tail gain for growing chains, with the default cross gains.

# %%
for n in (4, 7, 8, 9):
    packet = linearize(PacketScenario(n_hv=n))
    fr = frequency_response(packet)
    peak, at = string_stability_margin(packet)
    plt.plot(fr.omega, fr.magnitude, label=f"N={n}, sup {peak:.4f} at {at:.2f}")
plt.axhline(1, color="k", lw=0.5)
plt.xlim(0, 3)
plt.xlabel("omega [rad/s]")
plt.ylabel("|G|")
plt.legend()
plt.show()
