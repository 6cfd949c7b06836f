"""
Three ways a nudge can wear off
===============================

Each simulated user responds to the number of nudges received in the last
few days through a mix of three curves: f decays from the first nudge on,
g rises then falls (a sweet spot), and h saturates.
"""

import math

import numpy as np

from nudgesim.behavior import decay_f, decay_g, decay_h, engagement_multiplier
from nudgesim.env_model import DecayParams, UserModel

params = DecayParams()  # k_a=0.2, k_b=1.0, unit amplitudes
ns = np.arange(0, 21)

# %% The raw curves, tabulated
print(" n      f       g       h")
for n in ns:
    print(f"{n:2d}  {decay_f(n, params):.4f}  {decay_g(n, params):.4f}  {decay_h(n, params):.4f}")

# %% Where g peaks: the closed form is ln(k_b/k_a) / (k_b - k_a)
peak = math.log(params.k_b / params.k_a) / (params.k_b - params.k_a)
print(f"\ng peaks at n* = {peak:.4f} nudges")

# %% What a user actually feels is the multiplier on baseline engagement.
# sigma < 1 means fewer sessions and shorter ones; sigma > 1 means more.
cohorts = {
    "tired of nudges (pure f)": UserModel("demo", "ctx", 1.0, 0.0, 0.0),
    "sweet spot (pure g)": UserModel("demo", "ctx", 0.0, 1.0, 0.0),
    "habit forming (pure h)": UserModel("demo", "ctx", 0.0, 0.0, 1.0),
}
print()
for label, user in cohorts.items():
    sigmas = [engagement_multiplier(user, n, params).sigma for n in (0, 1, 2, 5, 10)]
    print(f"{label:26s} sigma at n=0,1,2,5,10: " + "  ".join(f"{s:.3f}" for s in sigmas))
