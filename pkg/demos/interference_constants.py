"""Power-control and interference constants of the reference network.

Run with ``python3 demos/interference_constants.py``. Takes about 10 seconds.
"""

import numpy as np

from multiairfed import RadioConfig, analysis

cfg = RadioConfig()  # 20 parents per km^2, 15 devices on the 4..30 m ring

# rho is the received power every active device aims for after channel
# inversion; the power budget fixes it through the ring moment of y^alpha
print(f"rho            = {cfg.rho:.4e}")
print(f"P(active)      = {cfg.activity_prob:.4f}  (fading above th1 = {cfg.th1})")

# does the inversion respect the average power budget? simulate it
rng = np.random.default_rng(0)
mean_power, se = analysis.transmit_power_monte_carlo(cfg, 200_000, rng)
print(f"E|p|^2 / P_u   = {mean_power:.4f} +- {se:.4f}")

# mean interference power at the origin server from all other clusters,
# under both choices of the truncated inverse-fading constant
for setting in ("corrected", "paper"):
    print(f"psi[{setting:9s}] = {cfg.with_(ei_constant=setting).psi:.4e}")

m, se = analysis.psi_monte_carlo(cfg, 5000, rng, window_radius=500.0)
print(f"psi simulated  = {m:.4e} +- {se:.1e}")

# downlink interference seen by a device from the other edge servers
print(f"beta           = {cfg.beta:.4e}")
m, se = analysis.campbell_downlink_sum_mc(cfg, 5000, rng, window_radius=500.0)
print(f"beta simulated = {m:.4e} +- {se:.1e}")

# both constants scale linearly with the parent intensity
dense = cfg.with_(lambda_p=4e-5)
print(f"doubling lambda_p: psi x{dense.psi / cfg.psi:.2f}, beta x{dense.beta / cfg.beta:.2f}")
