"""Sample the preserved curvature-operator sets and integrate the ODE from every sample."""
import numpy as np

from ricci_lab.pinch_ode import preserved_set_check, sample_set

rng = np.random.default_rng(0)
for sid in ("cone", "pinching", "hamilton_ivey"):
    params = {"eps": 0.1} if sid == "pinching" else {}
    samples = sample_set(sid, 2000, rng, eps=0.1)
    print(preserved_set_check(sid, samples, horizon=5.0, dt=1e-3, **params).as_text())
