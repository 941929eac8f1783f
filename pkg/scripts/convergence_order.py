"""Grid refinement of the scalar curvature of the unit round S^3 (exact R = 6).

The error falls like N^-2 until round-off in (1 - psi_s^2)/psi^2 next to the
poles, which grows like N^3, takes over somewhere above N = 1024.
"""
import numpy as np

from ricci_lab.geom import Grid1D, curvature, round_s3

prev = None
print(f"{'N':>6} {'max|R-6|':>12} {'ratio':>8}")
for n in (64, 128, 256, 512, 1024, 2048):
    err = float(np.max(np.abs(curvature(round_s3(Grid1D.uniform(n), 1.0)).R - 6.0)))
    ratio = "" if prev is None else f"{prev / err:8.2f}"
    print(f"{n:6d} {err:12.4e} {ratio}")
    prev = err
