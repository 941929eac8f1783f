"""Flow a round S^3 of radius 1 and compare the volume scale with 1 - 4t.

Usage: python scripts/shrinking_sphere.py [N]
"""
import sys

import numpy as np

from ricci_lab.flow import FlowConfig, initial_state, run
from ricci_lab.geom import Grid1D, round_s3


def main(n: int = 256) -> None:
    m = round_s3(Grid1D.uniform(n), 1.0)
    trace = run(initial_state(m), FlowConfig(t_end=1.0, snapshot_every=max(1, n // 8)))
    t = trace.column("t")
    vol = trace.column("volume")
    scale = (vol / vol[0]) ** (2.0 / 3.0)
    print(f"{'t':>10} {'a(t)^2':>12} {'1-4t':>12}")
    for ti, si in zip(t[::4], scale[::4]):
        print(f"{ti:10.5f} {si:12.8f} {1 - 4 * ti:12.8f}")
    ext = [e.t for e in trace.events_of("extinction")]
    print(f"outcome: {trace.outcome}; extinction at {ext[0] if ext else np.nan:.6f} (exact 0.25)")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 256)
