"""Reduced volume based at a pole of a shrinking round S^3 (constant for the shrinker)."""
from ricci_lab.flow import FlowConfig, initial_state, run
from ricci_lab.geom import Grid1D, round_s3
from ricci_lab.reduced import RunField, reduced_volume_series

cfg = FlowConfig(t_end=0.249997, snapshot_every=4, extinction_volume=1e-14, keep_snapshots=True)
trace = run(initial_state(round_s3(Grid1D.uniform(64), 1.0)), cfg)
field = RunField(trace)
for d in reduced_volume_series(field, 0, [0.02, 0.05, 0.1, 0.2]):
    print(f"tau={d.tau:6.3f} V={d.V:.6f} min_l={d.min_l:.4f}")
