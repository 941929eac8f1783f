"""Dumbbell neckpinch with one surgery, followed until both pieces go extinct.

Usage: python scripts/neckpinch_surgery.py [N]   (the default N = 1024 takes about 2 minutes)
"""
import sys

from ricci_lab.flow import FlowConfig
from ricci_lab.initial_data import dumbbell
from ricci_lab.surgery import SurgeryConfig, surgery_loop


def main(n: int = 1024) -> None:
    m = dumbbell(neck_ratio=0.35, bulb_count=2, n=n, neck_length=3.0, blend=0.1)
    flow = FlowConfig(t_end=100.0, snapshot_every=20, curvature_blowup_threshold=50.0)
    # the library default delta = 0.02 finds no neck on this dumbbell before blowup
    st = surgery_loop(m, SurgeryConfig(flow=flow, delta=0.1, threshold_growth=300.0))
    for rec in st.surgeries:
        d = rec.as_dict()
        print("surgery " + " ".join(f"{k}={v:.5g}" for k, v in d.items()))
    for kind, t, info in st.events:
        print(f"{kind:12s} t={t:.6f} {info}")
    print(f"outcome: {st.outcome}, surgeries: {st.surgery_count}, extinctions: {len(st.extinctions)}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 1024)
