"""Numerical Ricci flow on symmetry-reduced 2- and 3-manifolds."""
