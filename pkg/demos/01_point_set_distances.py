"""
Point-set distances and outlier points
======================================

Compares the two-sided Chamfer distance, its single-direction variant and the
L1 single-direction variant on a partial scan with a handful of stray points.
"""

import numpy as np

from shaperank import PointCloud, chamfer, mscd, scd
from shaperank.synthetic import sample_surface

rng = np.random.default_rng(0)

# %%
# A CAD-like box and a partial scan of it: only the top half was observed.
cad = PointCloud(sample_surface("box", (1.0, 0.6, 0.4), 2048, rng), "cad")
surface = sample_surface("box", (1.0, 0.6, 0.4), 2048, rng)
scan = PointCloud(surface[surface[:, 2] > 0.2] + rng.normal(0, 0.005, (int((surface[:, 2] > 0.2).sum()), 3)), "scan")

print(f"scan has {len(scan)} points, CAD model {len(cad)}")
for name, fn in (("chamfer", chamfer), ("scd", scd), ("mscd", mscd)):
    print(f"{name:8s} {fn(scan, cad):.6f}")

# %%
# The two-sided Chamfer distance also charges for CAD points the scan never
# saw. Single-direction variants only look scan -> CAD.
print("\nscan -> CAD vs CAD -> scan")
print(f"scd   {scd(scan, cad):.6f}   {scd(cad, scan):.6f}")
print(f"mscd  {mscd(scan, cad):.6f}   {mscd(cad, scan):.6f}")

# %%
# Now add 1% of floating outlier points, half a unit above the object.
n_out = len(scan) // 100
stray = rng.uniform([-0.5, -0.5, 0.9], [1.5, 1.1, 1.1], size=(n_out, 3))
noisy = PointCloud(np.vstack([scan.points, stray]), "noisy")

print("\nrelative growth caused by outliers")
for name, fn in (("scd", scd), ("mscd", mscd)):
    before, after = fn(scan, cad), fn(noisy, cad)
    print(f"{name:5s} {before:.6f} -> {after:.6f}  (x{after / before:.1f})")
