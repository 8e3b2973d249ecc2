"""Meshes in, point clouds out: OFF parsing, area-weighted sampling, rotations.

Run:  python3 demos/06_mesh_io.py [out_dir]
"""
import sys
from pathlib import Path

import numpy as np

from foldingnet.pointcloud import (TriMesh, axis_aligned_rotation, normalize_unit_sphere,
                                   read_off, read_xyz, sample_mesh, shift_noise, write_off,
                                   write_xyz)

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/io")
out.mkdir(parents=True, exist_ok=True)
rng = np.random.default_rng(4)

# unit square made of two triangles, plus one long thin sliver off to the side
v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [2, 0, 0], [3, 0, 0], [2, 0.1, 0]], float)
t = np.array([[0, 1, 2], [0, 2, 3], [4, 5, 6]])
write_off(TriMesh(v, t), out / "square.off")
mesh = read_off(out / "square.off")
print("triangle areas:", mesh.areas())

# %% samples land on each face in proportion to its area
cloud = sample_mesh(mesh, 2000, rng)
print("share on the sliver:", np.mean(cloud.points[:, 0] > 1.5), "(expected about 0.048)")

# %% unit-sphere normalisation and the 24 cube rotations
unit = normalize_unit_sphere(cloud)
print("max radius:", np.linalg.norm(unit.points, axis=1).max())
turned = axis_aligned_rotation(unit, 5)
print("pairwise distances kept:",
      np.allclose(np.linalg.norm(turned.points[:10] - turned.points[10:20], axis=1),
                  np.linalg.norm(unit.points[:10] - unit.points[10:20], axis=1)))

# %% noise for robustness tests, then a plain xyz round trip
noisy = shift_noise(unit, 0.05, rng)
print("points moved:", int(np.any(noisy.points != unit.points, axis=1).sum()))
write_xyz(noisy, out / "noisy.xyz")
print("xyz round trip exact:", np.array_equal(read_xyz(out / "noisy.xyz").points, noisy.points))
