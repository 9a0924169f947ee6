"""Arc weights on a toy volume.

Builds a 3x3x3 grid, looks up each voxel's nearest neighbors and fits the
arc weights of one sample. With one sample per fit the minimum-norm solution
spreads the center intensity over the neighbors in proportion to their own
intensities, so the weights do not change when the whole sample is scaled.
"""

import numpy as np

from meshmvpa import Dataset, MeshConfig, build_neighborhood_table, estimate_arc_weights, extract_mad
from meshmvpa.synthgen import grid_coords

coords = grid_coords((3, 3, 3))
table = build_neighborhood_table(coords, 6)
center = 13  # middle of the cube
print("neighbors of the center voxel:", table.indices[center].tolist())

rng = np.random.default_rng(0)
x = rng.standard_normal(27)
est = estimate_arc_weights(x[center], x[table.indices[center]], MeshConfig(p=6))
print("arc weights:", np.round(est.weights, 4))
print("reconstruction:", float(est.weights @ x[table.indices[center]]), "target:", x[center])

# the descriptor of a whole sample ignores a global gain
d = Dataset(coords, np.stack([x, 5.0 * x]), np.array([0, 0]), np.array([0, 1]))
mad = extract_mad(d, table, MeshConfig(p=6))
print("MAD size per sample:", mad.values.shape[1])
print("gain invariant:", np.allclose(mad.values[0], mad.values[1]))
