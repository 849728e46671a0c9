# coding: utf-8

# # Moving fields between two tetrahedral meshes
#
# Flow and mechanics each get their own mesh. This script builds the
# volume-weighted transfer operators between a fine and a coarse mesh of
# the same box and looks at what they do to a few fields.

import numpy as np

from twogrid import box_tet_mesh
from twogrid.geometry import (apply_projection, format_diagnostics, projection_diagnostics,
                              two_grid_operators)

# ## Two meshes of the unit cube

fine = box_tet_mesh(6, 6, 6, 1.0, 1.0, 1.0)
coarse = box_tet_mesh(4, 4, 4, 1.0, 1.0, 1.0)
print(fine.n_elements, "fine tets,", coarse.n_elements, "coarse tets")

# ## Pairs and operators
#
# A pair is kept when a vertex of one tet lies inside the other. Tets that
# only touch along a face, edge or vertex are dropped, since they share no
# volume.

pairs, f2m, m2f = two_grid_operators(fine, coarse)
print(format_diagnostics(projection_diagnostics(pairs, f2m, m2f)))

# ## Constants survive exactly

const = apply_projection(f2m, np.full(fine.n_elements, 7.0))
print("constant field, max deviation:", np.abs(const - 7.0).max())

# ## A linear field is smeared but not biased
#
# The weights average over every overlapping partner, so a linear field
# picks up an error of the order of the coarse cell size.

def centroids(mesh):
    return mesh.nodes[mesh.tets].mean(axis=1)


x_fine = centroids(fine)[:, 0]
x_coarse = centroids(coarse)[:, 0]
moved = apply_projection(f2m, x_fine)
print("linear field, mean error:", float(np.mean(moved - x_coarse)))
print("linear field, max error:", float(np.abs(moved - x_coarse).max()))

# ## Identical meshes give identity operators

_, a, b = two_grid_operators(coarse, coarse)
print("identity:", a.is_identity() and b.is_identity())
