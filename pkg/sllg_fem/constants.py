"""
sllg_fem.constants module.
"""
APP_ID = "sllg_fem"
DEVELOPMENT_VERSION = "__DEVELOPMENT__"

# Off-diagonal stiffness entries above this value violate the mesh condition
MESH_CONDITION_TOLERANCE = 1e-12

# Allowed drift of nodal moduli from 1
UNIT_MODULUS_TOLERANCE = 1e-8
NOISE_MODULUS_TOLERANCE = 1e-9
INITIAL_DATUM_TOLERANCE = 1e-12

DEFAULT_SOLVER_TOLERANCE = 1e-10
DENSE_FALLBACK_MAX_NODES = 2000
GMRES_RESTART = 50

DEFAULT_THETA = 0.7
DEFAULT_SEED = 42

FLOAT_FORMAT = ".17g"

# Relative distance of t / k from an integer below which t counts as that grid point
GRID_SNAP_TOLERANCE = 1e-13
