"""ubot: unbalanced optimal transport between matrix-valued measures on
simplicial meshes.

Library layout:

- ``tensor``: small symmetric-matrix algebra (eigen, pseudoinverse, sqrt)
- ``mesh``: simplicial box meshes, refinement, file I/O
- ``fields``: vertex/element-indexed matrix fields, norms, staggered paths
- ``operators``: reconstructions, samplings, discrete derivations, rate checks
- ``action``: infinitesimal cost, discrete actions, paraboloid projection
- ``solver``: primal-dual solver for the discrete transport problem
- ``analytic``: closed-form WFR oracles and the epsilon-regularization
- ``cli``: batch experiment front door (``ubot`` command)
"""

from ._kernels import backend_name

__all__ = ["backend_name"]
__version__ = "0.1.0"
