"""Abelian sandpile on Bethe-lattice balls and Z^d boxes.

Volumes come from ``tree_ball``, ``tree_prefix`` and ``grid_box``. Heights
are lists of ints in site-id order (breadth-first from the origin, id 0).
Report-style functions return plain dicts.
"""

from ._core import (
    PreconditionError,
    RefusedError,
    ResourceError,
    StabilizationError,
    Volume,
    add_grain,
    boundary_identity,
    cluster_tail,
    count_recurrent,
    enumerate_recurrent,
    greens,
    greens_decay,
    grid_box,
    height_probability,
    is_recurrent,
    sample,
    stabilize,
    summability,
    transfer_matrix_bound,
    tree_ball,
    tree_prefix,
    verify_group_axioms,
    window_study,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
