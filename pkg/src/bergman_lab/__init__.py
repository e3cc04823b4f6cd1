"""Numerical verification lab for curvature of fiberwise weighted Bergman kernels.

The package builds finite-dimensional weighted Bergman spaces on product
Reinhardt fibers (disk, polydisc, annulus), certifies curvature constants of
the defining weights, and checks base-trace subharmonicity inequalities for
kernel diagonals, section functionals, Gram determinants, and the mixing
recursion that bootstraps a trace lower bound one averaging step at a time.
"""

__version__ = "0.1.0"

SCHEMA = "bergman-lab/1"
