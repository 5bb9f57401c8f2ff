"""triconv: a numerical laboratory for multilinear estimates.

Three strands, one toolbox:

* ``geometry`` / ``surface``: graph patches of submanifolds in R^n, their
  normal-frame transversality, and measured constants for the convolution
  of two surface measures restricted to a third surface.
* ``grid`` / ``decomp`` / ``trilinear``: periodic space-time grids, dyadic
  frequency/modulation localizers, spherical cap systems, Bourgain-type
  norms, and empirical verification of bilinear and trilinear space-time
  estimates case by case.
* ``zakharov``: a small pseudospectral solver for the 3D Zakharov system
  with exact linear propagators, plus Picard-iteration contraction and
  Lipschitz probes as well-posedness diagnostics.

Hot pair-sweep loops run through ``triconv._kern`` which selects a compiled
extension when present and an equivalent numpy implementation otherwise.
"""

__version__ = "0.1.0"

from . import _kern

KERNEL_IMPL = _kern.IMPL
