"""orbuq: multifidelity orbit uncertainty propagation.

Propagates an initial Gaussian orbit-state PDF through nonlinear dynamics by
adaptively splitting it into a Gaussian mixture.  Second-order Taylor
expansions of an analytical low-fidelity theory drive the split decisions and
carry the uncertainty; a high-fidelity numerical propagator corrects each
mixture component pointwise.
"""

__version__ = "0.1.0"

from .ta import AlgebraContext, DAVector, TaylorPoly

__all__ = ["AlgebraContext", "DAVector", "TaylorPoly", "__version__"]
