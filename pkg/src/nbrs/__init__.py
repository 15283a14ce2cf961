"""nbrs: neighborhood-biased pronunciation modeling.

A library and CLI that builds geographic neighborhoods of named features,
trains a neighbor-biased encoder-decoder transformer to predict
pronunciations, flags likely database errors by beam-score confidence, and
adapts the same machinery to cognate reflex prediction.
"""

from nbrs.errors import DataError, NbrsError, NumericsError

__version__ = "0.1.0"

__all__ = ["DataError", "NbrsError", "NumericsError", "__version__"]
