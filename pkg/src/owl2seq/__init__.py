"""Two-network pipeline turning definitory sentences into description-logic
axioms: a GRU sentence tagger, a GRU encoder-decoder emitting formula
templates, and a combiner grounding the template with the tagged words.
Includes the grammar-based corpus generator and a from-scratch training
stack (AdaDelta, full backpropagation through time, gradient checking).
"""

__version__ = "0.1.0"

from . import checkpoint, corpus, dlkit, nn, numkit, tagger, transducer  # noqa: F401
