"""Reference signalling-game protocols and compositionality metrics.

Nine probe protocols over colour/shape derivations, scored by seven metrics:
topographic similarity, positional and bag-of-words disentanglement, context
independence, conflict count, receiver generalisation and tree reconstruction
error.  See the harness module for the experiment driver and the CLI.
"""

from ._backend import BACKEND, HAVE_COMPILED
from .core import (
    Concept,
    ConceptSpace,
    Derivation,
    Leaf,
    Message,
    Node,
    Protocol,
    Symbol,
    build_concept_space,
    enumerate_derivations,
    flatten,
)
from .harness import RunConfig, ScoreRow, ScoreTable, run_matrix
from .metrics import CLOSED_FORM_METRICS, MetricScore, PaddedView
from .protocols import FAMILIES, ProtocolConfig, make_protocol
from .receiver import ReceiverConfig, generalisation
from .tre import TreConfig, TreParams, TreResult, tre_fit

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "HAVE_COMPILED",
    "Concept",
    "ConceptSpace",
    "Derivation",
    "Leaf",
    "Message",
    "Node",
    "Protocol",
    "Symbol",
    "build_concept_space",
    "enumerate_derivations",
    "flatten",
    "RunConfig",
    "ScoreRow",
    "ScoreTable",
    "run_matrix",
    "CLOSED_FORM_METRICS",
    "MetricScore",
    "PaddedView",
    "FAMILIES",
    "ProtocolConfig",
    "make_protocol",
    "ReceiverConfig",
    "generalisation",
    "TreConfig",
    "TreParams",
    "TreResult",
    "tre_fit",
    "__version__",
]
