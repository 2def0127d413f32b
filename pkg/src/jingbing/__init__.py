"""Two-party private join with per-column aggregates.

The client and server each hold a set of identifiers; the client
additionally holds up to four integer columns.  A protocol run reveals
to the client only the intersection cardinality and the requested
per-column aggregates (sum, sum of squares) over the intersection,
under a commutative cipher for the join and homomorphic encryption for
the values.  Sessions run over mutually authenticated TCP and end with
a transcript signed by both parties.

Typical entry points: protocol (state machines), transport (serve,
run_client), dataio (CSV in/out, synthetic data), oracle (plaintext
reference), cli (command line).
"""

from . import (
    bfv,
    commutative,
    dataio,
    errors,
    oracle,
    paillier,
    pki,
    protocol,
    ring,
    transport,
    wire,
)
from .protocol import (
    DEFAULT_LIMITS,
    PAPER_LIMITS,
    AggregationSpec,
    Dataset,
    Limits,
    Operator,
    ProtocolOutput,
    Record,
)
from .transport import ClientConfig, ServerConfig, run_client, serve

__version__ = "0.1.0"

__all__ = [
    "AggregationSpec",
    "ClientConfig",
    "Dataset",
    "DEFAULT_LIMITS",
    "Limits",
    "Operator",
    "PAPER_LIMITS",
    "ProtocolOutput",
    "Record",
    "ServerConfig",
    "bfv",
    "cli",
    "commutative",
    "dataio",
    "errors",
    "oracle",
    "paillier",
    "pki",
    "protocol",
    "ring",
    "run_client",
    "serve",
    "transport",
    "wire",
    "__version__",
]
