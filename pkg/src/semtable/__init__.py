"""semtable: hybrid semantic table annotation into an embedded knowledge graph.

Pipeline: CSV import (typed columns, flagged inconsistencies, predicate and
entity suggestions) -> human decisions against a replayable log ->
structured model with hierarchies and groups -> semantic document / triple
export -> store integration. See README for the CLI and HTTP surfaces.
"""

__version__ = "0.1.0"
