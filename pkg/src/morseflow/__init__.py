"""morseflow: Morse homology and chord-diagram operations on explicit manifolds."""

from .fatgraph import (
    INCOMING,
    OUTGOING,
    UNASSIGNED,
    BoundaryCycleSet,
    ChordDiagram,
    FatGraph,
    boundary_cycles,
    circular_vertex_classes,
    euler_characteristic,
    genus,
    is_admissible,
    joined_incoming_circles,
    parse_graph_file,
    format_graph_file,
    reduce_diagram,
    validate_chord_diagram,
)

__all__ = [
    "INCOMING",
    "OUTGOING",
    "UNASSIGNED",
    "BoundaryCycleSet",
    "ChordDiagram",
    "FatGraph",
    "boundary_cycles",
    "circular_vertex_classes",
    "euler_characteristic",
    "genus",
    "is_admissible",
    "joined_incoming_circles",
    "parse_graph_file",
    "format_graph_file",
    "reduce_diagram",
    "validate_chord_diagram",
]

__version__ = "0.1.0"
