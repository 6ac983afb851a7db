"""U-HRNet architecture tools.

Graphs and weights are opaque handles backed by the C++ core. Cost and
gradient-check reports come back as plain dicts. Errors raise
``UhrnetError`` (a ``ValueError``) whose args are ``(message, code, location)``.
"""

from ._core import (
    Graph,
    UhrnetError,
    Weights,
    build_micro,
    build_preset,
    build_structure,
    calibrate,
    compare,
    count_flops,
    count_params,
    format_structure,
    forward,
    gradcheck,
    infer_shapes,
    init_weights,
    parse_structure,
    presets,
    random_input,
)

REFERENCE_INPUT = (1, 3, 1024, 2048)
MICRO_INPUT = (1, 3, 64, 64)

__all__ = [
    "Graph",
    "UhrnetError",
    "Weights",
    "build_micro",
    "build_preset",
    "build_structure",
    "calibrate",
    "compare",
    "count_flops",
    "count_params",
    "format_structure",
    "forward",
    "gradcheck",
    "infer_shapes",
    "init_weights",
    "parse_structure",
    "presets",
    "random_input",
    "REFERENCE_INPUT",
    "MICRO_INPUT",
]
