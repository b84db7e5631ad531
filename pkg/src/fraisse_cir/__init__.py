"""Fraisse classes, canonical independence relations and shift dynamics."""

from .structures import (
    FinStructure,
    PartialMap,
    Signature,
    SignatureError,
    StructureError,
    find_embeddings,
    generated_substructure,
    meet_tree,
    tuple_type_equal,
    type_key,
)
from .fraisse import (
    CLASS_NAMES,
    ClassPlugin,
    GrowthCapExceeded,
    LimitApprox,
    build_approximation,
    canonical_amalgam,
    check_extension_property,
    get_class,
)

__version__ = "0.1.0"
