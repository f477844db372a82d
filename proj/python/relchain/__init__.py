"""Kinship-chain reasoning benchmark: knowledge base, story generation,
edge-aware graph and linearized-sequence models, training and evaluation.

The heavy lifting lives in the compiled `_core` extension; this package
re-exports its surface.
"""

try:
    from relchain._core import (
        __version__,
        compose,
        evaluate,
        gen_dataset,
        generate_instance,
        gradcheck,
        invert,
        relations,
        resolve_chain,
        train,
        validate_kb,
    )
except ImportError:  # build-tree layout: extension next to the package on sys.path
    from _core import (  # type: ignore[no-redef]
        __version__,
        compose,
        evaluate,
        gen_dataset,
        generate_instance,
        gradcheck,
        invert,
        relations,
        resolve_chain,
        train,
        validate_kb,
    )

__all__ = [
    "__version__",
    "compose",
    "evaluate",
    "gen_dataset",
    "generate_instance",
    "gradcheck",
    "invert",
    "relations",
    "resolve_chain",
    "train",
    "validate_kb",
]
