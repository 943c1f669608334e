"""Compact, memory-mapped vector stores for word embeddings.

The package converts text or binary embedding files into a single
immutable store file that opens lazily, serves quantized vectors
through zero-copy views, synthesizes deterministic vectors for
out-of-vocabulary words, and answers exact or approximate nearest
neighbor queries.
"""
from .core import QuantizationSpec, StoreMetadata, Tier, cosine, normalize
from .errors import (
    BadMagic,
    CorruptAnnSection,
    DimensionDrift,
    DimensionMismatch,
    EffortOutOfRange,
    EmptyInput,
    EmptyKey,
    EmptyPositive,
    EmptyQuery,
    EmptyWord,
    InvalidN,
    KeyNotFound,
    MalformedRecord,
    NoCandidates,
    OrdinalOutOfRange,
    TierUnsupported,
    TooFewVectors,
    TruncatedFile,
    TupleArityMismatch,
    UnknownFormat,
    UnsupportedVersion,
    VecstoreError,
    ZeroVector,
)
from .featurizer import Featurizer, featurizer_dim
from .ingest import SourceFormat, detect_format, parse_embeddings
from .oov import OovContext, char_ngrams, oov_vector, shrink_repeats
from .prng import hash32, prvg
from .reader import StoreReader, open_store
from .search import (
    ProjectionForest,
    SearchHit,
    analogy,
    approx_topk,
    build_forest,
    closer_than,
    exact_topk,
)
from .session import LruCache, QuerySession
from .synthetic import (
    build_synthetic_store,
    english_like_words,
    fixture_records,
    gaussian_records,
)
from .writer import write_store

__version__ = "1.0.0"

__all__ = [
    "BadMagic",
    "CorruptAnnSection",
    "DimensionDrift",
    "DimensionMismatch",
    "EffortOutOfRange",
    "EmptyInput",
    "EmptyKey",
    "EmptyPositive",
    "EmptyQuery",
    "EmptyWord",
    "Featurizer",
    "InvalidN",
    "KeyNotFound",
    "LruCache",
    "MalformedRecord",
    "NoCandidates",
    "OovContext",
    "OrdinalOutOfRange",
    "ProjectionForest",
    "QuantizationSpec",
    "QuerySession",
    "SearchHit",
    "SourceFormat",
    "StoreMetadata",
    "StoreReader",
    "Tier",
    "TierUnsupported",
    "TooFewVectors",
    "TruncatedFile",
    "TupleArityMismatch",
    "UnknownFormat",
    "UnsupportedVersion",
    "VecstoreError",
    "ZeroVector",
    "analogy",
    "approx_topk",
    "build_forest",
    "build_synthetic_store",
    "char_ngrams",
    "closer_than",
    "cosine",
    "detect_format",
    "english_like_words",
    "exact_topk",
    "featurizer_dim",
    "fixture_records",
    "gaussian_records",
    "hash32",
    "normalize",
    "oov_vector",
    "open_store",
    "parse_embeddings",
    "prvg",
    "shrink_repeats",
    "write_store",
    "__version__",
]
