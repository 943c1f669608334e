"""Exception types raised across the package."""


class VecstoreError(Exception):
    """Base class for all vecstore errors."""


# --- vector arithmetic ---

class ZeroVector(VecstoreError):
    """Vector norm too small to normalize safely."""


class DimensionMismatch(VecstoreError, ValueError):
    """Operands have incompatible dimensions."""


# --- source file parsing ---

class UnknownFormat(VecstoreError):
    """Input file matches no supported embedding format."""


class MalformedRecord(VecstoreError):
    """A source record could not be parsed; parsing stops here."""

    def __init__(self, reason: str, line: int | None = None, offset: int | None = None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if offset is not None:
            loc.append(f"byte {offset}")
        suffix = f" ({', '.join(loc)})" if loc else ""
        super().__init__(f"{reason}{suffix}")
        self.line = line
        self.offset = offset


class DimensionDrift(MalformedRecord):
    """A record's vector width differs from the established dimension."""


# --- store container ---

class BadMagic(VecstoreError):
    """File does not start with the store magic bytes."""


class UnsupportedVersion(VecstoreError):
    """Store format version is not readable by this library."""


class TruncatedFile(VecstoreError):
    """File ends before a declared section or structure."""


class TierUnsupported(VecstoreError):
    """Operation requires a section this store tier does not carry."""


class OrdinalOutOfRange(VecstoreError, IndexError):
    """Ordinal outside [0, key_count)."""


class CorruptAnnSection(VecstoreError):
    """ANN section failed its integrity check."""


class EmptyInput(VecstoreError):
    """No usable records were supplied to the writer."""


# --- queries ---

class KeyNotFound(VecstoreError, KeyError):
    """A required key is absent from the vocabulary."""

    def __init__(self, key: str):
        super().__init__(f"key not found: {key!r}")
        self.key = key


class EmptyPositive(VecstoreError, ValueError):
    """Analogy requires at least one positive key."""


class EffortOutOfRange(VecstoreError, ValueError):
    """Approximate-search effort must lie in [0.0, 1.0]."""


class TooFewVectors(VecstoreError, ValueError):
    """Index construction needs at least two vectors."""


class EmptyWord(VecstoreError, ValueError):
    """OOV synthesis requires a non-empty word."""


class NoCandidates(VecstoreError):
    """No string-similar in-vocabulary candidates were found."""


class EmptyQuery(VecstoreError, ValueError):
    """Query specification is empty."""


class TupleArityMismatch(VecstoreError, ValueError):
    """Per-member query tuple length differs from the member count."""


class EmptyKey(VecstoreError, ValueError):
    """Featurizer keys must be non-empty."""


class InvalidN(VecstoreError, ValueError):
    """Featurizer upper bound must be a positive integer."""
