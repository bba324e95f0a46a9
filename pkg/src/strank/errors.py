"""Exception types shared across the package.

Every exception carries a short ``code`` that the command line prints as a
machine-parsable prefix.
"""


class StrankError(Exception):
    code = "E_STRANK"


class DomainError(StrankError, ValueError):
    """A numeric argument lies outside the domain of the operation."""

    code = "E_DOMAIN"


class SchemaError(StrankError, ValueError):
    """A file or configuration document does not match the expected schema."""

    code = "E_SCHEMA"


class ArgumentError(StrankError, ValueError):
    """Arguments are individually valid but inconsistent with each other."""

    code = "E_ARGUMENT"
