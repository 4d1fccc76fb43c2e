"""Exception types shared across the package.

Plain input-domain violations (bad token ids, empty lists, invalid config
values) raise ValueError; the classes below mark failures a caller may want
to handle differently.
"""


class MultipathError(Exception):
    """Base class for package-specific failures."""


class LoadError(MultipathError):
    """A model or dataset file is missing, malformed, or inconsistent."""


class TrainingError(MultipathError):
    """Model training received unusable input (e.g. an empty corpus)."""


class TransportError(MultipathError):
    """A remote service could not be reached (connection, timeout).

    Deliberately distinct from any verdict or payload value: a judge that
    cannot be reached must never be read as a negative answer.
    """


class ProtocolError(MultipathError):
    """A remote service answered, but the payload violates the wire schema."""


class ConfigError(MultipathError):
    """An invalid strategy/provider/decoder combination was requested."""


class VerificationError(MultipathError):
    """Verification infrastructure failed (timeout, missing command).

    Distinct from a task simply failing its check.
    """
