"""Exception hierarchy shared by the library and the CLI."""


class KgQueryError(Exception):
    """Base class for library errors."""


class ContractError(KgQueryError, ValueError):
    """A caller broke an operation's precondition (bad id, wrong arity, ...)."""


class SchemaError(KgQueryError):
    """Malformed input file or record. Carries the offending line when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class InvariantError(KgQueryError):
    """An internal invariant was breached. This is a bug, not bad input."""


class TopologyError(KgQueryError):
    """A graph is both a multigraph and cyclic, outside the supported budget."""


class SamplingExhausted(KgQueryError):
    """No valid grounding was found within the retry budget."""


class ResourceLimit(KgQueryError):
    """A computation would exceed its configured size cap."""


class ExecutionError(KgQueryError):
    """A reasoner could not produce a state for some free variable."""
