"""
Exception types shared by the polysep modules.

Every error carries the exit code the CLI returns for it. Infeasibility
(no separating halfspace / polyhedron) is a result, not an error, and has
no exception here.
"""


class PolysepError(Exception):
    """Base class; `exit_code` is what `polysep.py` exits with."""

    exit_code = 3


class InputError(PolysepError, ValueError):
    """Bad user input: malformed files, out-of-range parameters, dimension mismatch."""

    exit_code = 2


class ConfigInfeasibleError(InputError):
    """The planted-instance generator ran out of its sampling budget."""


class ContractViolation(PolysepError):
    """A caller broke an operation's precondition (e.g. margin of the empty state)."""

    exit_code = 3


class InternalFault(PolysepError):
    """Numerical breakdown that exact arithmetic rules out (iteration cap exceeded)."""

    exit_code = 3
