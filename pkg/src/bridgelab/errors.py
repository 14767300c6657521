"""Exception hierarchy.

Argument mistakes (wrong shapes, mismatched grids, empty regions) raise plain
ValueError.  Everything that can go wrong *numerically* — a non-finite
evaluation, a refused precondition gate, a solver that did not converge, a
Monte Carlo run with every path rejected — derives from BridgeLabError so the
command line can map it to a dedicated exit code.
"""


class BridgeLabError(Exception):
    """Base class for numerical / domain failures."""


class ConfigError(Exception):
    """Invalid command-line or config-file input.

    Deliberately *not* a BridgeLabError: the command line maps it to the
    usage exit code, distinct from numerical failures.
    """


class EvaluationError(BridgeLabError):
    """An evaluator produced a non-finite value.  Names the offending term."""

    def __init__(self, term: str, detail: str = ""):
        self.term = term
        msg = f"non-finite value in term '{term}'"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class PreconditionError(BridgeLabError):
    """A hypothesis gate refused to run the experiment."""


class SolverError(BridgeLabError):
    """An iterative solver failed to reach its tolerance."""


class SimulationError(BridgeLabError):
    """A stochastic simulation could not be completed.

    Carries the partially built path (if any) in ``partial``.
    """

    def __init__(self, message: str, partial=None):
        self.partial = partial
        super().__init__(message)


class AbsoluteContinuityError(BridgeLabError):
    """A candidate measure puts mass where the reference has none."""


class InfeasibleError(BridgeLabError):
    """Requested marginal constraints cannot be met."""


class UnsupportedFunctionalError(BridgeLabError):
    """An operation needs a functional with more structure than provided."""


class BatchError(BridgeLabError):
    """One or more tasks of a parallel batch raised.

    ``failures`` maps task index -> exception.
    """

    def __init__(self, failures):
        self.failures = dict(failures)
        idx = sorted(self.failures)
        super().__init__(f"{len(idx)} task(s) failed: indices {idx[:10]}"
                         + ("..." if len(idx) > 10 else ""))
