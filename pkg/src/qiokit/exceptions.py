"""Exception hierarchy for the toolkit.

All toolkit errors derive from :class:`QiokitError`.  ``ValidationError``
covers malformed inputs and broken construction invariants;
``NumericsError`` covers solver results that miss a stated tolerance.
Everything else is a named condition with a precise operational meaning.
"""


class QiokitError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(QiokitError, ValueError):
    """Input failed a construction-time invariant or precondition."""


class NumericsError(QiokitError):
    """A numerical solve did not meet its required tolerance."""


# --- operator core ---------------------------------------------------------

class NonUniqueStationaryState(QiokitError):
    """The Lindblad generator has a null space of dimension greater than one."""


class SingularState(QiokitError):
    """SLD undefined: a derivative component lives in the kernel of rho."""


class NotErgodic(QiokitError):
    """Operation requires a unique, full-rank stationary state."""


class NotZeroMean(QiokitError):
    """Operand has a nonzero stationary mean where a zero-mean one is required."""


# --- trajectories / filtering ----------------------------------------------

class StepTooLarge(QiokitError):
    """Integration step violates the dt * ||L||^2 (or drift) stability guard."""


class ZeroJumpRate(QiokitError):
    """A counting record jumps while the filter assigns zero jump rate."""


# --- estimation -------------------------------------------------------------

class AllRecordsImpossible(QiokitError):
    """Every parameter value assigns likelihood zero to the supplied records."""


class DegeneratePosterior(QiokitError):
    """All posterior weights vanished; the prior grid cannot explain the record."""


class NoAcceptances(QiokitError):
    """ABC rejection accepted no samples within the simulation budget."""


class ZeroVariance(QiokitError):
    """Asymptotic counting variance is numerically zero; Fisher ratio undefined."""


# --- linear quantum systems -------------------------------------------------

class SingularResolvent(QiokitError):
    """Transfer function requested at an eigenvalue of the drift matrix."""


class NotHurwitz(QiokitError):
    """Operation requires an asymptotically stable (Hurwitz) drift matrix."""


class RiccatiFailure(QiokitError):
    """Algebraic Riccati equation could not be solved to tolerance."""


class NoSkewSolution(QiokitError):
    """No skew-symmetric Z solves the generalized realizability equations."""


class SingularZ(QiokitError):
    """The skew-symmetric realizability certificate Z is not invertible."""


# --- system identification ---------------------------------------------------

class InsufficientData(QiokitError):
    """Dataset too short for the requested Hankel horizons and model order."""


class NotExciting(QiokitError):
    """Input sequence is not persistently exciting at the required order."""


class LogBranch(QiokitError):
    """Discrete drift has eigenvalues on the closed negative real axis; the
    principal matrix logarithm is ill-defined and no silent repair is made."""


class OptimizationFailed(QiokitError):
    """No feasible physically realizable system found from any start point."""


class DegenerateOutput(QiokitError):
    """Validation output has zero variance; NMSE undefined."""
