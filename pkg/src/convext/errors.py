"""Exception hierarchy. Every error carries a short machine-readable ``code``."""


class ConvextError(Exception):
    code = "error"


class DimensionMismatch(ConvextError, ValueError):
    code = "dimension_mismatch"


class NumericBreakdown(ConvextError, ArithmeticError):
    code = "numeric_breakdown"


class NotInHull(ConvextError, ValueError):
    code = "not_in_hull"


class EmptyDomain(ConvextError, ValueError):
    code = "empty_domain"


class NonFiniteValue(ConvextError, ValueError):
    code = "non_finite_value"

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class UnknownName(ConvextError, KeyError):
    code = "unknown_name"

    def __str__(self):
        return str(self.args[0]) if self.args else "unknown name"


class BadParams(ConvextError, ValueError):
    code = "bad_params"


class DegenerateBall(ConvextError, ValueError):
    code = "degenerate_ball"


class QueryInsideHull(ConvextError, ValueError):
    code = "query_inside_hull"


class NotConvexInput(ConvextError, ValueError):
    code = "not_convex_input"


class EvaluationOutsideDomain(ConvextError, ValueError):
    code = "evaluation_outside_domain"


class SupportEscapesData(ConvextError, ValueError):
    code = "support_escapes_data"


class TuningFailed(ConvextError, RuntimeError):
    code = "tuning_failed"

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class CoverageCheckFailed(ConvextError, RuntimeError):
    code = "coverage_check_failed"


class PreconditionFailed(ConvextError, ValueError):
    code = "precondition_failed"


class UnknownScenario(UnknownName):
    code = "unknown_scenario"
