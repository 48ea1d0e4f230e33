"""Exception types shared across the package."""


class MfgevoError(Exception):
    """Base class for all package errors."""


class InvalidGameError(MfgevoError):
    """A game definition failed validation; carries the full issue list."""

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__(
            "game definition is invalid:\n  " + "\n  ".join(self.issues)
        )


class EnumerationCapError(MfgevoError):
    """The deterministic-policy count of a class exceeds the enumeration cap."""

    def __init__(self, class_index, cardinality, cap):
        self.class_index = class_index
        self.cardinality = cardinality
        self.cap = cap
        super().__init__(
            f"class {class_index} has {cardinality} deterministic policies, "
            f"above the cap of {cap}; raise the cap explicitly if intended"
        )


class MultipleRecurrentClassesError(MfgevoError):
    """A policy-induced chain has several recurrent classes, so its
    stationary state distribution is not unique."""

    def __init__(self, class_index, policy_index, n_classes):
        self.class_index = class_index
        self.policy_index = policy_index
        super().__init__(
            f"policy {policy_index} of class {class_index} induces "
            f"{n_classes} recurrent communicating classes; a unique "
            f"recurrent class is required"
        )


class RevisionBoundError(MfgevoError):
    """A revision protocol's off-diagonal row sum exceeds the class
    revision rate, so switch probabilities are ill-defined."""


class IntegrationAbort(MfgevoError):
    """Mean-dynamic integration stopped on a numerical failure."""

    def __init__(self, time, reason):
        self.time = time
        self.reason = reason
        super().__init__(f"integration aborted at t={time:.6g}: {reason}")


class SimulationAbort(MfgevoError):
    """Finite-population simulation stopped on a failed precondition."""

    def __init__(self, time, reason):
        self.time = time
        self.reason = reason
        super().__init__(f"simulation aborted at t={time:.6g}: {reason}")


class LoadError(MfgevoError):
    """Game-spec file could not be parsed or does not match the schema."""

    def __init__(self, path, message, line=None, column=None):
        self.path = path
        self.line = line
        self.column = column
        where = str(path)
        if line is not None:
            where += f":{line}"
            if column is not None:
                where += f":{column}"
        super().__init__(f"{where}: {message}")
