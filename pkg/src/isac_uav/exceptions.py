class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


class DegenerateGeometryError(DomainError):
    """Line-of-sight directions too close to linearly dependent."""

    def __init__(self, message, bs_ids=()):
        super().__init__(message)
        self.bs_ids = tuple(bs_ids)


class ConfigError(ValueError):
    pass
