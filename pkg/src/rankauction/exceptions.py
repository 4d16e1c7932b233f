class RankAuctionError(Exception):
    """Base class for errors raised by this package."""


class DomainError(RankAuctionError, ValueError):
    """An argument lies outside the domain of the operation."""


class DimensionMismatchError(RankAuctionError, ValueError):
    pass


class DegenerateAllocationError(RankAuctionError, ValueError):
    """The allocation rule has zero slope where a ratio by x'(q) is needed."""


class QuadratureError(RankAuctionError, ArithmeticError):
    pass


class InfeasibleEpsilonError(RankAuctionError, ValueError):
    """No epsilon strictly-monotone auction is feasible for the environment."""


class InsufficientDataError(RankAuctionError, ValueError):
    pass


class ConfigError(RankAuctionError):
    pass


class ValidationError(RankAuctionError):
    pass
