"""Exception types shared across the simulator."""


class CfmimoError(Exception):
    """Base class for simulator errors."""


class ConfigurationError(CfmimoError, ValueError):
    """Invalid or unsupported configuration."""


class NumericalError(CfmimoError, ArithmeticError):
    """A covariance or system matrix is unusable beyond regularization."""


class InfeasiblePlanError(CfmimoError):
    """A pilot plan or association cannot satisfy its constraints."""


class StatisticsError(CfmimoError):
    """Not enough Monte Carlo samples to form a statistic."""
