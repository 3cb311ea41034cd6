class InsufficientAgentsException(Exception):
    def __init__(self, message="insufficient agents for tetrad statistics"):
        super().__init__(message)


class InvalidNetworkException(Exception):
    pass


class NetworkFormatException(Exception):
    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


class DistributionException(Exception):
    pass


class NoAnalyticMeanException(Exception):
    def __init__(self, message="no analytic mean"):
        super().__init__(message)


class KernelSpecException(Exception):
    pass


class DensityFloorException(Exception):
    pass


class RankConditionException(Exception):
    def __init__(self, message="rank condition fails in sample"):
        super().__init__(message)


class OracleUnavailableException(Exception):
    def __init__(self, message="oracle variance requires simulation mode"):
        super().__init__(message)


class DegenerateRegressionException(Exception):
    pass


class BootstrapException(Exception):
    pass


class VarianceNotPsdException(Exception):
    pass


class TrimmingException(Exception):
    def __init__(self, message="trimming gamma_n too aggressive for this sample"):
        super().__init__(message)


class ConfigException(Exception):
    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


class McCellFailedException(Exception):
    pass
