"""Exception hierarchy shared by the library and the CLI."""


class SoftmaxNewtonError(Exception):
    """Base class for all errors raised by this package."""


class InstanceError(SoftmaxNewtonError, ValueError):
    """Malformed problem instance (shape mismatch, non-finite entries)."""


class NonFiniteError(InstanceError):
    pass


class RankDeficientError(InstanceError):
    def __init__(self, sigma_min: float, sigma_max: float):
        self.sigma_min = sigma_min
        self.sigma_max = sigma_max
        super().__init__(
            f"A is numerically rank deficient: sigma_min={sigma_min:.3e}, "
            f"sigma_max={sigma_max:.3e}"
        )


class OracleFailure(SoftmaxNewtonError, RuntimeError):
    """The reference gradient-descent oracle did not reach its tolerance."""

    def __init__(self, grad_norm: float, iterations: int):
        self.grad_norm = grad_norm
        self.iterations = iterations
        super().__init__(
            f"descent oracle stopped at |g|={grad_norm:.3e} after {iterations} iterations"
        )


class NumericalError(SoftmaxNewtonError, ArithmeticError):
    """Base for failures of the numerical iteration itself."""


class NotPositiveDefiniteError(NumericalError):
    def __init__(self, lambda_min: float, what: str = "Hessian"):
        self.lambda_min = lambda_min
        super().__init__(f"{what} is not positive definite (lambda_min={lambda_min:.3e})")


class SingularSketchError(NumericalError):
    def __init__(self, nnz: int, d: int):
        self.nnz = nnz
        super().__init__(
            f"sketched Hessian is singular (nnz={nnz}, d={d}); "
            "increase the sample budget (oversample_c) or epsilon0"
        )


class NonPositiveDiagonalError(NumericalError):
    def __init__(self, index: int, value: float):
        self.index = index
        self.value = value
        super().__init__(f"diagonal entry D[{index}]={value:.3e} is not positive")


class SolverAborted(NumericalError):
    """Raised with the partial trace attached."""

    def __init__(self, message: str, trace):
        self.trace = trace
        super().__init__(message)


class DivergenceError(SolverAborted):
    pass


class IterationCapError(SolverAborted):
    pass


class SingularPencilError(NumericalError):
    def __init__(self, lambda_min: float):
        self.lambda_min = lambda_min
        super().__init__(f"B(x) + W^2 is not positive definite (lambda_min={lambda_min:.3e})")
