"""Exception types shared across the library."""


class AlignmentError(ValueError):
    """The update direction and negative gradient are not positively aligned.

    Raised by metric constructors when y.g fails the alignment gate: at or
    beyond orthogonality no symmetric positive definite matrix can map the
    update direction onto the negative gradient, and just short of it the
    construction would return an arbitrarily ill-conditioned matrix.
    """

    def __init__(self, alignment: float, psi: float, tolerance: float):
        self.alignment = alignment
        self.psi = psi
        self.tolerance = tolerance
        super().__init__(
            f"alignment y.g = {alignment:.6e} is below tolerance {tolerance:.6e} "
            f"(angle psi = {psi:.6f} rad); refusing to build a metric"
        )


class CertificateError(RuntimeError):
    """A numerical certificate that the result must carry could not be met."""

    def __init__(self, certificate: str, detail: str):
        self.certificate = certificate
        super().__init__(f"certificate '{certificate}' violated: {detail}")


class EffectivenessError(ValueError):
    """A discrete step did not decrease the loss."""

    def __init__(self, loss_before: float, loss_after: float):
        self.loss_before = loss_before
        self.loss_after = loss_after
        super().__init__(
            f"step is not effective: loss went from {loss_before!r} to {loss_after!r}"
        )


class NoRootError(RuntimeError):
    """No interior point satisfied the second-order expansion identity.

    Carries the scanned residual profile; a profile with no sign change and
    no near-zero entry usually means the supplied loss is not twice
    continuously differentiable on the step segment.
    """

    def __init__(self, lambdas, residuals):
        self.lambdas = lambdas
        self.residuals = residuals
        super().__init__(
            "no root of the expansion residual found in (0, 1); "
            f"min |residual| = {min(abs(r) for r in residuals):.3e} over "
            f"{len(lambdas)} scan points"
        )


class ConfigError(ValueError):
    """An experiment configuration is invalid."""


class ParseError(ValueError):
    """An input file could not be parsed."""

    def __init__(self, path, line_number, message):
        self.path = path
        self.line_number = line_number
        super().__init__(f"{path}:{line_number}: {message}")
