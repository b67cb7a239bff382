"""Exception hierarchy shared across the package."""


class ShockcastError(Exception):
    """Base class for all package errors."""


class DomainError(ShockcastError, ValueError):
    """A physical quantity left its admissible range (T <= 0, e_int <= 0, ...)."""


class ConfigurationError(ShockcastError, ValueError):
    pass


class ShapeError(ShockcastError, ValueError):
    """Raised by tensor primitives when operand shapes are incompatible."""

    def __init__(self, op, *shapes):
        self.op = op
        self.shapes = shapes
        super().__init__(f"{op}: incompatible shapes {', '.join(str(tuple(s)) for s in shapes)}")


class BlowUpError(ShockcastError, RuntimeError):
    def __init__(self, message, step):
        self.step = step
        super().__init__(f"step {step}: {message}")


class TruncationError(ShockcastError, RuntimeError):
    """``max_steps`` was exhausted before ``t_end``; carries the partial trajectory."""

    def __init__(self, message, trajectory):
        self.trajectory = trajectory
        super().__init__(message)


class DegenerateTrajectoryError(ShockcastError, ValueError):
    pass


class FormatError(ShockcastError, ValueError):
    pass


class DivergenceError(ShockcastError, RuntimeError):
    def __init__(self, message, epoch):
        self.epoch = epoch
        super().__init__(f"epoch {epoch}: {message}")


class RunawayError(ShockcastError, RuntimeError):
    """Rollout step budget exhausted, usually because predicted timesteps collapsed."""


class ExtrapolationError(ShockcastError, ValueError):
    pass


class UndefinedCorrelationError(ShockcastError, ValueError):
    pass
