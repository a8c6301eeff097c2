"""Exception types raised across the package."""


class ParseError(ValueError):
    """A malformed line in an interactions, trust, corpus or checkpoint file."""

    def __init__(self, message, line_no=None, source=None):
        self.line_no = line_no
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line_no is not None:
            where += f"line {line_no}: "
        elif where:
            where += " "
        super().__init__(where + message)


class EmptySplitError(ValueError):
    """No user has enough interactions to form train/validation/test splits."""


class TrainingDiverged(FloatingPointError):
    """A score became non-finite during stochastic gradient ascent."""

    def __init__(self, epoch, message="non-finite score"):
        self.epoch = epoch
        super().__init__(f"training diverged at epoch {epoch}: {message}")
