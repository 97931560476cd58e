class DivergenceError(RuntimeError):
    """A simulated or predicted knee angle left the physically possible range (|theta| > pi).

    ``partial`` carries whatever was produced before the blow-up (a log or an array).
    """

    def __init__(self, message: str, partial=None, index: int | None = None):
        super().__init__(message)
        self.partial = partial
        self.index = index
