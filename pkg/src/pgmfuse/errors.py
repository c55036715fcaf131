"""Exception type shared by every module of the package."""


class FusionError(Exception):
    """Domain error carrying a machine-readable code.

    ``code`` is one of the upper-case identifiers used throughout the
    package (``SIZE_MISMATCH``, ``RANK_DEFICIENT``, ...). The CLI maps every
    ``FusionError`` to exit status 1.
    """

    def __init__(self, code, message=""):
        self.code = code
        self.message = message
        super().__init__(f"{code}: {message}" if message else code)
