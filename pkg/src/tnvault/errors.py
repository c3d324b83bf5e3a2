"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`TNVaultError`
so the CLI can map it to an exit code.
"""


class TNVaultError(Exception):
    exit_code = 10


class ShapeMismatch(TNVaultError, ValueError):
    exit_code = 11


class IndexOutOfRange(TNVaultError, IndexError):
    exit_code = 11


class InvalidPermutation(TNVaultError, ValueError):
    exit_code = 11


class NumericalFailure(TNVaultError, ArithmeticError):
    exit_code = 12


class InvalidThreshold(TNVaultError, ValueError):
    exit_code = 2


class RankTooLarge(TNVaultError, ValueError):
    exit_code = 11


class RankSplitFailure(TNVaultError, ValueError):
    exit_code = 12


class InvalidTree(TNVaultError, ValueError):
    exit_code = 11


class FormatError(TNVaultError, ValueError):
    """Malformed ``.dt`` / ``.tnc`` / manifest bytes."""

    exit_code = 13


class TooFewServers(TNVaultError, ValueError):
    exit_code = 2


class SeedCountMismatch(TNVaultError, ValueError):
    exit_code = 11


class MissingFragment(TNVaultError, KeyError):
    exit_code = 3

    def __init__(self, fragment_id: str, detail: str = ""):
        self.fragment_id = fragment_id
        msg = f"missing fragment {fragment_id}"
        super().__init__(msg + (f": {detail}" if detail else ""))

    def __str__(self):
        # KeyError would repr() the message
        return self.args[0]


class HashMismatch(TNVaultError, ValueError):
    exit_code = 4

    def __init__(self, fragment_id: str, detail: str = ""):
        self.fragment_id = fragment_id
        msg = f"content hash mismatch for fragment {fragment_id}"
        super().__init__(msg + (f": {detail}" if detail else ""))


class ZeroNormOriginal(TNVaultError, ValueError):
    exit_code = 11


class DegenerateRange(TNVaultError, ValueError):
    exit_code = 11


class TransportUnavailable(TNVaultError, OSError):
    exit_code = 20


class UnknownServer(TNVaultError, KeyError):
    exit_code = 21

    def __str__(self):
        return self.args[0] if self.args else "unknown server"


class MisalignedShares(TNVaultError, ValueError):
    exit_code = 22


class ProtocolViolation(TNVaultError, RuntimeError):
    exit_code = 23


class NodeFailure(TNVaultError, RuntimeError):
    """A server died or reported an unexpected error (fail-stop)."""

    exit_code = 24


class UnknownSuite(TNVaultError, ValueError):
    exit_code = 2


class TooManyServers(TNVaultError, ValueError):
    """More servers than cores/factors to hand out."""

    exit_code = 2
