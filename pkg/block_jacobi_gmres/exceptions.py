""" Exceptions raised by this package.

Every error raised deliberately by the package derives from
`BlockJacobiError`, so that callers (notably the command-line interface) can
separate input problems from programming errors.

Examples
--------

>>> error = MatrixMarketError('expected 3 fields', line=7)
>>> str(error)
'line 7: expected 3 fields'
>>> isinstance(error, ParseError) and isinstance(error, BlockJacobiError)
True

>>> isinstance(DimensionError('length 3 != 4'), ArgumentError)
True

"""

# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.


class BlockJacobiError(Exception):
    """ Base class for all errors raised by this package. """


class ArgumentError(BlockJacobiError, ValueError):
    """ Raised when an argument is outside of its documented range. """


class DimensionError(ArgumentError):
    """ Raised when vector or matrix dimensions do not agree. """


class PrecisionError(BlockJacobiError):
    """ Raised when a binary32 operation is requested before the binary32
        copy of the operand has been materialized.
    """


class SparseFormatError(BlockJacobiError):
    """ Raised when compressed-row arrays violate the storage invariants. """


class ParseError(BlockJacobiError):
    """ Raised when a text artifact cannot be parsed.

    Arguments
    ---------
    message : str
        Description of the problem.
    line : int
        One-based line number at which the problem was detected, if known.
    """

    def __init__(self, message, line=None):

        # Prefix the line number, when available.
        text = message if line is None else f'line {line}: {message}'
        super().__init__(text)

        # Keep the line number for programmatic access.
        self.line = line


class MatrixMarketError(ParseError):
    """ Raised for malformed or unsupported Matrix Market input. """


class PartitionError(ParseError):
    """ Raised for an invalid partition or partition file. """


class SingularBlockError(BlockJacobiError):
    """ Raised when a factorization meets a zero pivot it may not replace.

    Exactly one of `column` (left-looking LU) or `row` (ILU(0)) is set.
    """

    def __init__(self, message, column=None, row=None):
        super().__init__(message)
        self.column = column
        self.row = row


class PreconditionerError(BlockJacobiError):
    """ Raised when a preconditioner is applied in a way it was not built
        for.
    """


class KrylovError(BlockJacobiError):
    """ Raised for misuse of the Arnoldi process, or when the spectral
        diagnostics cannot be computed.
    """


# Main.
if __name__ == '__main__':
    import doctest
    doctest.testmod()
