"""Malformed NPY files committed under ``fixtures/`` and the error each must raise."""

from pathlib import Path

from latfuse import npyio

FIXTURES = Path(__file__).parent / "fixtures"

MALFORMED = {
    "bad_magic": npyio.BadMagicError,
    "version_2_0": npyio.UnsupportedVersionError,
    "dtype_f16": npyio.UnsupportedDtypeError,
    "fortran_order": npyio.FortranOrderError,
    "rank_5": npyio.UnsupportedShapeError,
    "truncated": npyio.TruncatedPayloadError,
    "trailing_bytes": npyio.TrailingDataError,
    "garbled_header": npyio.HeaderParseError,
}


def fixture(name):
    return FIXTURES / f"{name}.npy"
