"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class OrderError(ValueError):
    """Base class for every error raised by orderkit."""


class SelfPairError(OrderError):
    pass


class UnsupportedLabelError(OrderError):
    pass


class GraphError(OrderError):
    """Raised when an annotation references an undeclared instance."""


class ParseError(OrderError):
    """A document or token could not be parsed.

    ``path`` locates the offending field inside a document (``images[0].depth[2].order``)
    and ``offset`` is a byte offset into the token or raw buffer, when known.
    """

    def __init__(self, message: str, path: str | None = None, offset: int | None = None):
        self.message = message
        self.path = path
        self.offset = offset
        where = []
        if path:
            where.append(path)
        if offset is not None:
            where.append(f"byte {offset}")
        super().__init__(f"{' @ '.join(where)}: {message}" if where else message)


class SchemaError(ParseError):
    """Well-formed document that violates the annotation schema or a type invariant."""


class SyntaxFormatError(ParseError):
    """Input is not a readable document or raster at all."""


class MetricError(OrderError):
    pass


class LossError(OrderError):
    pass


class BaselineError(OrderError):
    pass


class AggregationError(OrderError):
    pass
