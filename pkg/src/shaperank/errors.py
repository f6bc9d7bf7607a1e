"""Exception hierarchy shared by all shaperank modules."""


class ShapeRerankError(Exception):
    """Base class for every error raised by shaperank."""


class ParseError(ShapeRerankError):
    pass


class EmptyCloud(ShapeRerankError):
    pass


class NonFiniteCoordinate(ShapeRerankError):
    pass


class DegenerateCloud(ShapeRerankError):
    pass


class TooFewPoints(ShapeRerankError):
    pass


class DimensionMismatch(ShapeRerankError):
    pass


class DuplicateId(ShapeRerankError):
    pass


class UnknownModelId(ShapeRerankError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class VersionMismatch(ShapeRerankError):
    pass


class CorruptFile(ShapeRerankError):
    pass


class MissingGroundTruth(ShapeRerankError):
    pass


class MissingCategory(ShapeRerankError):
    pass


class InvalidSpec(ShapeRerankError, ValueError):
    pass


class ManifestError(ShapeRerankError):
    pass
