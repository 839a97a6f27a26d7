class SegQualityError(Exception):
    exit_code = 1


class ValidationError(SegQualityError):
    exit_code = 2


class IoFailure(SegQualityError):
    exit_code = 3


class BadMagic(ValidationError):
    pass


class BadVersion(ValidationError):
    pass


class DimMismatch(ValidationError):
    pass


class InvalidProbability(ValidationError):
    pass


class InvalidLabel(ValidationError):
    pass


class ContainsIgnoreLabel(ValidationError):
    pass


class EmptyRegion(ValidationError):
    pass


class EmptyInterior(ValidationError):
    pass


class TooFewRows(ValidationError):
    pass


class BinTooSmall(ValidationError):
    pass


class RankDeficient(ValidationError):
    pass


class SingleClass(ValidationError):
    pass


class NoValidationSet(ValidationError):
    pass


class ZeroVariance(ValidationError):
    pass


class BlobOutOfBounds(ValidationError):
    pass


class MissingValue(ValidationError):
    pass


class ConfigError(ValidationError):
    pass
