EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


class HdstError(Exception):
    pass


class ShapeError(HdstError, ValueError):
    pass


class NonFiniteError(HdstError, FloatingPointError):
    def __init__(self, stage, message=None):
        self.stage = stage
        super().__init__(message or f'non-finite values produced at stage "{stage}"')


class ConfigError(HdstError, ValueError):
    def __init__(self, message, errors=None):
        self.errors = dict(errors or {})
        if self.errors:
            details = '; '.join(
                f'{field}: {" ".join(str(m) for m in messages)}'
                for field, messages in sorted(self.errors.items())
            )
            message = f'{message} ({details})'
        super().__init__(message)


class CheckpointError(HdstError):
    pass


class MetricError(HdstError, ValueError):
    pass


# ==================== CUBE FILES ====================
class CubeFormatError(HdstError):
    code = 'format'

    def __init__(self, message, path=None):
        self.path = path
        prefix = f'{path}: ' if path else ''
        super().__init__(f'{prefix}[{self.code}] {message}')


class BadMagicError(CubeFormatError):
    code = 'bad_magic'


class BadHeaderError(CubeFormatError):
    code = 'bad_header'


class TruncatedPayloadError(CubeFormatError):
    code = 'truncated'


class DimensionMismatchError(CubeFormatError):
    code = 'dimension_mismatch'


class NonFinitePayloadError(CubeFormatError):
    code = 'non_finite'
