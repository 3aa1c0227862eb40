"""Exception hierarchy shared by every subsystem.

Errors fall in two families that the command line maps to different exit
codes: :class:`DeniedError` (authorization or validation refused something,
exit 1) and :class:`FormatError` / :class:`TransportError` (input could not be
read or a peer could not be reached, exit 2).
"""


class VomsError(Exception):
    """Base class for all toolkit errors."""

    code = "ERROR"


class DeniedError(VomsError):
    code = "DENIED"


class FormatError(VomsError):
    code = "MALFORMED"


class TransportError(VomsError):
    code = "TRANSPORT"


# serialization
class UnsupportedValue(FormatError):
    code = "UNSUPPORTED_VALUE"


class MalformedDocument(FormatError):
    code = "MALFORMED_DOCUMENT"


# credentials
class NotAnAuthority(DeniedError):
    code = "NOT_AN_AUTHORITY"


class WindowOutOfRange(DeniedError):
    code = "WINDOW_OUT_OF_RANGE"


class InvalidChain(DeniedError):
    code = "INVALID_CHAIN"

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


# registry
class NotAuthorized(DeniedError):
    code = "NOT_AUTHORIZED"


class UnknownEntity(VomsError):
    code = "UNKNOWN_ENTITY"


class UnknownScope(UnknownEntity):
    code = "UNKNOWN_SCOPE"


class UnknownRequest(UnknownEntity):
    code = "UNKNOWN_REQUEST"


class ConflictError(VomsError):
    code = "CONFLICT"


class CycleWouldForm(ConflictError):
    code = "CYCLE_WOULD_FORM"


class DuplicateName(ConflictError):
    code = "DUPLICATE_NAME"


class AlreadyDecided(ConflictError):
    code = "ALREADY_DECIDED"


# attribute protocol
class RequestError(DeniedError):
    """A request refused by an attribute or admin server."""

    code = "REQUEST_ERROR"

    def __init__(self, detail="", endpoint=None):
        super().__init__(detail if isinstance(detail, str) else ", ".join(detail))
        self.detail = detail
        self.endpoint = endpoint

    def to_document(self):
        return {"code": self.code, "detail": self.detail}


class AuthenticationFailed(RequestError):
    code = "AUTHENTICATION_FAILED"


class ReplayDetected(RequestError):
    code = "REPLAY_DETECTED"


class UnknownUser(RequestError):
    code = "UNKNOWN_USER"


class UnauthorizedAttributes(RequestError):
    code = "UNAUTHORIZED_ATTRIBUTES"

    def __init__(self, offenders, endpoint=None):
        super().__init__(list(offenders), endpoint)
        self.offenders = list(offenders)


class MalformedRequest(FormatError):
    code = "MALFORMED_REQUEST"


class MalformedPayload(FormatError):
    code = "MALFORMED_PAYLOAD"


class EndpointUnreachable(TransportError):
    code = "ENDPOINT_UNREACHABLE"

    def __init__(self, endpoint, reason=""):
        super().__init__(f"{endpoint}: {reason}" if reason else endpoint)
        self.endpoint = endpoint


# site enforcement
class ConfigurationError(FormatError):
    code = "CONFIGURATION_ERROR"


class PluginFault(VomsError):
    code = "PLUGIN_FAULT"


class UnknownMethod(DeniedError):
    code = "UNKNOWN_METHOD"


# credential mapping
class PoolExhausted(DeniedError):
    code = "POOL_EXHAUSTED"


class NoSuchLease(UnknownEntity):
    code = "NO_SUCH_LEASE"


class NoMappingRule(DeniedError):
    code = "NO_MAPPING_RULE"


# grid-mapfile tooling
class MalformedConfig(FormatError):
    code = "MALFORMED_CONFIG"


def error_for_code(code):
    """The most specific error class with ``code``, or :class:`RequestError`."""
    stack = [VomsError]
    while stack:
        cls = stack.pop()
        if cls.code == code:
            return cls
        stack.extend(cls.__subclasses__())
    return RequestError


def remote_error(code, detail, endpoint=None):
    """Rebuild an error received as a ``{code, detail}`` document."""
    cls = error_for_code(code)
    if issubclass(cls, RequestError):
        exc = cls(detail)
    else:
        try:
            exc = cls(detail if isinstance(detail, str) else ", ".join(map(str, detail)))
        except TypeError:
            exc = RequestError(detail)
    if endpoint is not None:
        exc.endpoint = endpoint
    return exc
