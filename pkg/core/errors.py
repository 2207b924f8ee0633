"""Exception hierarchy shared by every package."""


class NdBftError(Exception):
    """Base class for all errors raised by this project."""


class ConfigurationError(NdBftError):
    """Invalid configuration, scenario or key material."""


class MissingKeyError(ConfigurationError):
    def __init__(self, principal: str):
        super().__init__(f"no key material configured for {principal}")
        self.principal = principal


class InvalidMaskError(NdBftError):
    def __init__(self, mask: int):
        super().__init__(f"invalid nondeterminism mask 0x{mask:02x}")
        self.mask = mask


class DecodeError(NdBftError):
    """Malformed wire bytes; ``offset`` is where parsing stopped."""

    def __init__(self, offset: int, reason: str):
        super().__init__(f"decode error at offset {offset}: {reason}")
        self.offset = offset
        self.reason = reason


class ApplicationError(NdBftError):
    """An application upcall failed."""


class ReplayStalled(ApplicationError):
    """Replay of a recorded order cannot make progress."""


class ExecutionBudgetExceeded(ApplicationError):
    def __init__(self, consumed_us: int, budget_us: int):
        super().__init__(f"execution used {consumed_us}us of a {budget_us}us budget")
        self.consumed_us = consumed_us
        self.budget_us = budget_us


class TraceError(NdBftError):
    """Trace is truncated or malformed."""


class CallTimeout(NdBftError):
    def __init__(self, client: int, request_id: int):
        super().__init__(f"client {client} request {request_id} exceeded its deadline")
        self.client = client
        self.request_id = request_id


class RequestRejected(NdBftError):
    def __init__(self, client: int, request_id: int, detail: bytes = b""):
        super().__init__(f"client {client} request {request_id} rejected by the application")
        self.client = client
        self.request_id = request_id
        self.detail = detail


class UsageError(NdBftError):
    """Conflicting or invalid command-line flags."""
