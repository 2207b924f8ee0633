from enum import Enum, IntEnum
from typing import Tuple

from pydantic import BaseModel, ConfigDict, Field


class Role(str, Enum):
    """Kinds of protocol principals."""
    REPLICA = "replica"
    CLIENT = "client"


class Address(BaseModel):
    """A protocol endpoint: replica i or client c."""

    model_config = ConfigDict(frozen=True)

    role: Role
    index: int = Field(ge=0, le=0xFFFFFFFF)

    @classmethod
    def replica(cls, index: int) -> "Address":
        return cls(role=Role.REPLICA, index=index)

    @classmethod
    def client(cls, index: int) -> "Address":
        return cls(role=Role.CLIENT, index=index)

    @property
    def principal(self) -> str:
        return f"{self.role.value}-{self.index}"

    @property
    def is_replica(self) -> bool:
        return self.role == Role.REPLICA

    def __str__(self) -> str:
        return self.principal


class AuthMode(IntEnum):
    SIGNATURE = 1
    AUTHENTICATOR = 2


class AuthTag(BaseModel):
    """
    Message authentication.

    SIGNATURE carries one Ed25519 signature; AUTHENTICATOR carries one
    truncated HMAC per intended receiver, indexed by receiver position.
    """

    model_config = ConfigDict(frozen=True)

    mode: AuthMode
    entries: Tuple[bytes, ...] = Field(default=(), max_length=0xFFFF)
