import hashlib
import hmac
from typing import Dict, Optional, Sequence, Tuple

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from core.errors import MissingKeyError
from models.auth import Address, AuthMode, AuthTag, Role


MAC_SIZE = 8


def digest(data: bytes) -> bytes:
    """SHA-256 of ``data``."""
    return hashlib.sha256(data).digest()


class KeyRing:
    """
    Deterministic key material for every principal of a run.

    Pairwise HMAC keys and Ed25519 signing keys are derived from one seed, so
    a (scenario, seed) pair always reproduces the same tags.
    """

    def __init__(self, seed: bytes, replicas: int, clients: int):
        self.seed = seed
        self.replicas = replicas
        self.clients = clients
        self._mac_keys: Dict[Tuple[str, str], bytes] = {}
        self._signing_keys: Dict[str, Ed25519PrivateKey] = {}
        self._verify_keys: Dict[str, Ed25519PublicKey] = {}

    def knows(self, address: Address) -> bool:
        limit = self.replicas if address.role == Role.REPLICA else self.clients
        return address.index < limit

    def _require(self, address: Address):
        if not self.knows(address):
            raise MissingKeyError(address.principal)

    @property
    def replica_addresses(self) -> Tuple[Address, ...]:
        return tuple(Address.replica(i) for i in range(self.replicas))

    def mac_key(self, a: Address, b: Address) -> bytes:
        self._require(a)
        self._require(b)
        pair = tuple(sorted((a.principal, b.principal)))
        key = self._mac_keys.get(pair)
        if key is None:
            key = digest(b"mac|" + self.seed + b"|" + "|".join(pair).encode())
            self._mac_keys[pair] = key
        return key

    def signing_key(self, principal: Address) -> Ed25519PrivateKey:
        self._require(principal)
        key = self._signing_keys.get(principal.principal)
        if key is None:
            material = digest(b"ed25519|" + self.seed + b"|" + principal.principal.encode())
            key = Ed25519PrivateKey.from_private_bytes(material)
            self._signing_keys[principal.principal] = key
        return key

    def verify_key(self, principal: Address) -> Ed25519PublicKey:
        key = self._verify_keys.get(principal.principal)
        if key is None:
            key = self.signing_key(principal).public_key()
            self._verify_keys[principal.principal] = key
        return key


def _mac(key: bytes, data: bytes) -> bytes:
    return hmac.new(key, data, hashlib.sha256).digest()[:MAC_SIZE]


def authenticate(
    sender: Address,
    data: bytes,
    keyring: KeyRing,
    mode: AuthMode = AuthMode.AUTHENTICATOR,
    receivers: Optional[Sequence[Address]] = None,
) -> AuthTag:
    """
    Authenticate ``data`` on behalf of ``sender``.

    Args:
        sender: Principal producing the tag
        data: Encoded message bytes
        keyring: Key material of the run
        mode: SIGNATURE (one Ed25519 tag) or AUTHENTICATOR (one MAC per receiver)
        receivers: Receiver set for authenticators; defaults to all replicas

    Returns:
        AuthTag verifiable by every intended receiver
    """
    if mode == AuthMode.SIGNATURE:
        return AuthTag(mode=mode, entries=(keyring.signing_key(sender).sign(data),))

    if receivers is None:
        receivers = keyring.replica_addresses
    entries = tuple(_mac(keyring.mac_key(sender, r), data) for r in receivers)
    return AuthTag(mode=mode, entries=entries)


def verify(
    tag: AuthTag,
    sender: Address,
    data: bytes,
    receiver: Address,
    keyring: KeyRing,
) -> bool:
    """
    Check ``tag`` as ``receiver``.

    A replica checks authenticator entry ``receiver.index``; a client is the
    single receiver of its replies and checks entry 0.
    """
    if not keyring.knows(sender) or not keyring.knows(receiver):
        return False

    if tag.mode == AuthMode.SIGNATURE:
        if len(tag.entries) != 1:
            return False
        try:
            keyring.verify_key(sender).verify(tag.entries[0], data)
        except InvalidSignature:
            return False
        return True

    position = receiver.index if receiver.role == Role.REPLICA else 0
    if position >= len(tag.entries):
        return False
    expected = _mac(keyring.mac_key(sender, receiver), data)
    return hmac.compare_digest(tag.entries[position], expected)
