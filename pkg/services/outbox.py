from typing import List, NamedTuple, Tuple

from models.auth import Address
from models.message import MessageTag


class Outbound(NamedTuple):
    destinations: Tuple[Address, ...]
    data: bytes
    tag: MessageTag


class TimerRequest(NamedTuple):
    key: str
    fire_at: int


class Outbox:
    """Everything one input event produced: messages, timers and CPU cost."""

    def __init__(self):
        self.messages: List[Outbound] = []
        self.timers: List[TimerRequest] = []
        self.cost_us = 0

    def send(self, destinations: Tuple[Address, ...], data: bytes, tag: MessageTag):
        if destinations:
            self.messages.append(Outbound(tuple(destinations), data, tag))

    def timer(self, key: str, fire_at: int):
        self.timers.append(TimerRequest(key, fire_at))

    def __bool__(self) -> bool:
        return bool(self.messages or self.timers)
