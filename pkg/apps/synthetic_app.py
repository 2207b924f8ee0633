import struct
from typing import Any, Union

from apps.base_app import ExecutionResult, ReplicatedApp, expand, request_digest
from core.crypto import digest
from models.message import Request
from models.payload import NdPayload, NdSegment, NdType, parse_mask


class SyntheticApp(ReplicatedApp):
    """
    Configurable service used by benchmark sweeps.

    Every operation carries the configured mask. VPRE and VPOST values are
    recomputable by backups, NPRE values come from shares, NPOST values are
    drawn from the primary's private secret. The state is a hash chain.
    """

    name = "synthetic"

    def __init__(self, replica_id: int, secret: bytes, mask: Union[int, str] = 0, exec_us: int = 10, **kwargs: Any):
        super().__init__(replica_id, secret, **kwargs)
        self.mask = parse_mask(mask) if isinstance(mask, str) else int(mask)
        self.exec_us = exec_us
        self.counter = 0
        self.chain = bytes(32)

    def nd_type_of(self, op: bytes) -> int:
        return self.mask

    def _vpost_value(self, request: Request) -> bytes:
        return expand(b"vpost|" + self.chain + request_digest(request), self.nd_value_size)

    def verify_vpost(self, request: Request, payload: NdPayload) -> bool:
        return payload.segment(NdType.VPOST) == self._vpost_value(request)

    def execute(self, seq: int, request: Request, resolved: NdPayload, view: int = 0) -> ExecutionResult:
        material = [request.op]
        recorded = []

        for seg in resolved.segments:
            if seg.nd_type & (NdType.VPRE | NdType.NPRE):
                material.append(seg.data)
        for _, share in self.shares_of(resolved):
            material.append(share)

        if self.mask & NdType.VPOST:
            value = resolved.segment(NdType.VPOST)
            if value is None:
                value = self._vpost_value(request)
                recorded.append(NdSegment(nd_type=NdType.VPOST, data=value))
            material.append(value)

        if self.mask & NdType.NPOST:
            value = resolved.segment(NdType.NPOST)
            if value is None:
                value = expand(b"npost|" + self.secret + request_digest(request), self.nd_value_size)
                recorded.append(NdSegment(nd_type=NdType.NPOST, data=value))
                self.metrics["recorded"] += 1
            else:
                self.metrics["replayed"] += 1
            material.append(value)

        body = digest(self.chain + b"".join(digest(m) for m in material))
        self.counter += 1
        self.chain = digest(body + struct.pack("<Q", self.counter))
        self.metrics["executed"] += 1

        return ExecutionResult(
            result=expand(body, self.reply_size),
            recorded=NdPayload(segments=tuple(recorded)),
            cost_us=self.exec_us,
        )

    def snapshot(self) -> bytes:
        return struct.pack("<Q", self.counter) + self.chain

    def restore(self, data: bytes):
        self.counter = struct.unpack_from("<Q", data)[0]
        self.chain = data[8:40]
