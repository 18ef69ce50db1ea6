"""Binary frame codec for the coordination protocol.

Every frame is little-endian:

    type     1 byte
    src      2 bytes   (0xFFFF = coordinator)
    dst      2 bytes   (0xFFFF = coordinator)
    channel  2 bytes   (destination input channel; 0 when not applicable)
    body     fixed per type: tags are 12 bytes (int64 time ns + uint32
             microstep), raw timestamps are 8-byte int64 ns
    paylen   4 bytes
    payload  paylen bytes

Type codes 0x20 and above are reserved for future protocol revisions and
are rejected on decode.

Body layout by type:

    REGISTER       -                      START_PROPOSE  reading, rtt
    START_GRANT    start tag              NMR            ltc tag, net tag
    TAG_GRANT      granted tag            TAGGED_MSG     tag
    PHYSICAL_MSG   -                      ABSENT         watermark tag
    STOP_REQ       -                      STOP_REPLY     proposed tag
    STOP_GRANT     final tag              CLOCK_T1       t1
    CLOCK_T3       t1, t2, t3
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

from fedcoord.exceptions import WireError
from fedcoord.tags import Tag

RTI_ID = 0xFFFF

_HEADER = struct.Struct("<BHHH")
_TAG = struct.Struct("<qI")
_TIME = struct.Struct("<q")
_PAYLEN = struct.Struct("<I")

MAX_PAYLOAD = 2**31 - 1


class MsgType(IntEnum):
    REGISTER = 0x01
    START_PROPOSE = 0x02
    START_GRANT = 0x03
    NMR = 0x04
    TAG_GRANT = 0x05
    TAGGED_MSG = 0x06
    PHYSICAL_MSG = 0x07
    ABSENT = 0x08
    STOP_REQ = 0x09
    STOP_REPLY = 0x0A
    STOP_GRANT = 0x0B
    CLOCK_T1 = 0x0C
    CLOCK_T3 = 0x0D


# (tag fields, raw time fields) carried by each type, in wire order.
_BODY_SHAPE: dict[MsgType, tuple[int, int]] = {
    MsgType.REGISTER: (0, 0),
    MsgType.START_PROPOSE: (0, 2),
    MsgType.START_GRANT: (1, 0),
    MsgType.NMR: (2, 0),
    MsgType.TAG_GRANT: (1, 0),
    MsgType.TAGGED_MSG: (1, 0),
    MsgType.PHYSICAL_MSG: (0, 0),
    MsgType.ABSENT: (1, 0),
    MsgType.STOP_REQ: (0, 0),
    MsgType.STOP_REPLY: (1, 0),
    MsgType.STOP_GRANT: (1, 0),
    MsgType.CLOCK_T1: (0, 1),
    MsgType.CLOCK_T3: (0, 3),
}


@dataclass
class WireMessage:
    type: MsgType
    src: int
    dst: int
    channel: int = 0
    tag: Tag | None = None
    tag2: Tag | None = None  # NMR carries (ltc, net)
    times: tuple[int, ...] = ()
    payload: bytes = b""

    def header_size(self) -> int:
        ntags, ntimes = _BODY_SHAPE[self.type]
        return _HEADER.size + ntags * _TAG.size + ntimes * _TIME.size + _PAYLEN.size


def encode(msg: WireMessage) -> bytes:
    ntags, ntimes = _BODY_SHAPE[msg.type]
    tags = [t for t in (msg.tag, msg.tag2) if t is not None]
    if len(tags) != ntags:
        raise WireError(f"{msg.type.name} carries {ntags} tag(s), got {len(tags)}")
    if len(msg.times) != ntimes:
        raise WireError(
            f"{msg.type.name} carries {ntimes} timestamp(s), got {len(msg.times)}"
        )
    if len(msg.payload) > MAX_PAYLOAD:
        raise WireError("payload too large")
    parts = [_HEADER.pack(msg.type, msg.src, msg.dst, msg.channel)]
    for t in tags:
        parts.append(_TAG.pack(t.time, t.microstep))
    for ts in msg.times:
        parts.append(_TIME.pack(ts))
    parts.append(_PAYLEN.pack(len(msg.payload)))
    parts.append(msg.payload)
    return b"".join(parts)


def decode_prefix(buf: bytes | memoryview) -> tuple[WireMessage, int] | None:
    """Decode one frame from the start of buf.

    Returns (message, bytes consumed), or None when buf holds only a prefix
    of a frame. Raises WireError on malformed input.
    """
    buf = memoryview(buf)
    if len(buf) < _HEADER.size:
        return None
    code, src, dst, channel = _HEADER.unpack_from(buf, 0)
    try:
        mtype = MsgType(code)
    except ValueError:
        kind = "reserved" if code >= 0x20 else "unknown"
        raise WireError(f"{kind} message type 0x{code:02X}")
    ntags, ntimes = _BODY_SHAPE[mtype]
    pos = _HEADER.size
    fixed = ntags * _TAG.size + ntimes * _TIME.size + _PAYLEN.size
    if len(buf) < pos + fixed:
        return None
    tags = []
    for _ in range(ntags):
        t, m = _TAG.unpack_from(buf, pos)
        tags.append(Tag(t, m))
        pos += _TAG.size
    times = []
    for _ in range(ntimes):
        (ts,) = _TIME.unpack_from(buf, pos)
        times.append(ts)
        pos += _TIME.size
    (paylen,) = _PAYLEN.unpack_from(buf, pos)
    pos += _PAYLEN.size
    if paylen > MAX_PAYLOAD:
        raise WireError("payload too large")
    if len(buf) < pos + paylen:
        return None
    payload = bytes(buf[pos : pos + paylen])
    pos += paylen
    msg = WireMessage(
        type=mtype,
        src=src,
        dst=dst,
        channel=channel,
        tag=tags[0] if ntags >= 1 else None,
        tag2=tags[1] if ntags >= 2 else None,
        times=tuple(times),
        payload=payload,
    )
    return msg, pos


def decode(buf: bytes) -> WireMessage:
    """Decode exactly one complete frame; trailing bytes are an error."""
    got = decode_prefix(buf)
    if got is None:
        raise WireError(f"truncated frame ({len(buf)} bytes)")
    msg, used = got
    if used != len(buf):
        raise WireError(f"{len(buf) - used} trailing bytes after frame")
    return msg


class StreamDecoder:
    """Incremental decoder for a byte stream of concatenated frames."""

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[WireMessage]:
        self._buf.extend(data)
        out = []
        while True:
            got = decode_prefix(self._buf)
            if got is None:
                break
            msg, used = got
            del self._buf[:used]
            out.append(msg)
        return out

    @property
    def pending(self) -> int:
        return len(self._buf)


_CAPTURE = struct.Struct("<qHHI")


def write_capture(fp, when: int, msg: WireMessage) -> None:
    """Append one frame to a capture log: [time][src][dst][len][frame]."""
    frame = encode(msg)
    fp.write(_CAPTURE.pack(when, msg.src, msg.dst, len(frame)))
    fp.write(frame)


def read_capture(fp):
    """Yield (time, WireMessage) records from a capture log."""
    while True:
        head = fp.read(_CAPTURE.size)
        if not head:
            return
        if len(head) < _CAPTURE.size:
            raise WireError("truncated capture record")
        when, _src, _dst, size = _CAPTURE.unpack(head)
        frame = fp.read(size)
        if len(frame) < size:
            raise WireError("truncated capture record")
        yield when, decode(frame)
