"""Encode a hybrid message, inspect the frame, decode it back."""

import struct

import numpy as np

from hycomm import HybridMessage, PlanarPose, deserialize, serialize
from hycomm.messaging import HEADER_BYTES

msg = HybridMessage(
    boxes=np.array([[10.0, -3.5, 0.8, 4.2, 1.8, 1.6, 0.25]]),
    points=np.array([[11.0, -3.0, 0.5, 0.7], [9.2, -4.1, 1.1, 0.3]]),
    sender_pose=PlanarPose(1.5, -2.25, 0.5),
)
frame = serialize(msg)
print(f"{len(frame)} bytes = {HEADER_BYTES} header + {msg.payload_bytes} payload")
magic, version, x, y, yaw, nb, npt = struct.unpack_from("<4sH3fII", frame)
print(f"magic {magic!r} version {version} pose ({x}, {y}, {yaw}) boxes {nb} points {npt}")
print(frame[:HEADER_BYTES].hex(" "))

back = deserialize(frame)
print("round trip equal:", back == msg)

try:
    deserialize(frame[:-3])
except ValueError as exc:
    print("truncated frame rejected:", exc)
