"""Binary PGM (P5) image files with maxval 65535.

16-bit depth is required: the attack budget is 2/255 in pixel units and an
8-bit store would quantize most of the perturbation away. Samples are
big-endian per the netpbm convention; pixel value = sample / 65535.
"""

import numpy as np

MAXVAL = 65535


class PgmFormatError(ValueError):
    """Malformed header, unsupported maxval, or truncated payload."""


def write_image(path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("image must be 2-D")
    if np.any(img < 0.0) or np.any(img > 1.0) or not np.all(np.isfinite(img)):
        raise ValueError("pixels must lie in [0, 1]")
    h, w = img.shape
    samples = np.round(img * MAXVAL).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{MAXVAL}\n".encode("ascii"))
        fh.write(samples.tobytes())


def _header_tokens(data: bytes):
    """Yield whitespace-separated header tokens, skipping '#' comments, and
    finally the offset of the first payload byte."""
    i = 0
    n = len(data)
    tokens = []
    while len(tokens) < 4 and i < n:
        ch = data[i:i + 1]
        if ch == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        elif ch.isspace():
            i += 1
        else:
            start = i
            while i < n and not data[i:i + 1].isspace() and data[i:i + 1] != b"#":
                i += 1
            tokens.append(data[start:i])
    if len(tokens) < 4:
        raise PgmFormatError("incomplete PGM header")
    # Exactly one whitespace byte separates the maxval from the payload.
    if i >= n or not data[i:i + 1].isspace():
        raise PgmFormatError("missing whitespace after maxval")
    return tokens, i + 1


def read_image(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, payload_start = _header_tokens(data)
    if tokens[0] != b"P5":
        raise PgmFormatError(f"not a binary graymap: magic {tokens[0]!r}")
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise PgmFormatError("non-numeric header field") from exc
    if w < 1 or h < 1:
        raise PgmFormatError("non-positive image dimensions")
    if maxval != MAXVAL:
        raise PgmFormatError(f"unsupported maxval {maxval}; expected {MAXVAL}")
    payload = data[payload_start:payload_start + 2 * w * h]
    if len(payload) != 2 * w * h:
        raise PgmFormatError("truncated pixel payload")
    samples = np.frombuffer(payload, dtype=">u2").reshape(h, w)
    return samples.astype(np.float64) / MAXVAL
