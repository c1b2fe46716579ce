"""Small shared helpers."""

import os
import tempfile
from pathlib import Path

# Upper bound on rows*cols accepted from file headers. Keeps a hostile or
# damaged header from provoking a giant allocation.
MAX_CELLS = 1 << 26


def atomic_write_text(path, text):
    """Write text to path via a temp file and rename, so readers never see
    a half-written file. Always uses LF line endings."""
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_bytes(path, data):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
