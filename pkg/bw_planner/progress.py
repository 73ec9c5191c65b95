"""Progress bar for replication batches.

Thread-safe; renders to stderr only when it is a terminal, so result
output on stdout stays byte-identical between runs.
"""

import sys
import threading
import time
from typing import Optional, TextIO


def format_time(seconds: float) -> str:
    """Format seconds as human-readable time string."""
    if seconds < 60:
        return f"{int(seconds)}s"
    elif seconds < 3600:
        mins = int(seconds // 60)
        secs = int(seconds % 60)
        return f"{mins}m{secs:02d}s"
    else:
        hours = int(seconds // 3600)
        mins = int((seconds % 3600) // 60)
        return f"{hours}h{mins:02d}m"


class ProgressBar:
    """Thread-safe progress bar with ETA calculation."""

    def __init__(self, total: Optional[int], label: str = "", stream: Optional[TextIO] = None):
        self.total = total
        self.label = label
        self.current = 0
        self._stream = stream if stream is not None else sys.stderr
        self._last_render = 0.0
        self._last_len = 0
        self._enabled = self._stream.isatty()
        self._start_time = time.time()
        self._lock = threading.Lock()

    def update(self, delta: int = 1) -> None:
        """Count ``delta`` finished replications."""
        if delta <= 0:
            return
        with self._lock:
            self.current += delta
            self._render_unlocked(force=self.current == self.total)

    def _render_unlocked(self, force: bool = False) -> None:
        if not self._enabled:
            return

        now = time.time()
        if not force and (now - self._last_render) < 0.1:
            return
        self._last_render = now

        if self.total:
            ratio = min(self.current / self.total, 1.0)
            width = 30
            filled = int(width * ratio)
            bar = "=" * filled + " " * (width - filled)
            elapsed = now - self._start_time
            eta = ""
            if 0.0 < ratio < 1.0:
                eta = f" ETA {format_time(elapsed / ratio - elapsed)}"
            line = f"{self.label} [{bar}] {self.current}/{self.total}{eta}"
        else:
            line = f"{self.label} {self.current}"

        padding = " " * max(0, self._last_len - len(line))
        self._stream.write("\r" + line + padding)
        self._stream.flush()
        self._last_len = len(line)

    def finish(self) -> None:
        """Complete the progress bar and print newline."""
        if not self._enabled:
            return
        with self._lock:
            self._render_unlocked(force=True)
        self._stream.write("\n")
        self._stream.flush()
