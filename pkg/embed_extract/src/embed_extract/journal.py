"""Progress journals: which output rows are already safely on disk.

A journal is a text file next to the output: one header comment naming the
provider, then one completed row index per line. Entries are appended and
fsynced after their rows hit the data file, so every journaled row is real.
A torn final line from a crash is ignored; the row it named is simply
re-embedded.
"""

from __future__ import annotations

import os


def journal_path(out_path: str | os.PathLike) -> str:
    return f"{out_path}.journal"


class Journal:
    def __init__(self, path: str, provider_tag: str):
        self.path = path
        self.provider_tag = provider_tag
        self._fh = None

    def load(self) -> set[int]:
        """Completed row indices, or empty when no journal exists.

        A journal written under a different provider tag is an error: mixing
        backends mid-extraction would corrupt the matrix silently.
        """
        if not os.path.exists(self.path):
            return set()
        with open(self.path, encoding="utf-8") as fh:
            lines = fh.read().split("\n")
        if not lines or not lines[0].startswith("# provider="):
            raise ValueError(f"{self.path}: missing provider header")
        tag = lines[0][len("# provider=") :]
        if tag != self.provider_tag:
            raise ValueError(
                f"{self.path}: journal written by provider {tag!r}, "
                f"current run uses {self.provider_tag!r}"
            )
        done: set[int] = set()
        for k, line in enumerate(lines[1:], start=2):
            if not line:
                continue
            try:
                done.add(int(line))
            except ValueError:
                rest = lines[k:]
                if any(s for s in rest):
                    raise ValueError(f"{self.path}: line {k}: bad row index {line!r}")
                break  # torn tail from a crash; the row was never journaled
        return done

    def open_for_append(self, fresh: bool) -> None:
        mode = "w" if fresh or not os.path.exists(self.path) else "a"
        self._fh = open(self.path, mode, encoding="utf-8", newline="\n")
        if mode == "w":
            self._fh.write(f"# provider={self.provider_tag}\n")
            self._fh.flush()

    def record(self, rows) -> None:
        """Append row indices and force them to disk."""
        self._fh.write("".join(f"{r}\n" for r in rows))
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None
