"""
Confines experiment output to one directory.
"""
from pathlib import Path
from typing import Union

from src.exceptions import OutputPathError


class OutputDirectory:
    """Resolves output file names against a root and refuses anything outside it"""

    def __init__(self, root: Union[str, Path]):
        """
        Args:
            root: Output directory; created on first use
        """
        self.root = Path(root).resolve()

    def resolve(self, name: Union[str, Path]) -> Path:
        """
        Absolute path of an output file inside the root.

        Args:
            name: Relative file name (subdirectories allowed)

        Returns:
            Absolute path under the root; parent directories are created

        Raises:
            OutputPathError: If the path is absolute outside the root or climbs out with ../
        """
        path = Path(name)
        candidate = path if path.is_absolute() else self.root / path
        resolved = candidate.resolve()
        try:
            resolved.relative_to(self.root)
        except ValueError:
            raise OutputPathError(str(name), str(self.root))
        resolved.parent.mkdir(parents=True, exist_ok=True)
        return resolved

    def relative(self, path: Union[str, Path]) -> str:
        """Root-relative form of a path inside the root, with forward slashes."""
        resolved = Path(path).resolve()
        try:
            return resolved.relative_to(self.root).as_posix()
        except ValueError:
            raise OutputPathError(str(path), str(self.root))
