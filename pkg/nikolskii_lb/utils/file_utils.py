"""
File utility functions for nikolskii-lb
"""

import csv
import hashlib
import io
import json
import math
import os
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, Sequence

import numpy as np


def to_jsonable(value: Any) -> Any:
    """
    Convert reports to plain JSON types

    Enums become their values, numpy scalars become Python numbers and
    infinite floats become the string "inf".
    """
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return to_jsonable(value.item())
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
    return value


class FileUtils:
    """Utility functions for report files"""

    @staticmethod
    def config_hash(config: Dict[str, Any], length: int = 12) -> str:
        """
        Stable short hash of a configuration dictionary

        Args:
            config: JSON-serializable configuration
            length: Number of hex digits kept

        Returns:
            Hex digest prefix
        """
        canonical = json.dumps(to_jsonable(config), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:length]

    @staticmethod
    def ensure_dir(directory: str) -> Path:
        try:
            path = Path(directory).expanduser()
            path.mkdir(parents=True, exist_ok=True)
            return path
        except Exception as e:
            raise IOError(f"Error creating directory {directory}: {e}")

    @staticmethod
    def dumps_json(payload: Any) -> str:
        return json.dumps(to_jsonable(payload), indent=2, sort_keys=True, default=str) + "\n"

    @staticmethod
    def write_json(file_path: str, payload: Any) -> None:
        """
        Write a JSON document with sorted keys so equal payloads give equal bytes

        Args:
            file_path: Target path
            payload: Report dictionary
        """
        FileUtils.write_file(file_path, FileUtils.dumps_json(payload))

    @staticmethod
    def dumps_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else to_jsonable(v) for v in row])
        return buffer.getvalue()

    @staticmethod
    def write_csv(file_path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
        FileUtils.write_file(file_path, FileUtils.dumps_csv(header, rows))

    @staticmethod
    def write_file(file_path: str, content: str, encoding: str = 'utf-8') -> None:
        """
        Write content to file safely

        Args:
            file_path: Path to file
            content: Content to write
            encoding: File encoding (default: utf-8)
        """
        try:
            directory = os.path.dirname(file_path)
            if directory:
                os.makedirs(directory, exist_ok=True)
            with open(file_path, 'w', encoding=encoding, newline='') as f:
                f.write(content)
        except Exception as e:
            raise IOError(f"Error writing file {file_path}: {e}")

    @staticmethod
    def read_file(file_path: str, encoding: str = 'utf-8') -> str:
        try:
            with open(file_path, 'r', encoding=encoding) as f:
                return f.read()
        except Exception as e:
            raise IOError(f"Error reading file {file_path}: {e}")
