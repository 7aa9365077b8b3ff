"""
Report emission for the nikolskii-lb CLI
"""

import json
import logging
import os
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from nikolskii_lb import __version__
from nikolskii_lb.core.models import OutputFormat, RunConfig
from nikolskii_lb.utils.file_utils import FileUtils, to_jsonable

logger = logging.getLogger(__name__)

Table = Tuple[Sequence[str], Sequence[Sequence[Any]]]


def config_identity(config: RunConfig) -> Dict[str, Any]:
    """Configuration fields that determine the output bytes; out_dir is only the location"""
    data = config.to_dict()
    data.pop("out_dir", None)
    return data


def report_stem(config: RunConfig) -> str:
    """<command>-<hash of config>"""
    return f"{config.command.value}-{FileUtils.config_hash(config_identity(config))}"


def envelope(config: RunConfig, payload: Mapping[str, Any],
             constants: Optional[Mapping[str, Any]] = None,
             provenance: Optional[Mapping[str, Any]] = None) -> Dict[str, Any]:
    return {
        "command": config.command.value,
        "version": __version__,
        "config": config_identity(config),
        "config_hash": FileUtils.config_hash(config_identity(config)),
        "constants": dict(constants or {}),
        "provenance": dict(provenance or {}),
        "result": dict(payload),
    }


def _csv_preamble(document: Mapping[str, Any]) -> str:
    meta = {k: document[k] for k in ("command", "version", "config_hash")}
    lines = [
        "# " + json.dumps(to_jsonable(meta), sort_keys=True, separators=(",", ":")),
        "# config " + json.dumps(to_jsonable(document["config"]), sort_keys=True,
                                 separators=(",", ":")),
    ]
    if document["constants"]:
        lines.append("# constants " + json.dumps(to_jsonable(document["constants"]),
                                                 sort_keys=True, separators=(",", ":")))
    if document["provenance"]:
        lines.append("# provenance " + json.dumps(to_jsonable(document["provenance"]),
                                                  sort_keys=True, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def emit_report(config: RunConfig, payload: Mapping[str, Any],
                tables: Optional[Mapping[str, Table]] = None,
                constants: Optional[Mapping[str, Any]] = None,
                provenance: Optional[Mapping[str, Any]] = None,
                out_dir: Optional[str] = None) -> List[str]:
    """
    Write the report files of one run

    The JSON document is always written. Each table becomes a CSV plot-data
    file; with format csv the first table doubles as the main report.
    File names depend only on the command and the configuration hash, and
    nothing time-dependent is written, so equal configs give equal bytes.

    Args:
        config: Validated run configuration
        payload: Serializable result
        tables: Named (header, rows) tables, e.g. {"rate_vs_n": ...}
        constants: Estimated and named constants embedded in every file
        provenance: Provenance tags of the reported numbers
        out_dir: Target directory (defaults to config.out_dir)

    Returns:
        Paths written, JSON first

    Raises:
        IOError: unwritable output path
    """
    directory = FileUtils.ensure_dir(out_dir or config.out_dir)
    stem = report_stem(config)
    document = envelope(config, payload, constants, provenance)
    paths = []

    json_path = os.path.join(str(directory), f"{stem}.json")
    FileUtils.write_json(json_path, document)
    paths.append(json_path)

    preamble = _csv_preamble(document)
    for i, (name, (header, rows)) in enumerate((tables or {}).items()):
        main = config.format is OutputFormat.CSV and i == 0
        csv_path = os.path.join(str(directory), f"{stem}.csv" if main else f"{stem}-{name}.csv")
        FileUtils.write_file(csv_path, preamble + FileUtils.dumps_csv(header, rows))
        paths.append(csv_path)

    logger.info("wrote %d report file(s) for %s", len(paths), stem)
    return paths


def write_samples(config: RunConfig, x: np.ndarray, out_dir: Optional[str] = None) -> str:
    """
    Write draws as <stem>-samples.csv with header x1,...,xd

    Args:
        config: Validated run configuration
        x: Array of shape (K, d)
        out_dir: Target directory (defaults to config.out_dir)

    Returns:
        Path written
    """
    directory = FileUtils.ensure_dir(out_dir or config.out_dir)
    rows = x.tolist()
    d = x.shape[-1]
    path = os.path.join(str(directory), f"{report_stem(config)}-samples.csv")
    FileUtils.write_csv(path, [f"x{j + 1}" for j in range(d)], rows)
    logger.info("wrote %d sample(s) to %s", len(rows), path)
    return path
