#!/usr/bin/env python3
"""
Experiment artifacts
Deterministic CSV tables and the JSON manifest that accompanies them
"""

import csv
import json
import math
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

import numpy as np

import potential, disorder, dynamics, averaging, decay, thermo

logger = logging.getLogger(__name__)

MANIFEST_SUFFIX = '.manifest.json'


def format_cell(value: Any) -> str:
    """Shortest round-trip text for floats, plain text for everything else"""
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """UTF-8, comma separated, header first, '\\n' line endings"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row {count} of {path.name} has {len(row)} cells, header has {len(header)}")
            writer.writerow([format_cell(v) for v in row])
            count += 1
    logger.info(f"Wrote {count} rows to {path}")
    return path


def write_json(path: Path, document: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(_jsonable(document), f, indent=2, sort_keys=True)
        f.write('\n')
    return path


def _jsonable(value: Any) -> Any:
    # JSON has no inf/nan; write them as strings
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else repr(value)
    return value


def module_versions() -> Dict[str, str]:
    return {m.__name__: m.__version__ for m in (potential, disorder, dynamics, averaging, decay, thermo)}


def write_manifest(out_dir: Path, experiment: str, outputs: List[Path], config_echo: Dict[str, Any],
                   master_seed: int, workers: int, wall_time: float) -> Path:
    """<experiment>.manifest.json listing every output file of the run"""
    out_dir = Path(out_dir)
    manifest = {
        'experiment': experiment,
        'outputs': sorted(Path(p).name for p in outputs),
        'config': config_echo,
        'master_seed': master_seed,
        'workers': workers,
        'versions': module_versions(),
        'wall_time_seconds': wall_time,
        'timestamp': datetime.now().isoformat(),
    }
    path = write_json(out_dir / f"{experiment}{MANIFEST_SUFFIX}", manifest)
    logger.info(f"Wrote manifest {path}")
    return path


def find_orphans(out_dir: Path) -> List[str]:
    """Output files in out_dir that no manifest lists"""
    out_dir = Path(out_dir)
    listed = set()
    manifests = sorted(out_dir.glob(f"*{MANIFEST_SUFFIX}"))
    for manifest in manifests:
        with open(manifest, 'r', encoding='utf-8') as f:
            listed.update(json.load(f).get('outputs', []))
    names = {p.name for p in out_dir.iterdir() if p.is_file()} - {m.name for m in manifests}
    return sorted(names - listed)
