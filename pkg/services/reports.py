"""Report envelopes and CSV/JSON export.

Payload numbers round-trip exactly (shortest repr in JSON, 17 significant
digits in CSV), so a rerun with the same config and seed reproduces them byte
for byte; only the envelope timestamp changes.
"""
import io
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd

from config import Config
from services.errors import InvalidArgument

logger = logging.getLogger(__name__)

FORMATS = ('json', 'csv')


def _plain(value):
    """Convert numpy scalars/arrays and non-finite floats to JSON-ready values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if value is pd.NA:
        return None
    return value


def render_json(payload):
    """Deterministic JSON text: sorted keys, NaN/inf as null.

    Floats use Python's shortest round-trip repr (at most 17 significant
    digits), so parsing the text gives back the same doubles.
    """
    return json.dumps(_plain(payload), sort_keys=True, indent=2, allow_nan=False) + '\n'


def render_csv(frame):
    output = io.StringIO()
    frame.to_csv(output, index=False, float_format='%.17g', lineterminator='\n')
    return output.getvalue()


@dataclass
class ReportEnvelope:
    payload: dict
    config: dict = field(default_factory=dict)
    tool: str = Config.TOOL_NAME
    version: str = Config.TOOL_VERSION
    timestamp: str = None

    def __post_init__(self):
        if self.timestamp is None:
            self.timestamp = datetime.now(timezone.utc).isoformat(timespec='seconds')

    def to_dict(self):
        return {
            'tool': self.tool,
            'version': self.version,
            'timestamp': self.timestamp,
            'config': self.config,
            'payload': self.payload,
        }


def write_atomic(text, path):
    """Write text to path through a temporary file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f'.{path.name}.', dir=str(path.parent))
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    logger.info('wrote %s', path)


def export(envelope, frame=None, fmt='json'):
    """Text form of a report: the JSON envelope, or the frame as CSV."""
    if fmt not in FORMATS:
        raise InvalidArgument(f'unsupported format {fmt!r}; expected one of {FORMATS}')
    if fmt == 'csv':
        if frame is None:
            raise InvalidArgument('this report has no tabular form; use --format json')
        return render_csv(frame)
    return render_json(envelope.to_dict())


def emit(text, out=None, stream=None):
    if out:
        write_atomic(text, out)
    else:
        (stream or sys.stdout).write(text)
