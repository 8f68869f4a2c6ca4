"""
Shared JSON helpers for manifests, split files and reports.
All writers go through dump_json so identical inputs give identical bytes.
"""
import json
from datetime import date, datetime
from pathlib import Path

import numpy as np

from fusionpr.errors import FormatError


def format_date(value) -> str:
    """Format a date, datetime or ISO string as YYYY-MM-DD."""
    if value is None:
        return '-'
    if isinstance(value, str):
        return value[:10] if len(value) >= 10 else value
    if isinstance(value, (datetime, date)):
        return value.strftime('%Y-%m-%d')
    return str(value)[:10]


def parse_date(value, field: str = "date") -> date:
    """Parse an ISO-8601 calendar date."""
    if isinstance(value, datetime):
        return value.date()
    if isinstance(value, date):
        return value
    try:
        return date.fromisoformat(str(value)[:10])
    except ValueError:
        raise FormatError(f"not an ISO-8601 date: {value!r}", field=field)


def json_serial(obj):
    """JSON serializer for objects not serializable by default json code."""
    if isinstance(obj, datetime):
        return obj.isoformat()
    if isinstance(obj, date):
        return obj.isoformat()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Type {type(obj)} not serializable")


def dumps_json(value) -> str:
    return json.dumps(value, default=json_serial, indent=2, ensure_ascii=False) + "\n"


def dump_json(value, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(value), encoding="utf-8")


def load_json(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise
    except UnicodeDecodeError as e:
        raise FormatError("file is not UTF-8", path=path, offset=e.start)
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"invalid JSON: {e.msg}", path=path, offset=e.pos)
