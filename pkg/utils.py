# utils.py
import datetime
import json
import sys
from datetime import timezone
from pathlib import Path

import config

LOG_FMT = "%Y-%m-%d %H:%M:%S"
_LEVEL_ORDER = {"DEBUG": 10, "INFO": 20, "DONE": 20, "WARN": 30, "ERROR": 40, "CRIT": 50}


def log_step(message: str, level: str = "INFO"):
    """Structured log line on stderr; stdout is reserved for command output."""
    threshold = _LEVEL_ORDER.get(config.LOG_LEVEL, 20)
    if _LEVEL_ORDER.get(level, 20) < threshold:
        return
    ts = datetime.datetime.now().strftime(LOG_FMT)
    print(f"[{ts}] [{level:<5}] {message}", file=sys.stderr)


def set_log_level(level: str):
    config.LOG_LEVEL = level


def ensure_dirs(*paths):
    for p in paths:
        Path(p).mkdir(parents=True, exist_ok=True)


def timestamp():
    return datetime.datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")


def write_json(path, obj, indent=2):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, ensure_ascii=False, indent=indent)


def small_report(path, lines):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines))
