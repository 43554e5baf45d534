"""Run directories, config hashing and deterministic CSV/JSON writers."""

import csv
import hashlib
import json
import os


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config):
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()[:12]


def prepare_run_dir(path, command, config):
    """Create the run directory and echo the config into it."""
    h = config_hash({"command": command, **config})
    path = path or os.path.join("runs", f"{command}-{h}")
    os.makedirs(path, exist_ok=True)
    write_json(os.path.join(path, "config.json"), {"command": command, "config_hash": h, **config})
    return path, h


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, sort_keys=True, indent=2)
        f.write("\n")


def write_csv(path, rows, columns, chash):
    """Rows as dicts; every row gets the ``config_hash`` column."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["config_hash", *columns])
        for r in rows:
            w.writerow([chash, *(_fmt(r.get(c)) for c in columns)])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)
