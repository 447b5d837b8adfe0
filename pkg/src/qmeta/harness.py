"""Run manifests and worker-pool plumbing shared by the CLI and scripts."""
from __future__ import annotations

import json
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .seeding import PRNG_NAME

THREADS_ENV = "QMETA_THREADS"


def manifest_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".manifest.json")


def write_manifest(out, command: str, argv, config: dict, seed: int, outputs, started: datetime) -> Path:
    path = manifest_path(out)
    doc = {
        "command": command,
        "argv": list(argv),
        "config": config,
        "master_seed": int(seed),
        "prng": PRNG_NAME,
        "code_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "started": started.isoformat(),
        "finished": datetime.now(timezone.utc).isoformat(),
        "outputs": [str(p) for p in outputs],
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def max_workers() -> int:
    raw = os.environ.get(THREADS_ENV)
    cpus = os.cpu_count() or 1
    if raw is None:
        return cpus
    try:
        n = int(raw)
    except ValueError:
        print(f"ignoring non-integer {THREADS_ENV}={raw!r}", file=sys.stderr)
        return cpus
    return max(1, n)


def pool_map(fn, items) -> list:
    """Ordered map over a process pool capped by ``QMETA_THREADS``.

    Every item must carry its own seeds, so results do not depend on the
    worker count.
    """
    items = list(items)
    workers = min(max_workers(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def chunks(seq, n_chunks: int) -> list:
    seq = list(seq)
    n_chunks = max(1, min(n_chunks, len(seq)))
    size = -(-len(seq) // n_chunks)
    return [seq[i:i + size] for i in range(0, len(seq), size)]
