#!/usr/bin/env python3
"""Figure renderer entry point: delegates to the TypeScript implementation.

    render.py --run <dir> --figure <eigs|speedup|convergence|spectrum> --out <path>

Build the renderer once with `cd frontend && npm install && npm run build`.
"""

import subprocess
import sys
from pathlib import Path

FRONTEND = Path(__file__).resolve().parent / "frontend"


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    entry = FRONTEND / "dist" / "render.js"
    if not entry.exists():
        print(
            "renderer not built; run: cd frontend && npm install && npm run build",
            file=sys.stderr,
        )
        return 1
    proc = subprocess.run(["node", str(entry), *argv])
    return proc.returncode


if __name__ == "__main__":
    sys.exit(main())
