"""Merge every comparison.json under a results directory into one markdown report.

Usage: python scripts/summarize.py runs > runs/summary.md
"""

import argparse
import json
from pathlib import Path


def _num(v, digits=0):
    return "censored" if v is None else f"{v:.{digits}f}"


def render(comp: dict) -> str:
    lines = [f"## {comp['env']}", "", "| method | found | median steps | boundary occ. | TV occ. |", "|---|---|---|---|---|"]
    for r in comp["rows"]:
        b = "-" if r["boundary_mean"] is None else f"{r['boundary_mean']:.4f}"
        tv = "-" if r["tv_mean"] is None else f"{r['tv_mean']:.4f}"
        lines.append(f"| {r['method']} | {r['found']}/{r['seeds']} | {_num(r['median_steps'])} | {b} | {tv} |")
    lines.append("")
    lines += [f"- {'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['detail']}" for c in comp["checks"]]
    return "\n".join(lines) + "\n"


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("root", type=Path)
    args = parser.parse_args()
    found = sorted(args.root.glob("*/comparison.json"))
    if not found:
        raise SystemExit(f"no comparison.json under {args.root}")
    print("\n".join(render(json.loads(p.read_text())) for p in found))


if __name__ == "__main__":
    main()
