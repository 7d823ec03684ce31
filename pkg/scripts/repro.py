"""Desk-scale reproduction: synth -> fold -> train -> eval for each lambda.

    python3 scripts/repro.py --out repro_out [--epochs 30] [--seed 0] [--lambdas 0.4 0.5 0.6]

Writes ``table1.tsv`` (MRF, sparse relaxation and the graph model per
lambda) and ``table2.tsv`` (model with and without PGFI) under ``--out``,
all computed on the held-out test subjects. Every stage goes through the
``graphunwrap`` command line, so each output directory also carries its
reproducibility stanza.
"""

import argparse
import sys
from pathlib import Path

from graphunwrap.cli import main as cli

DESK_CONFIG = """\
# desk-scale protocol: 8 synthetic subjects of 60 s, last 2 test, 1 validation, 5 training
synth.num_subjects = 8
synth.duration_s = 60
train.test_subjects = 2
train.val_subjects = 1
train.folds = 1
"""

COLUMNS = ("accuracy", "l1", "mse", "r")


def run(argv):
    print("$ graphunwrap " + " ".join(argv), flush=True)
    rc = cli(argv)
    if rc != 0:
        sys.exit(f"stage failed with exit code {rc}")


def read_pairs(path):
    return dict(line.split(" = ", 1) for line in Path(path).read_text().splitlines())


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", required=True)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--lambdas", type=float, nargs="+", default=[0.4, 0.5, 0.6])
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = out / "desk.cfg"
    cfg.write_text(DESK_CONFIG + f"train.epochs = {args.epochs}\n")
    data = out / "synth.modr"
    run(["synth", "--config", str(cfg), "--seed", str(args.seed), "--out", str(data)])

    table1, table2 = [], []
    for lam in args.lambdas:
        tag = f"lam{lam:g}"
        folded = out / f"{tag}.modr"
        run(["fold", "--data", str(data), "--lambda", str(lam), "--out", str(folded)])
        runs = {}
        for arm, extra in (("Proposed", []), ("Proposed (w/o PGFI)", ["--no-pgfi"])):
            tdir = out / f"{tag}_{'pgfi' if not extra else 'nopgfi'}"
            run(["train", "--config", str(cfg), "--data", str(folded), "--seed", str(args.seed),
                 "--out", str(tdir), "--quiet", *extra])
            summary = read_pairs(tdir / "summary.txt")
            runs[arm] = {c: float(summary[f"test.{c}"]) for c in COLUMNS}
            test_subjects = summary["test_subjects"]
        for method, label in (("mrf", "MRF"), ("sparse", "Sparse Opt.")):
            bdir = out / f"{tag}_{method}"
            run(["baseline", "--data", str(folded), "--method", method, "--subjects", test_subjects,
                 "--out", str(bdir)])
            m = read_pairs(bdir / "metrics.txt")
            table1.append((lam, label, {c: float(m[c]) for c in COLUMNS}))
        table1.append((lam, "Proposed", runs["Proposed"]))
        for arm in ("Proposed", "Proposed (w/o PGFI)"):
            table2.append((lam, arm, runs[arm]))

    for name, rows in (("table1.tsv", table1), ("table2.tsv", table2)):
        lines = ["lambda\tmethod\t" + "\t".join(COLUMNS)]
        lines += [f"{lam:g}\t{method}\t" + "\t".join(f"{vals[c]:.4f}" for c in COLUMNS) for lam, method, vals in rows]
        (out / name).write_text("\n".join(lines) + "\n")
        print(f"\n{name}")
        print("\n".join(lines))


if __name__ == "__main__":
    main()
