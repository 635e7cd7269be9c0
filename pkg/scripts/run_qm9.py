"""Extended MolGAN run on a user-supplied QM9 file (an overnight job).

Filters to C/N/O/F molecules with at most 9 heavy atoms, reports the count,
trains 300 epochs on a seeded 5k subset with uniqueness early stopping, then
reports validity, uniqueness and novelty on 6400 samples.

    python scripts/run_qm9.py /data/qm9.csv --out runs/qm9
"""
import argparse
import json
import math
from pathlib import Path

from molgen.data import dataset_stats, filter_for_molgan, load_smiles_file, subsample
from molgen.metrics import evaluate
from molgen.molgan import MolGAN, MolganConfig
from molgen.molgan.train import as_graph_arrays


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("path")
    ap.add_argument("--column", default="smiles")
    ap.add_argument("--subset", type=int, default=5000)
    ap.add_argument("--epochs", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--samples", type=int, default=6400)
    ap.add_argument("--out", default="runs/qm9")
    args = ap.parse_args()

    column = args.column if args.path.endswith(".csv") else None
    cfg = MolganConfig(min_uniqueness=2.0, checkpoint_interval=5000)
    full = filter_for_molgan(load_smiles_file(args.path, column), cfg.spec)
    print(json.dumps(dataset_stats(full)))
    train_set = subsample(full, args.subset, args.seed)
    X, A = as_graph_arrays(train_set, cfg.spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = MolGAN(cfg, args.seed)
    hist = model.fit(X, A, args.epochs * math.ceil(len(X) / cfg.batch_size), checkpoint_dir=out / "checkpoints")
    model.save(out / "model.npz")
    rep = evaluate(model.predict(args.samples, seed=args.seed), train_set.canonical_set, seed=args.seed)
    summary = {"filtered_count": len(full), "steps": hist.steps, **rep.summary()}
    (out / "report.json").write_text(json.dumps(summary, indent=1))
    print(json.dumps(summary))


if __name__ == "__main__":
    main()
