"""``molgen`` command line: train, generate, evaluate, inspect-checkpoint.

Exit codes: 0 success, 2 configuration/usage error, 3 runtime error (NaN loss, I/O).
Log verbosity comes from ``MOLGEN_LOG_LEVEL`` (default WARNING).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from molgen import checkpoint as ckpt
from molgen.chem import SmilesError, parse_smiles, write_smiles
from molgen.config import ConfigError, RunConfig, load_config
from molgen.data import NoParseableRowsError, filter_for_molgan, load_smiles_file, subsample
from molgen.graphs import GraphTensors, defeaturize, graph_dump
from molgen.metrics import evaluate, format_json, format_text, is_valid, report_rows
from molgen.molgan import MolGAN, NaNLossError as GanNaN
from molgen.molgan.train import EmptyDatasetError, as_graph_arrays
from molgen.nflow import FlowConfig, NaNLossError as FlowNaN, SelfiesFlow, longest_encoding
from molgen import selfies
from molgen.rng import RngStreams

log = logging.getLogger("molgen")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
DEFAULT_COUNT = 6400


class RuntimeFailure(RuntimeError):
    pass


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- train


def _load_training_set(cfg: RunConfig):
    ds = load_smiles_file(cfg.dataset.path, cfg.dataset.column)
    if cfg.model == "molgan" and cfg.dataset.filter:
        ds = filter_for_molgan(ds, cfg.molgan.spec)
    elif cfg.model == "nflow" and cfg.dataset.filter:
        elements = set(cfg.nflow.elements)
        ds = type(ds).from_molecules(ds.name, [m for m in ds.molecules if set(m.atoms) <= elements], ds.provenance)
    if cfg.dataset.subsample is not None:
        ds = subsample(ds, cfg.dataset.subsample, cfg.seed)
    if len(ds) == 0:
        raise EmptyDatasetError(f"{cfg.dataset.path}: no molecules left after filtering")
    return ds


def cmd_train(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    digest = cfg.digest()
    ds = _load_training_set(cfg)
    echo = {"config_digest": digest, "seed": cfg.seed, "config": cfg.to_dict(), "dataset_size": len(ds)}

    if cfg.model == "molgan":
        X, A = as_graph_arrays(ds, cfg.molgan.spec)
        steps = cfg.steps or cfg.epochs * -(-len(X) // cfg.molgan.batch_size)
        model = MolGAN(cfg.molgan, cfg.seed)
        _write_json(out / "config.json", echo)
        history = model.fit(X, A, steps, checkpoint_dir=out / "checkpoints")
        hist = {"config_digest": digest, "seed": cfg.seed, "steps": history.steps, **history.to_dict()}
        path = model.save(out / "model.npz")
    else:
        fcfg = cfg.nflow
        length = fcfg.fixed_length or longest_encoding(ds.molecules, fcfg.elements)
        fcfg = FlowConfig(**{**fcfg.to_dict(), "fixed_length": length, "epochs": cfg.epochs})
        echo["config"]["nflow"] = fcfg.to_dict()
        _write_json(out / "config.json", echo)
        model = SelfiesFlow(fcfg, fcfg.fixed_length, cfg.seed)
        history = model.fit(ds.molecules)
        hist = {"config_digest": digest, "seed": cfg.seed, "epochs": len(history.nll), "nll": history.nll}
        path = model.save(out / "model.npz")
    _write_json(out / "history.json", hist)
    (out / "training_set.smi").write_text("\n".join(write_smiles(m) for m in ds.molecules) + "\n")
    log.info("wrote %s", path)
    return path


# ---------------------------------------------------------------- generate


def load_model(path):
    meta, _ = ckpt.load(path)
    if meta["model"] == "molgan":
        return MolGAN.load(path), meta
    return SelfiesFlow.load(path), meta


def generate_lines(model, count: int, seed: int) -> list[str]:
    lines = []
    if isinstance(model, MolGAN):
        g = model.sample(count, RngStreams(seed)["eval"])
        for x, a in zip(g.X, g.A):
            graph = GraphTensors(x, a)
            m = defeaturize(graph, model.config.spec)
            lines.append(write_smiles(m) if is_valid(m) else f"INVALID: {graph_dump(graph)}")
    else:
        for toks in model.generate_tokens(count, seed):
            m = selfies.decode(toks, model.config.elements)
            lines.append(write_smiles(m) if is_valid(m) else f"INVALID: {selfies.render(toks)}")
    return lines


def cmd_generate(checkpoint: str, count: int, seed: int, out: str | None) -> list[str]:
    model, meta = load_model(checkpoint)
    lines = generate_lines(model, count, seed)
    header = [
        f"# model: {meta['model']}",
        f"# checkpoint: {Path(checkpoint).name}",
        f"# config_digest: {ckpt.config_digest(meta['config'])}",
        f"# seed: {seed}",
        f"# count: {count}",
    ]
    text = "\n".join(header + lines) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return lines


# ---------------------------------------------------------------- evaluate


def read_generated(path) -> tuple[list, dict]:
    """Molecules (``None`` for INVALID or unparseable lines) and ``# key: value`` header fields."""
    mols, header = [], {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            header[key.strip()] = value.strip()
            continue
        if line.startswith("INVALID:"):
            mols.append(None)
            continue
        try:
            mols.append(parse_smiles(line.split()[0]))
        except SmilesError:
            mols.append(None)
    return mols, header


def cmd_evaluate(
    generated: list[str],
    training: str,
    column: str | None = None,
    out: str | None = None,
    checkpoint: str | None = None,
    seeds: list[int] | None = None,
    count: int = DEFAULT_COUNT,
) -> list[dict]:
    train_canon = load_smiles_file(training, column).canonical_set
    reports, header = [], {"training": str(training)}
    if checkpoint is not None:
        model, meta = load_model(checkpoint)
        header["checkpoint"] = str(checkpoint)
        header["config_digest"] = ckpt.config_digest(meta["config"])
        for s in seeds or [0]:
            lines = generate_lines(model, count, s)
            mols = [None if l.startswith("INVALID:") else parse_smiles(l) for l in lines]
            reports.append(evaluate(mols, train_canon, seed=s))
    for k, path in enumerate(generated):
        mols, meta = read_generated(path)
        seed = meta.get("seed")
        seed = int(seed) if seed is not None and seed.isdigit() else (seeds[k] if seeds and k < len(seeds) else None)
        if "config_digest" in meta:
            header.setdefault("config_digest", meta["config_digest"])
        reports.append(evaluate(mols, train_canon, seed=seed))
    if not reports:
        raise ConfigError("nothing to evaluate: pass --generated files or --checkpoint")
    rows = report_rows(reports)
    text = format_text(rows, header)
    if out:
        prefix = Path(out)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        Path(str(prefix) + ".txt").write_text(text, encoding="utf-8")
        Path(str(prefix) + ".json").write_text(format_json(rows, header) + "\n", encoding="utf-8")
    sys.stdout.write(text)
    return rows


# ---------------------------------------------------------------- inspect


def cmd_inspect(checkpoint: str) -> dict:
    meta, arrays = ckpt.load(checkpoint)
    info = {
        "format": meta["format"],
        "version": meta["version"],
        "model": meta["model"],
        "seed": meta["seed"],
        "step": meta["step"],
        "config_digest": ckpt.config_digest(meta["config"]),
        "config": meta["config"],
        "parameters": {k: list(v.shape) for k, v in sorted(arrays.items()) if "adam/" not in k},
        "parameter_count": int(sum(v.size for k, v in arrays.items() if "adam/" not in k and k != "epoch_order")),
    }
    sys.stdout.write(json.dumps(info, indent=1) + "\n")
    return info


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="molgen", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model from a JSON run config")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, help="override the config seed")
    t.add_argument("--out", help="override output_dir")

    g = sub.add_parser("generate", help="sample molecules from a checkpoint")
    g.add_argument("--checkpoint", required=True)
    g.add_argument("--count", type=int, default=DEFAULT_COUNT)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", help="output file (default stdout)")

    e = sub.add_parser("evaluate", help="validity/uniqueness/novelty report")
    e.add_argument("--generated", nargs="*", default=[], help="generated SMILES file(s), one report row each")
    e.add_argument("--training", required=True, help="training SMILES file for novelty")
    e.add_argument("--column", help="SMILES column when --training is CSV")
    e.add_argument("--checkpoint", help="generate on the fly from this checkpoint, once per --seeds entry")
    e.add_argument("--seeds", type=int, nargs="*", help="seeds for --checkpoint mode")
    e.add_argument("--count", type=int, default=DEFAULT_COUNT)
    e.add_argument("--out", help="report path prefix; writes <prefix>.txt and <prefix>.json")

    i = sub.add_parser("inspect-checkpoint", help="print checkpoint metadata")
    i.add_argument("checkpoint")
    return p


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("MOLGEN_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg.seed = args.seed
            if args.out:
                cfg.output_dir = args.out
            cmd_train(cfg)
        elif args.command == "generate":
            if args.count < 0:
                raise ConfigError("--count must be >= 0")
            cmd_generate(args.checkpoint, args.count, args.seed, args.out)
        elif args.command == "evaluate":
            cmd_evaluate(args.generated, args.training, args.column, args.out, args.checkpoint, args.seeds, args.count)
        else:
            cmd_inspect(args.checkpoint)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GanNaN, FlowNaN) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        print(json.dumps(exc.state, default=str)[:4000], file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ckpt.CheckpointError, NoParseableRowsError, EmptyDatasetError, KeyError, SmilesError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
