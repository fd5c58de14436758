"""Command-line entry point.

    simvae synth        --out DIR [--set C=10 ...]
    simvae train        --config FILE [--set key=value ...] --out DIR [--resume CKPT]
    simvae export-reps  --checkpoint CKPT --out DIR [--split train|test] [--sample] [--styled]
    simvae eval         (--checkpoint CKPT | --reps FILE [--test-reps FILE]) --out DIR
    simvae generate     --checkpoint CKPT --out DIR [--class C] [--n N]
    simvae gradcheck    [--n-models N]
    simvae verify-prior [--pairs N] [--samples N]

Exit status: 0 on success, 1 on usage errors, 2 on runtime errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from .errors import ConfigError, SimVAEError
from .eval import (
    EvalSettings,
    RepresentationTable,
    conditional_generate,
    evaluate,
    frozen_decoder_train,
    image_grid,
    reconstruction_mse,
    write_pgm,
    write_report,
)
from .eval.report import PROBES
from .nn import decoder_spec, load_checkpoint
from .numerics import no_grad
from .training import (
    TrainConfig,
    eval_sources,
    export_representations,
    load_config,
    parse_overrides,
    resume,
    train,
)
from .verify import GRADCHECK_TOL, flat_limit_gap, gradcheck_suite, verify_prior

SYNTH_DEFAULTS = {"C": 10, "n_per_class": 500, "J": 2, "gamma": 1.0, "sigma": 0.2, "d_z": 4, "d_x": 20,
                  "sigma_x": 0.1}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--out", required=out_required, help="output directory")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--threads", type=int, default=1, help="BLAS worker threads (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="simvae", description="Generative self-supervised learning toolkit.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("train", help="train a model")
    _common(p)
    p.add_argument("--resume", metavar="CKPT", help="continue from a checkpoint")

    p = sub.add_parser("eval", help="evaluate frozen representations")
    _common(p)
    p.add_argument("--checkpoint", help="model checkpoint to export and evaluate")
    p.add_argument("--reps", help="exported representation table (train side)")
    p.add_argument("--test-reps", help="exported representation table (test side)")
    p.add_argument("--probes", default=",".join(PROBES), help=f"comma list from {','.join(PROBES)}")
    p.add_argument("--probe-epochs", type=int, default=200)
    p.add_argument("--gmm-n-init", type=int, default=10)
    p.add_argument("--knn-metric", choices=("euclidean", "cosine"), default="euclidean")
    p.add_argument("--frozen-decoder", action="store_true", help="also train a decoder on frozen representations")

    p = sub.add_parser("generate", help="class-conditional samples as PGM images")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--class", dest="cls", type=int, action="append", help="class to sample (default: all)")
    p.add_argument("--n", type=int, default=16, help="samples per class")

    p = sub.add_parser("export-reps", help="write a representation table")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "test"), default="train")
    p.add_argument("--sample", action="store_true", help="sample z instead of using posterior means")
    p.add_argument("--styled", action="store_true", help="encode one augmented view per image, with style")

    p = sub.add_parser("gradcheck", help="finite-difference check of every loss")
    _common(p, out_required=False)
    p.add_argument("--n-models", type=int, default=20)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _common(p)

    p = sub.add_parser("verify-prior", help="Monte-Carlo check of the psi-integrated prior")
    _common(p, out_required=False)
    p.add_argument("--pairs", type=int, default=20)
    p.add_argument("--samples", type=int, default=10**6)
    p.add_argument("--tol", type=float, default=0.05)
    return parser


# -- helpers ------------------------------------------------------------------
def _out(args) -> Path | None:
    if not getattr(args, "out", None):
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _record(out: Path | None, args, extra: dict | None = None) -> None:
    """Write the command and its resolved settings alongside the outputs."""
    if out is None:
        return
    snap = {k: v for k, v in vars(args).items() if k != "func"}
    if extra:
        snap.update(extra)
    (out / "command.json").write_text(json.dumps(snap, indent=2, sort_keys=True, default=str) + "\n")


def _config_for_checkpoint(args, ckpt) -> TrainConfig:
    values = dict(ckpt.config)
    if args.config:
        values.update(load_config(args.config).to_dict())
    values.update(parse_overrides(args.set))
    return TrainConfig.from_dict(values).validate()


def _split_tables(cfg: TrainConfig, train_tab: RepresentationTable, test_tab, seed: int):
    if test_tab is None:
        return train_tab.split_by_source(0.8, seed)
    return train_tab, test_tab


# -- subcommands --------------------------------------------------------------
def cmd_train(args) -> int:
    out = _out(args)
    if args.resume:
        ck = load_checkpoint(args.resume)
        cfg = _config_for_checkpoint(args, ck)
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        res = resume(ck, cfg, out_dir=out)
        for m in res.messages:
            print(m)
    else:
        cfg = load_config(args.config, args.set, **({"seed": args.seed} if args.seed is not None else {}))
        res = train(cfg, out_dir=out)
    _record(out, args)
    if res.rows:
        last = res.rows[-1]
        print(f"epoch {last['epoch']}: loss {last['loss_total']:.6g}")
    if res.checkpoint_path:
        print(f"checkpoint: {res.checkpoint_path}")
    return 0


def cmd_export(args) -> int:
    out = _out(args)
    ck = load_checkpoint(args.checkpoint)
    cfg = _config_for_checkpoint(args, ck)
    seed = cfg.seed if args.seed is None else args.seed
    train_src, test_src = eval_sources(cfg)
    src = train_src if args.split == "train" or test_src is None else test_src
    tab = export_representations(ck, src, use_mean=not args.sample, styled=args.styled, seed=seed)
    path = out / f"reps_{args.split}.svae"
    tab.save(path)
    _record(out, args, {"config": cfg.to_dict()})
    print(f"{len(tab)} representations of dimension {tab.dim} -> {path}")
    return 0


def cmd_eval(args) -> int:
    out = _out(args)
    probes = tuple(p for p in args.probes.split(",") if p)
    unknown = set(probes) - set(PROBES)
    if unknown:
        raise UsageError(f"unknown probes: {', '.join(sorted(unknown))}")
    settings = EvalSettings(probes=probes, probe_epochs=args.probe_epochs, gmm_n_init=args.gmm_n_init,
                            knn_metric=args.knn_metric, seed=args.seed or 0)
    extra_rows = []
    if args.checkpoint:
        ck = load_checkpoint(args.checkpoint)
        cfg = _config_for_checkpoint(args, ck)
        train_src, test_src = eval_sources(cfg)
        model = ck.to_model()
        train_tab = export_representations(model, train_src)
        test_tab = None if test_src is None else export_representations(model, test_src)
        train_tab, test_tab = _split_tables(cfg, train_tab, test_tab, settings.seed)
        if "style" in probes and train_tab.S is None:
            train_tab = export_representations(model, train_src, styled=True, seed=settings.seed)
        eval_src = test_src or train_src
        x_eval = eval_src.eval_inputs()[0]
        if test_src is None:
            x_eval = x_eval[np.isin(np.repeat(np.arange(train_src.n_sources), train_src.dataset.J),
                                    np.unique(test_tab.source))]
        if model.decoder is not None:
            with no_grad():
                rec = model.decode(model.encode(x_eval.astype(np.float32)).mu).data
            extra_rows.append(("recon", "mse", reconstruction_mse(x_eval, rec)))
        if args.frozen_decoder:
            spec = decoder_spec(test_tab.dim, cfg.decoder_hidden, x_eval.shape[1])
            res = frozen_decoder_train(test_tab, x_eval, spec, seed=settings.seed)
            extra_rows.append(("frozen_decoder", "mse", res.mse))
    elif args.reps:
        train_tab = RepresentationTable.load(args.reps)
        test_tab = RepresentationTable.load(args.test_reps) if args.test_reps else None
        if test_tab is None:
            train_tab, test_tab = train_tab.split_by_source(0.8, settings.seed)
    else:
        raise UsageError("eval needs --checkpoint or --reps")
    rows = evaluate(train_tab, test_tab, settings)
    for probe, metric, value in extra_rows:
        rows.append({"probe": probe, "dataset": test_tab.dataset_id, "metric": metric, "value": value,
                     "seed": settings.seed, "checkpoint_id": test_tab.checkpoint_id})
    path = out / "report.csv"
    write_report(path, rows)
    _record(out, args)
    for r in rows:
        print(f"{r['probe']:>14} {r['metric']:<14} {r['value']:.6g}")
    print(f"report: {path}")
    return 0


def cmd_generate(args) -> int:
    out = _out(args)
    ck = load_checkpoint(args.checkpoint)
    cfg = _config_for_checkpoint(args, ck)
    seed = cfg.seed if args.seed is None else args.seed
    train_src, _ = eval_sources(cfg)
    model = ck.to_model()
    tab = export_representations(model, train_src)
    x_all = train_src.eval_inputs()[0]
    if model.decoder is not None:
        decode = model
    else:
        spec = decoder_spec(tab.dim, cfg.decoder_hidden, x_all.shape[1])
        decode = frozen_decoder_train(tab, x_all, spec, seed=seed)
    classes = args.cls if args.cls else sorted(int(c) for c in np.unique(tab.y))
    if isinstance(train_src, data_mod.ImageViews):
        hw = tuple(train_src.pipeline.out_hw)
        lo, hi = 0.0, 1.0
    else:
        hw = (1, x_all.shape[1])
        lo, hi = float(x_all.min()), float(x_all.max())
    written = 0
    for c in classes:
        imgs, _ = conditional_generate(tab, decode, c, args.n, seed=seed)
        imgs = (np.clip(imgs, lo, hi) - lo) / (hi - lo)
        for i, im in enumerate(imgs):
            write_pgm(out / f"class{c}_{i:03d}.pgm", im.reshape(hw))
            written += 1
        if len(imgs):
            write_pgm(out / f"class{c}_grid.pgm", image_grid(imgs, hw, ncols=min(8, len(imgs))))
    _record(out, args)
    print(f"wrote {written} images to {out}")
    return 0


def cmd_gradcheck(args) -> int:
    seed = 0 if args.seed is None else args.seed
    cases = gradcheck_suite(seed, args.n_models)
    worst = {}
    for c in cases:
        worst[c.loss] = max(worst.get(c.loss, 0.0), c.max_rel_error)
    ok = all(c.passed for c in cases)
    for name, err in worst.items():
        print(f"{name:<22} max relative error {err:.3e}  {'ok' if err < GRADCHECK_TOL else 'FAIL'}")
    out = _out(args)
    if out is not None:
        (out / "gradcheck.json").write_text(json.dumps(worst, indent=2) + "\n")
        _record(out, args)
    return 0 if ok else 2


def cmd_synth(args) -> int:
    out = _out(args)
    values = dict(SYNTH_DEFAULTS)
    items = []
    if args.config:
        items += Path(args.config).read_text().splitlines()
    items += args.set
    for item in items:
        line = item.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in SYNTH_DEFAULTS:
            raise ConfigError(f"unknown synthetic-data key {key!r}; expected one of {sorted(SYNTH_DEFAULTS)}")
        values[key] = type(SYNTH_DEFAULTS[key])(value.strip())
    seed = 0 if args.seed is None else args.seed
    ds = data_mod.synth_generate(seed=seed, **values)
    path = out / "synth.svae"
    ds.save(path)
    (out / "synth_config.txt").write_text("".join(f"{k} = {v}\n" for k, v in {**values, "seed": seed}.items()))
    _record(out, args)
    print(f"{ds.n_sources} sources x {ds.J} views, d_x={ds.d_x} -> {path}")
    return 0


def cmd_verify_prior(args) -> int:
    seed = 0 if args.seed is None else args.seed
    checks = verify_prior(seed, args.pairs, n_samples=args.samples)
    worst = max(c.error for c in checks)
    gap = flat_limit_gap(seed)
    ok = worst <= args.tol and gap <= 1e-6
    print(f"psi Monte-Carlo: max |closed - MC| = {worst:.4f} over {len(checks)} pairs (tol {args.tol})")
    print(f"flat limit: max gap = {gap:.3e} (tol 1e-6)")
    out = _out(args)
    if out is not None:
        (out / "verify_prior.json").write_text(json.dumps({"max_error": worst, "flat_gap": gap}) + "\n")
        _record(out, args)
    return 0 if ok else 2


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "generate": cmd_generate, "export-reps": cmd_export,
            "gradcheck": cmd_gradcheck, "synth": cmd_synth, "verify-prior": cmd_verify_prior}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_help(sys.stderr)
            return 1
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return int(e.code or 0)
    try:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=max(1, args.threads)):
            return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as e:
        print(f"simvae {args.command}: error: {e}", file=sys.stderr)
        return 1
    except (SimVAEError, OSError, ValueError) as e:
        print(f"simvae {args.command}: error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
