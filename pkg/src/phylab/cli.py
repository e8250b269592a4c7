"""Command-line entry point: ``phylab <verb> [<action>] [options]``.

Exit status: 0 on success, 1 when a validation gate fails, 2 on errors.
Relative output paths resolve against ``--out-dir`` (or ``PHYLAB_OUT_DIR``).
Every artifact-producing command writes a run manifest next to its output.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import autoencoder as ae
from .channel import ChannelDataset, gen_channel_dataset
from .constellation import DEFAULT_ETA, compare_constellations, default_n0, optimize_constellation
from .core import Constellation, ExperimentConfig, PhylabError, Rng, min_distance, write_json
from .infoplane import build_estimator, train_with_capture, write_planes
from .renyi import DEFAULT_ALPHA, conditional_entropy, sample_gram
from .suites import SUITES, RunManifest, content_hash, run_suite, validate_outputs, write_csv

log = logging.getLogger("phylab")


# --------------------------------------------------------------------------
# Argument helpers
# --------------------------------------------------------------------------


def parse_number_list(text: str, kind=float) -> list:
    """``"a,b,c"``, inclusive ``"start:stop:step"`` or ``"start..stop"`` (step = start)."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError(f"range {text!r} must be start:stop:step")
        start, stop, step = (kind(p) for p in parts)
    elif ".." in text:
        a, b = text.split("..")
        start, stop = kind(a), kind(b)
        step = start
    else:
        try:
            return [kind(p) for p in text.split(",") if p.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    if step <= 0 or stop < start:
        raise argparse.ArgumentTypeError(f"empty or invalid range {text!r}")
    n = int(round((stop - start) / step))
    vals = [kind(start + i * step) for i in range(n + 1)]
    return [v for v in vals if v <= stop + 1e-9 * abs(step)]


def _int_list(text):
    return parse_number_list(text, int)


def _float_list(text):
    return parse_number_list(text, float)


def _globals_parser(suppress: bool) -> argparse.ArgumentParser:
    default = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=default, help="master seed (default 0)")
    g.add_argument("--config", default=default, help="JSON config file")
    g.add_argument("--out-dir", default=default, help="output directory (env PHYLAB_OUT_DIR)")
    g.add_argument("--jobs", type=int, default=default, help="parallel sub-experiments")
    g.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _globals_parser(suppress=True)
    parser = argparse.ArgumentParser(prog="phylab", parents=[_globals_parser(suppress=False)],
                                     description="Constellation, autoencoder and information-plane experiments.")
    verbs = parser.add_subparsers(dest="verb", required=True)

    def sub(group, name, help_):
        return group.add_parser(name, parents=[common], help=help_)

    con = verbs.add_parser("constellation", help="signal-set design").add_subparsers(dest="action", required=True)
    p = sub(con, "optimize", "gradient search on the asymptotic error probability")
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--N", type=int, default=2)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--eta", type=float, default=DEFAULT_ETA)
    p.add_argument("--n0", type=float, default=None, help="noise level (default p_av/20)")
    p.add_argument("--p-av", type=float, default=None, help="average power (default 1/M)")
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--out", required=True, help="constellation JSON; trace CSV goes to <stem>.trace.csv")
    p = sub(con, "compare", "distance spectra and Procrustes alignment of two constellations")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--out", required=True)

    aep = verbs.add_parser("ae", help="end-to-end autoencoder").add_subparsers(dest="action", required=True)
    p = sub(aep, "train", "train an autoencoder on the AWGN channel")
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--N", type=int, default=2)
    p.add_argument("--snr", type=float, default=ae.DEFAULT_SNR_DB)
    p.add_argument("--epochs", type=int, default=ae.DEFAULT_EPOCHS)
    p.add_argument("--lr", type=float, default=ae.DEFAULT_LR)
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-const", required=True)
    p.add_argument("--out-log", default=None, help="training log CSV (default <model stem>.log.csv)")
    p = sub(aep, "ser", "Monte-Carlo symbol error rate under minimum-distance decisions")
    p.add_argument("--const", required=True)
    p.add_argument("--snr-list", type=_float_list, required=True)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--model", default=None, help="decode with this model instead of minimum distance")
    p.add_argument("--out", required=True)
    p = sub(aep, "riskgap", "empirical vs held-out cross-entropy of a trained decoder")
    p.add_argument("--model", required=True)
    p.add_argument("--train-B", type=int, required=True)
    p.add_argument("--heldout-B", type=int, required=True)
    p.add_argument("--out", required=True)

    ofdm = verbs.add_parser("ofdm", help="channel datasets").add_subparsers(dest="action", required=True)
    p = sub(ofdm, "gen-dataset", "generate (LS estimate, true response) pairs")
    p.add_argument("--B", type=int, required=True)
    p.add_argument("--n-sub", type=int, default=64)
    p.add_argument("--snr", type=float, default=20.0)
    p.add_argument("--l-taps", type=int, default=4)
    p.add_argument("--out", required=True)

    ent = verbs.add_parser("entropy", help="matrix Renyi entropies").add_subparsers(dest="action", required=True)
    p = sub(ent, "conditional", "S(z | v) over nested prefixes of a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--B-list", type=_int_list, default=list(range(100, 1001, 100)))
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--dump-gram", default=None, help="write the normalised Gram of v at the largest B")
    p.add_argument("--out", required=True)

    ip = verbs.add_parser("infoplane", help="information-plane training").add_subparsers(dest="action",
                                                                                         required=True)
    p = sub(ip, "run", "train the channel estimator and record information planes")
    p.add_argument("--dataset", required=True)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--checkpoint-every", type=int, default=10)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--batch", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")

    p = verbs.add_parser("suite", parents=[common], help="run a reproduction suite")
    p.add_argument("name", choices=SUITES)
    p.add_argument("--B-list", type=_int_list, default=None)
    p.add_argument("--snr-list", type=_float_list, default=None)
    p.add_argument("--M-list", type=_int_list, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--dataset", default=None)

    p = verbs.add_parser("validate", parents=[common], help="check invariants and gates of a suite output")
    p.add_argument("dir")
    return parser


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


class Context:
    def __init__(self, args):
        self.args = args
        self.config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        self.seed = args.seed if args.seed is not None else self.config.seed
        self.jobs = args.jobs or 1
        out = args.out_dir or os.environ.get("PHYLAB_OUT_DIR")
        self.out_dir = Path(out) if out else Path.cwd()
        self.rng = Rng(self.seed)
        self.t0 = time.perf_counter()

    def path(self, p) -> Path:
        p = Path(p)
        p = p if p.is_absolute() else self.out_dir / p
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def manifest(self, outputs, config: dict, inputs=(), where: Path | None = None):
        outputs = [Path(o) for o in outputs]
        m = RunManifest(command=self.args.command_line, suite=f"{self.args.verb}:{self.args.action}",
                        config=config, seed=self.seed, input_hash=content_hash(config, self.seed, inputs),
                        outputs=[o.name for o in outputs], duration_s=time.perf_counter() - self.t0)
        target = where or outputs[0].with_name(outputs[0].stem + ".manifest.json")
        write_json(target, m.__dict__)
        return target


def cmd_constellation_optimize(ctx: Context) -> int:
    a = ctx.args
    p_av = 1.0 / a.M if a.p_av is None else a.p_av
    n0 = default_n0(p_av) if a.n0 is None else a.n0
    best, runs = optimize_constellation(a.M, a.N, p_av, n0, a.eta, a.steps, a.restarts, ctx.rng.stream("optimize"))
    out = ctx.path(a.out)
    best.save(out)
    idx = max(range(len(runs)), key=lambda i: min_distance(runs[i][0]))
    trace = write_csv(out.with_name(out.stem + ".trace.csv"), ("step", "pe", "min_dist"), runs[idx][1].rows())
    cfg = {"M": a.M, "N": a.N, "p_av": p_av, "n0": n0, "eta": a.eta, "steps": a.steps, "restarts": a.restarts}
    ctx.manifest([out, trace], cfg)
    print(f"min_distance={min_distance(best):.6g} -> {out}")
    return 0


def cmd_constellation_compare(ctx: Context) -> int:
    a = ctx.args
    ca, cb = Constellation.load(a.a), Constellation.load(a.b)
    rep = compare_constellations(ca, cb, rng=ctx.rng.stream("compare"))
    out = ctx.path(a.out)
    write_json(out, rep.to_dict())
    ctx.manifest([out], {"a": a.a, "b": a.b}, inputs=[a.a, a.b])
    print(f"spectrum_gap={rep.spectrum_gap:.6g} residual={rep.residual:.6g}")
    return 0


def cmd_ae_train(ctx: Context) -> int:
    a = ctx.args
    pair, history = ae.train_autoencoder(a.M, a.N, a.snr, a.epochs, ctx.rng.stream("ae-train"), lr=a.lr)
    model, const = ctx.path(a.out_model), ctx.path(a.out_const)
    pair.save(model)
    ae.extract_constellation(pair).save(const)
    logp = ctx.path(a.out_log) if a.out_log else model.with_name(model.stem + ".log.csv")
    write_csv(logp, ("iter", "loss", "grad_norm"), history)
    ctx.manifest([model, const, logp], {"M": a.M, "N": a.N, "snr_db": a.snr, "epochs": a.epochs, "lr": a.lr})
    print(f"final loss={history[-1][1]:.6g} -> {model}")
    return 0


def cmd_ae_ser(ctx: Context) -> int:
    a = ctx.args
    c = Constellation.load(a.const)
    pair = ae.AutoencoderPair.load(a.model) if a.model else None
    rows = []
    for snr in a.snr_list:
        rng = ctx.rng.stream(f"ser-snr{snr:g}")
        if pair is None:
            pe, ci = ae.evaluate_ser(c, snr, a.trials, rng)
        else:
            pe, ci = ae.decode_with_network(pair, c, snr, a.trials, rng)
        rows.append((snr, pe, ci, a.trials))
    out = write_csv(ctx.path(a.out), ("snr_db", "pe", "ci95", "trials"), rows)
    inputs = [a.const] + ([a.model] if a.model else [])
    ctx.manifest([out], {"snr_list": a.snr_list, "trials": a.trials, "decoder": "network" if pair else "min-distance"},
                 inputs)
    return 0


def cmd_ae_riskgap(ctx: Context) -> int:
    a = ctx.args
    pair = ae.AutoencoderPair.load(a.model)
    train = ae.received_samples(pair, a.train_B, ctx.rng.stream("riskgap-train"))
    held = ae.received_samples(pair, a.heldout_B, ctx.rng.stream("riskgap-heldout"))
    rep = ae.risk_gap(pair, train, held, "cross_entropy")
    # cross-entropy cannot fall below H(s | v); estimated here in nats
    floor = conditional_entropy(np.eye(pair.M)[held[1]], held[0]) * np.log(2.0)
    out = ctx.path(a.out)
    write_json(out, {**rep.to_dict(), "loss": "cross_entropy", "train_B": a.train_B, "heldout_B": a.heldout_B,
                     "entropy_floor_nats": float(floor)})
    ctx.manifest([out], {"train_B": a.train_B, "heldout_B": a.heldout_B}, [a.model])
    print(f"empirical={rep.empirical_risk:.6g} heldout={rep.heldout_risk:.6g} gap={rep.gap:.6g}")
    return 0


def cmd_ofdm_gen_dataset(ctx: Context) -> int:
    a = ctx.args
    ds = gen_channel_dataset(a.B, a.n_sub, a.l_taps, a.snr, ctx.rng.stream("dataset"))
    out = ctx.path(a.out)
    ds.save(out)
    ctx.manifest([out], {"B": a.B, "n_sub": a.n_sub, "snr_db": a.snr, "l_taps": a.l_taps})
    print(f"{len(ds)} samples -> {out}")
    return 0


def cmd_entropy_conditional(ctx: Context) -> int:
    a = ctx.args
    ds = ChannelDataset.load(a.dataset)
    if max(a.B_list) > len(ds):
        raise PhylabError(f"dataset has {len(ds)} samples, B-list needs {max(a.B_list)}")
    rows = [(B, ds.config.get("snr_db"), ds.config.get("n_sub"), conditional_entropy(ds.z[:B], ds.v[:B], a.alpha))
            for B in a.B_list]
    out = write_csv(ctx.path(a.out), ("B", "snr_db", "n_sub", "S_cond_bits"), rows)
    outputs = [out]
    if a.dump_gram:
        g = sample_gram(ds.v[:max(a.B_list)]).a
        dump = ctx.path(a.dump_gram)
        np.savetxt(dump, g, delimiter=",", fmt="%.17g")
        outputs.append(dump)
    ctx.manifest(outputs, {"B_list": a.B_list, "alpha": a.alpha}, [a.dataset])
    return 0


def cmd_infoplane_run(ctx: Context) -> int:
    a = ctx.args
    ds = ChannelDataset.load(a.dataset)
    net = build_estimator(ds.v.shape[1] // 2, ctx.rng.stream("fig5/init"))
    _, records = train_with_capture(net, ds, a.batch, a.lr, a.iters, a.checkpoint_every, a.alpha,
                                    ctx.rng.stream("fig5/train"), a.optimizer)
    ctx.out_dir.mkdir(parents=True, exist_ok=True)
    paths = write_planes(records, ctx.out_dir)
    cfg = {"iters": a.iters, "checkpoint_every": a.checkpoint_every, "alpha": a.alpha, "batch": a.batch,
           "lr": a.lr, "optimizer": a.optimizer, "dataset": str(a.dataset), "dataset_config": ds.config}
    ctx.manifest(paths, cfg, [a.dataset], where=ctx.out_dir / "manifest.json")
    return 0


def cmd_suite(ctx: Context) -> int:
    a = ctx.args
    overrides = {"B_list": a.B_list, "snr_list": a.snr_list, "M_list": a.M_list, "epochs": a.epochs,
                 "iters": a.iters}
    cfg = ExperimentConfig(ctx.seed, ctx.config.snr_db, ctx.config.params)
    man = run_suite(a.name, cfg, ctx.out_dir, overrides, ctx.jobs, a.dataset, a.command_line)
    print(f"suite {a.name}: {len(man.outputs)} outputs in {ctx.out_dir} ({man.duration_s:.1f} s)")
    return 0


def cmd_validate(ctx: Context) -> int:
    results = validate_outputs(ctx.args.dir)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}  {r.detail}".rstrip())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


COMMANDS = {
    ("constellation", "optimize"): cmd_constellation_optimize,
    ("constellation", "compare"): cmd_constellation_compare,
    ("ae", "train"): cmd_ae_train,
    ("ae", "ser"): cmd_ae_ser,
    ("ae", "riskgap"): cmd_ae_riskgap,
    ("ofdm", "gen-dataset"): cmd_ofdm_gen_dataset,
    ("entropy", "conditional"): cmd_entropy_conditional,
    ("infoplane", "run"): cmd_infoplane_run,
    ("suite", None): cmd_suite,
    ("validate", None): cmd_validate,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.command_line = ["phylab", *argv]
    if not hasattr(args, "action"):
        args.action = None
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[(args.verb, args.action)](Context(args))
    except (PhylabError, OSError, json.JSONDecodeError) as exc:
        print(f"phylab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
