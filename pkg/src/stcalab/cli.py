"""Command-line entry point: ``stcalab <subcommand> ...``.

Every subcommand writes a ``manifest.json`` next to its outputs that records
the fully resolved configuration.  Passing that manifest back as ``--config``
reproduces the run byte for byte.  Failures print a single line
``error: <category>: <message>`` to stderr and exit with status 1 (2 for
command-line usage errors).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .attacks import GradientAttackConfig, SurrogateSpec, descend, initial_point, pinv_operator, surrogate_for
from .authorized import authorized_reconstruct
from .codec import StcaParams, ambiguize, format_code, parse_code, project, ternarize
from .config import ExperimentConfig, config_from_dict, load_config, manifest
from .data import IdxFormatError, ProjectionPack, tile_images, write_pgm
from .errors import ConfigError, DivergenceError, FormatError, ShapeError, SingularSystemError
from .linalg import SeedSpec
from .nn import forward, load_model, save_model, train_decoder
from .rd import curve_csv, default_decoder, load_source, rd_sweep, shannon_csv, training_set

ERROR_CATEGORIES = [
    (IdxFormatError, None),  # category carried by the exception
    (ConfigError, "config-error"),
    (ShapeError, "shape-mismatch"),
    (FormatError, "format-error"),
    (SingularSystemError, "singular-system"),
    (DivergenceError, "divergence"),
    (OSError, "io-error"),
    (ValueError, "invalid-input"),
    (IndexError, "invalid-input"),
]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --- small file helpers ---------------------------------------------------------

def _read_matrix(path) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except ValueError as exc:
        raise FormatError(f"{path}: not a numeric CSV ({exc})") from None


def _write_matrix(path, rows):
    with open(path, "w") as fh:
        for row in np.atleast_2d(rows):
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def _read_codes(path) -> np.ndarray:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: no templates found")
    codes = [parse_code(ln) for ln in lines]
    if len({c.size for c in codes}) != 1:
        raise FormatError(f"{path}: templates have different lengths")
    return np.array(codes)


def _write_codes(path, codes):
    Path(path).write_text("".join(format_code(c) + "\n" for c in codes))


def _write_manifest(directory, command, cfg: ExperimentConfig, outputs, extra=None):
    directory = Path(directory)
    (directory / "manifest.json").write_text(manifest(command, cfg, [str(o) for o in outputs], extra))


def _experiment(args) -> ExperimentConfig:
    return load_config(args.config) if args.config else config_from_dict({})


def _pack_for(cfg: ExperimentConfig, s_x: int, s_ns: int = 0) -> ProjectionPack:
    sw = cfg.sweep
    return ProjectionPack.build(StcaParams(m=sw.m, n=sw.n, s_x=s_x, s_ns=s_ns), SeedSpec(sw.seed, "sweep"))


def _train(cfg: ExperimentConfig, pack: ProjectionPack, s_x: int):
    t = cfg.train
    U, X = training_set(cfg.sweep, pack, s_x, t.train_pairs)
    model = default_decoder(cfg.sweep, t.arch)
    return train_decoder(U, X, model, t.to_train_config(cfg.sweep.seed)) + (len(U),)


# --- subcommands ----------------------------------------------------------------

def cmd_protect(args):
    cfg = _experiment(args)
    sw = cfg.sweep
    X = _read_matrix(args.input)
    if X.shape[1] != sw.n:
        raise ShapeError(f"{args.input}: rows have {X.shape[1]} values, config says n={sw.n}")
    s_x, s_ns = sw.s_x[0], sw.s_ns[0]
    pack = _pack_for(cfg, s_x, s_ns)
    U = ternarize(project(X, pack.W, pack.A), s_x)
    root = SeedSpec(sw.seed, "protect")
    Ua = np.array([ambiguize(u, s_ns, root.child(f"ambig/{t}")) for t, u in enumerate(U)])
    out = Path(args.out)
    _write_codes(out, Ua)
    pack_path = Path(args.pack_out) if args.pack_out else out.with_name("pack.bin")
    pack.save(pack_path)
    outputs = [out.name, pack_path.name]
    if args.clean_out:
        _write_codes(args.clean_out, U)
        outputs.append(Path(args.clean_out).name)
    _write_manifest(out.parent, "protect", cfg, outputs, {"s_x": s_x, "s_ns": s_ns, "templates": len(Ua)})


def cmd_attack(args):
    pack = ProjectionPack.load(args.pack)
    Ua = _read_codes(args.template).astype(float)
    if Ua.shape[1] != pack.A.shape[0]:
        raise ShapeError(f"templates have length {Ua.shape[1]}, the pack projects to m={pack.A.shape[0]}")
    if args.method == "pinv":
        X_hat = pinv_operator(pack.A, pack.W, args.lam).solve(Ua)
    elif args.method == "decoder":
        if not args.model:
            raise UsageError("--model is required for --method decoder")
        X_hat = forward(load_model(args.model), Ua)
    else:
        gcfg = GradientAttackConfig(step_size=args.step_size, iterations=args.iterations, lam=args.lam,
                                    init=args.init, seed=SeedSpec(args.seed, "gradient-init"))
        B = pack.B
        x0 = initial_point(B.shape[1], gcfg)
        spec = surrogate_for(B, x0, pack.params.s_x, args.beta) if np.any(x0) else SurrogateSpec(beta=args.beta)
        X_hat = np.array([descend(u, B, spec, gcfg, x0=x0) for u in Ua])
    _write_matrix(args.out, X_hat)


def cmd_authorized(args):
    pack = ProjectionPack.load(args.pack)
    Ua = _read_codes(args.template)
    probes = _read_matrix(args.probe)
    if len(probes) != len(Ua):
        raise ShapeError(f"{len(Ua)} templates but {len(probes)} probes")
    solver = pinv_operator(pack.A, pack.W, args.lam)
    X_hat = [authorized_reconstruct(u, p, pack.W, pack.A, pack.params.s_x, args.lam, solver=solver)
             for u, p in zip(Ua, probes)]
    _write_matrix(args.out, X_hat)


def cmd_rd_sweep(args):
    cfg = _experiment(args)
    sw = cfg.sweep
    outdir = Path(args.outdir)
    model = None
    if sw.attack == "decoder":
        if args.model:
            model = load_model(args.model)
        else:
            model = {sx: _train(cfg, _pack_for(cfg, sx), sx)[0] for sx in sw.s_x}
    points = rd_sweep(sw, model=model)
    outdir.mkdir(parents=True, exist_ok=True)
    curve = f"{cfg.name}.csv"
    (outdir / curve).write_text(curve_csv(points))
    (outdir / "shannon.csv").write_text(shannon_csv(max(p.rate for p in points)))
    _write_manifest(outdir, "rd-sweep", cfg, [curve, "shannon.csv"])


def cmd_train_decoder(args):
    cfg = _experiment(args)
    s_x = cfg.train.s_x or cfg.sweep.s_x[0]
    model, losses, pairs = _train(cfg, _pack_for(cfg, s_x), s_x)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out)
    loss_path = out.with_name(out.stem + "_loss.csv")
    loss_path.write_text("epoch,loss\n" + "".join(f"{e + 1},{l:.10g}\n" for e, l in enumerate(losses)))
    _write_manifest(out.parent, "train-decoder", cfg, [out.name, loss_path.name],
                    {"s_x": s_x, "training_pairs": pairs, "arch": model.name, "layers": model.descriptors()})


def cmd_reconstruct_images(args):
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = sorted(set(methods) - {"pinv", "decoder", "gradient"})
    if not methods or bad:
        raise UsageError(f"--methods takes a comma list of pinv, decoder, gradient (got {args.methods!r})")
    base = load_config(args.config).to_dict() if args.config else {"source": "mnist", "n": 784, "m": 1568}
    base.update(s_x=[args.sx], s_ns=[args.sns], trials=args.count, scenario="unauthorized", attack="pinv")
    if args.mnist_dir:
        base["mnist_dir"] = args.mnist_dir
    if args.dataset != "mnist" or base.get("source", "mnist") != "mnist":
        raise ConfigError("reconstruct-images works on the mnist source only")
    cfg = config_from_dict(base)
    sw = cfg.sweep
    src = load_source(sw, args.count)
    pack = _pack_for(cfg, args.sx, args.sns)
    root = SeedSpec(sw.seed, "sweep")
    U = ternarize(project(src.X, pack.W, pack.A), args.sx)
    Ua = np.array([ambiguize(u, args.sns, root.child(f"ambig/0/0/{t}")) for t, u in enumerate(U)]).astype(float)

    columns = [src.X]
    distortions = {}
    for method in methods:
        if method == "pinv":
            X_hat = pinv_operator(pack.A, pack.W, sw.lam).solve(Ua)
        elif method == "decoder":
            model = load_model(args.model) if args.model else _train(cfg, pack, args.sx)[0]
            X_hat = forward(model, Ua)
        else:
            g = sw.gradient
            gcfg = GradientAttackConfig(step_size=g.step_size, iterations=g.iterations, lam=sw.lam, init=g.init,
                                        seed=SeedSpec(sw.seed, "gradient-init"))
            x0 = initial_point(sw.n, gcfg)
            spec = surrogate_for(pack.B, x0, args.sx, g.beta) if np.any(x0) else SurrogateSpec(beta=g.beta)
            X_hat = np.array([descend(u, pack.B, spec, gcfg, x0=x0) for u in Ua])
        columns.append(X_hat)
        distortions[method] = float(np.mean((X_hat - src.X) ** 2) / src.sigma2_x)

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    shape = src.shape_hint
    outputs = []
    for t in range(len(src.X)):
        name = f"triptych_{t:03d}.pgm"
        row = tile_images([[col[t]] for col in columns], shape)
        write_pgm(row, row.shape, outdir / name)
        outputs.append(name)
    grid = tile_images(columns, shape)
    write_pgm(grid, grid.shape, outdir / "grid.pgm")
    outputs.append("grid.pgm")
    _write_manifest(outdir, "reconstruct-images", cfg, outputs,
                    {"columns": ["original"] + methods, "s_x": args.sx, "s_ns": args.sns,
                     "mean_distortion": distortions})


# --- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stcalab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("protect", help="encode signals (CSV rows) into protected templates")
    s.add_argument("--config")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--pack-out", help="where to write the projection pack (default: pack.bin next to --out)")
    s.add_argument("--clean-out", help="also write the clean, unambiguized codes")
    s.set_defaults(func=cmd_protect)

    s = sub.add_parser("attack", help="reconstruct signals from protected templates")
    s.add_argument("--method", choices=["pinv", "gradient", "decoder"], required=True)
    s.add_argument("--template", required=True)
    s.add_argument("--pack", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--model")
    s.add_argument("--lam", type=float, default=0.0)
    s.add_argument("--step-size", type=float, default=1e-2)
    s.add_argument("--iterations", type=int, default=200)
    s.add_argument("--beta", type=float, default=10.0)
    s.add_argument("--init", choices=["zeros", "gaussian"], default="zeros")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_attack)

    s = sub.add_parser("authorized", help="reconstruct with a noisy probe of the enrolled signal")
    s.add_argument("--template", required=True)
    s.add_argument("--probe", required=True)
    s.add_argument("--pack", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--lam", type=float, default=0.0)
    s.set_defaults(func=cmd_authorized)

    s = sub.add_parser("rd-sweep", help="run a rate-distortion sweep and write its CSV")
    s.add_argument("--config")
    s.add_argument("--outdir", required=True)
    s.add_argument("--model", help="decoder used for every s_x (otherwise one is trained per s_x)")
    s.set_defaults(func=cmd_rd_sweep)

    s = sub.add_parser("train-decoder", help="train a decoder on clean (code, signal) pairs")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train_decoder)

    s = sub.add_parser("reconstruct-images", help="write original/reconstruction image strips")
    s.add_argument("--dataset", choices=["mnist"], default="mnist")
    s.add_argument("--sx", type=int, required=True)
    s.add_argument("--sns", type=int, default=0)
    s.add_argument("--methods", default="decoder,pinv")
    s.add_argument("--outdir", required=True)
    s.add_argument("--model")
    s.add_argument("--count", type=int, default=8)
    s.add_argument("--config")
    s.add_argument("--mnist-dir")
    s.set_defaults(func=cmd_reconstruct_images)
    return p


def _category(exc) -> str | None:
    for cls, name in ERROR_CATEGORIES:
        if isinstance(exc, cls):
            return exc.category if name is None else name
    return None


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - translated to a one-line category
        category = _category(exc)
        if category is None:
            raise
        print(f"error: {category}: {exc}".replace("\n", " "), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
