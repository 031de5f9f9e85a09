"""Rate-distortion experiments: metrics, the Shannon bound, and Monte-Carlo sweeps.

A sweep walks an (s_x, s_ns) grid.  At each grid point it encodes ``trials``
source vectors, reconstructs them with the chosen method, and records the
normalized distortion alongside the code rate.  Trial t always reuses the same
source vector (and the same probe noise), so curves for different grid points
are paired; ambiguization noise is drawn per (grid point, trial).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .attacks import GradientAttackConfig, SurrogateSpec, descend, initial_point, pinv_operator, surrogate_for
from .codec import ambiguize, code_rate, project, ternarize
from .data import ProjectionPack, gen_gaussian, mnist_split
from .errors import ConfigError
from .linalg import SeedSpec, dct_matrix, gaussian_projection
from .nn import DecoderModel, forward

SCENARIOS = ("limit", "unauthorized", "authorized")
ATTACKS = ("pinv", "gradient", "decoder")
CSV_HEADER = ["rate", "mean_distortion", "std_distortion", "trials", "s_x", "s_ns", "scenario"]


def distortion(x, x_hat, sigma2_x: float) -> float:
    """Per-dimension squared error normalized by the source variance."""
    x = np.asarray(x, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    if x.shape != x_hat.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {x_hat.shape}")
    if sigma2_x <= 0:
        raise ValueError("sigma2_x must be positive")
    return float(np.mean((x - x_hat) ** 2) / sigma2_x)


def shannon_bound(rate, sigma2_x: float = 1.0):
    """Gaussian D(R) = sigma^2 2^(-2R), returned normalized by sigma^2."""
    rate = np.asarray(rate, dtype=float)
    if np.any(rate < 0):
        raise ValueError("rate must be nonnegative")
    out = 2.0 ** (-2.0 * rate)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GradientSettings:
    step_size: float = 1e-2
    iterations: int = 200
    beta: float = 10.0
    init: str = "zeros"


@dataclass(frozen=True)
class SweepConfig:
    source: str = "gaussian"
    n: int = 529
    sigma2_x: float = 1.0
    m: int = 1058
    s_x: tuple = (25, 50, 100, 200, 353)
    s_ns: tuple = (0,)
    scenario: str = "limit"
    attack: str = "pinv"
    lam: float = 0.0
    noise_ratio: float = 0.25
    trials: int = 100
    seed: int = 0
    redraw_projection: bool = False
    mnist_dir: str = "data/mnist"
    gradient: GradientSettings = field(default_factory=GradientSettings)

    def validate(self):
        if self.source not in ("gaussian", "mnist"):
            raise ConfigError(f"source must be 'gaussian' or 'mnist', got {self.source!r}")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.attack not in ATTACKS:
            raise ConfigError(f"attack must be one of {ATTACKS}, got {self.attack!r}")
        if not self.s_x or not self.s_ns:
            raise ConfigError("s_x and s_ns grids must be non-empty")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.m < 1 or self.n < 1:
            raise ConfigError("m and n must be positive")
        if self.sigma2_x <= 0 or self.noise_ratio < 0 or self.lam < 0:
            raise ConfigError("need sigma2_x > 0, noise_ratio >= 0 and lam >= 0")
        if self.scenario == "limit" and tuple(self.s_ns) != (0,):
            raise ConfigError("the 'limit' scenario uses clean codes; set s_ns to [0]")
        for sx in self.s_x:
            for sns in self.s_ns:
                if not 1 <= sx <= self.m or not 0 <= sns <= self.m - sx:
                    raise ConfigError(f"grid point (s_x={sx}, s_ns={sns}) is invalid for m={self.m}")
        return self


@dataclass
class RDPoint:
    rate: float
    mean_distortion: float
    std_distortion: float
    trials: int
    s_x: int
    s_ns: int
    scenario: str
    distortions: np.ndarray = field(default=None, repr=False)

    @property
    def stderr(self) -> float:
        return self.std_distortion / np.sqrt(self.trials)


@dataclass
class Source:
    """Trial signals plus the variance used to normalize distortion."""

    X: np.ndarray
    sigma2_x: float
    shape_hint: tuple | None = None


def load_source(cfg: SweepConfig, count: int | None = None) -> Source:
    count = cfg.trials if count is None else count
    root = SeedSpec(cfg.seed, "sweep")
    if cfg.source == "gaussian":
        ds = gen_gaussian(cfg.n, count, cfg.sigma2_x, root.child("source"))
        return Source(ds.samples, cfg.sigma2_x)
    train = mnist_split(cfg.mnist_dir, "train")
    test = mnist_split(cfg.mnist_dir, "t10k")
    if test.dim != cfg.n:
        raise ConfigError(f"MNIST images have {test.dim} pixels but n={cfg.n}")
    if count > len(test):
        raise ConfigError(f"{count} trials requested but the test split has {len(test)} images")
    order = root.child("mnist-order").generator().permutation(len(test))[:count]
    return Source(test.samples[order], train.pixel_variance(), test.shape_hint)


def sweep_pack(cfg: SweepConfig) -> ProjectionPack:
    from .codec import StcaParams
    params = StcaParams(m=cfg.m, n=cfg.n, s_x=cfg.s_x[0], s_ns=0)
    return ProjectionPack.build(params, SeedSpec(cfg.seed, "sweep"))


def training_set(cfg: SweepConfig, pack: ProjectionPack, s_x: int, count: int):
    """Clean (code, signal) pairs for decoder training, disjoint from the sweep's trial signals.

    Gaussian pairs come from their own stream; MNIST pairs come from the
    training split (all of it when ``count`` exceeds its size).
    """
    if cfg.source == "gaussian":
        X = gen_gaussian(cfg.n, count, cfg.sigma2_x, SeedSpec(cfg.seed, "train-data")).samples
    else:
        X = mnist_split(cfg.mnist_dir, "train").samples[:count]
        if X.shape[1] != cfg.n:
            raise ConfigError(f"MNIST images have {X.shape[1]} pixels but n={cfg.n}")
    U = ternarize(project(X, pack.W, pack.A), s_x)
    return U.astype(float), X


def default_decoder(cfg: SweepConfig, arch: str = "") -> DecoderModel:
    """synthetic_net for Gaussian sources, mnist_net for MNIST, unless ``arch`` names one."""
    from .nn import mnist_net, synthetic_net
    arch = arch or ("synthetic_net" if cfg.source == "gaussian" else "mnist_net")
    side = int(round(np.sqrt(cfg.n)))
    if side * side != cfg.n:
        raise ConfigError(f"the built-in decoders need a square image, n={cfg.n} is not a square")
    if arch == "synthetic_net":
        # tanh output: scale so that +-3 standard deviations fit
        return synthetic_net(cfg.m, side=side, output_scale=3.0 * np.sqrt(cfg.sigma2_x))
    if arch == "mnist_net":
        return mnist_net(cfg.m, side=side)
    raise ConfigError(f"unknown decoder architecture {arch!r}")


def _reconstruct(cfg, U_in, B, solver, model, s_x):
    if cfg.attack == "pinv":
        return solver.solve(U_in.astype(float))
    if cfg.attack == "decoder":
        return forward(model, U_in.astype(float))
    g = cfg.gradient
    gcfg = GradientAttackConfig(step_size=g.step_size, iterations=g.iterations, lam=cfg.lam, init=g.init,
                                seed=SeedSpec(cfg.seed, "gradient-init"))
    x0 = initial_point(B.shape[1], gcfg)
    spec = surrogate_for(B, x0, s_x, g.beta) if np.any(x0) else SurrogateSpec(beta=g.beta, tau=0.0)
    return np.array([descend(u, B, spec, gcfg, x0=x0) for u in U_in])


def rd_sweep(cfg: SweepConfig, pack: ProjectionPack | None = None, model=None, source: Source | None = None):
    """Run the grid and return RDPoints sorted by (rate, s_ns).

    ``model`` is required for the decoder attack: either one DecoderModel or
    a mapping from s_x to a model trained at that sparsity.
    """
    cfg.validate()
    if (cfg.attack == "decoder") != (model is not None):
        raise ConfigError("a decoder model must be given exactly when attack = 'decoder'")
    src = source if source is not None else load_source(cfg)
    X = src.X[:cfg.trials]
    if len(X) < cfg.trials:
        raise ConfigError(f"source provides {len(X)} signals, {cfg.trials} trials requested")
    pack = pack if pack is not None else sweep_pack(cfg)
    root = SeedSpec(cfg.seed, "sweep")
    noise_sd = np.sqrt(cfg.noise_ratio * src.sigma2_x)
    probes = X + root.child("probe-noise").generator().normal(0.0, 1.0, X.shape) * noise_sd

    if cfg.redraw_projection:
        mats = [gaussian_projection(cfg.m, cfg.n, cfg.n, root.child(f"projection/{t}")) for t in range(cfg.trials)]
        W = dct_matrix(cfg.n)
        groups = [(np.array([t]), mats[t], W) for t in range(cfg.trials)]
    else:
        groups = [(np.arange(cfg.trials), pack.A, pack.W)]

    points = []
    for i, sx in enumerate(cfg.s_x):
        mdl = model.get(sx) if isinstance(model, dict) else model
        if cfg.attack == "decoder" and mdl is None:
            raise ConfigError(f"no decoder model for s_x={sx}")
        for j, sns in enumerate(cfg.s_ns):
            D = np.empty(cfg.trials)
            for idx, A, W in groups:
                B = A @ W
                solver = pinv_operator(A, W, cfg.lam) if cfg.attack == "pinv" or cfg.scenario == "authorized" else None
                U = ternarize(project(X[idx], W, A), sx)
                Ua = np.array([ambiguize(U[k], sns, root.child(f"ambig/{i}/{j}/{t}")) for k, t in enumerate(idx)])
                if cfg.scenario == "authorized":
                    mask = ternarize(project(probes[idx], W, A), sx) != 0
                    X_hat = solver.solve((Ua * mask).astype(float))
                else:
                    X_hat = _reconstruct(cfg, Ua, B, solver, mdl, sx)
                D[idx] = np.mean((X[idx] - X_hat) ** 2, axis=1) / src.sigma2_x
            std = float(np.std(D, ddof=1)) if cfg.trials > 1 else 0.0
            points.append(RDPoint(code_rate(cfg.m, cfg.n, sx), float(np.mean(D)), std, cfg.trials,
                                  sx, sns, cfg.scenario, D))
    points.sort(key=lambda p: (p.rate, p.s_ns))
    return points


def curve_csv(points) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for p in points:
        w.writerow(["%.10g" % p.rate, "%.10g" % p.mean_distortion, "%.10g" % p.std_distortion,
                    p.trials, p.s_x, p.s_ns, p.scenario])
    return buf.getvalue()


def shannon_csv(max_rate: float, steps: int = 101) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rate", "distortion"])
    for r in np.linspace(0.0, max_rate, steps):
        w.writerow(["%.10g" % r, "%.10g" % shannon_bound(r)])
    return buf.getvalue()


def read_curve(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


PANELS = {
    "a": ("gaussian", "limit"), "b": ("mnist", "limit"),
    "c": ("gaussian", "unauthorized"), "d": ("mnist", "unauthorized"),
    "e": ("gaussian", "authorized"), "f": ("mnist", "authorized"),
}


def default_panel_config(panel: str, **overrides) -> SweepConfig:
    """Grid for one of the six rate-distortion panels (synthetic/MNIST x limit/unauthorized/authorized)."""
    source, scenario = PANELS[panel]
    base = SweepConfig(source=source, scenario=scenario)
    if source == "mnist":
        base = replace(base, n=784, m=1568, s_x=(25, 50, 100, 200, 400))
    if scenario != "limit":
        base = replace(base, s_ns=(0, 25, 50, 100))
    return replace(base, **overrides)


def figure_panels(configs: dict, outdir, models: dict | None = None) -> dict:
    """Run each labelled config and write ``<label>.csv`` plus ``shannon.csv`` into ``outdir``.

    All configs are validated before anything runs, so a bad grid writes no files.
    """
    from pathlib import Path
    if not configs:
        raise ConfigError("no panel configurations given")
    for cfg in configs.values():
        cfg.validate()
    models = models or {}
    curves = {label: rd_sweep(cfg, model=models.get(label)) for label, cfg in configs.items()}
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    for label, pts in curves.items():
        (out / f"{label}.csv").write_text(curve_csv(pts))
    max_rate = max(p.rate for pts in curves.values() for p in pts)
    (out / "shannon.csv").write_text(shannon_csv(max_rate))
    return curves
