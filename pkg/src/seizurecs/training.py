"""Joint optimization of compression matrix, prediction network and
reconstruction network, plus the cross-validation and grid-search
protocol around it."""

from __future__ import annotations

import csv
import itertools
import logging
import multiprocessing as mp
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction
from os import PathLike
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import functional as F
from .checkpoint import read_container, write_container
from .compression import FLOAT, CompressionMatrix, parse_ratio
from .data.windows import Split, WindowedDataset, five_fold_split, normalize
from .errors import ConfigError, ContractError, FormatError, NumericalError
from .metrics import EvalReport, FoldMetrics, classify_metrics, mean_defined, pcc, psnr
from .prediction import FILTERS_STEM_GRID, SIZE_FC_GRID, PredictionConfig, PredictionNet, one_hot
from .reconstruction import ReconstructionConfig, ReconstructionNet
from .tensor import Tensor, backward

logger = logging.getLogger(__name__)

LR_GRID = (1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2)
BATCH_GRID = (4, 8, 16, 32)
PAPER_EPOCHS = 150
PAPER_GRIDS = {
    "lr": LR_GRID,
    "filters_stem": FILTERS_STEM_GRID,
    "size_fc": SIZE_FC_GRID,
    "batch_size": BATCH_GRID,
}


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 1.0
    epochs: int = PAPER_EPOCHS
    lr: float = 1e-3
    batch_size: int = 16
    filters_stem: int = 8
    size_fc: int = 50
    filters_recon: int = 16
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    ratio: Fraction = Fraction(1, 4)
    mode: str = FLOAT
    selection: str = "best"
    residual: str = "up"
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "ratio", parse_ratio(self.ratio))
        if self.lam < 0:
            raise ConfigError(f"lambda must be non-negative, got {self.lam}")
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0:
            raise ConfigError("epochs, batch_size and lr must be positive")
        if self.mode not in ("float", "binary"):
            raise ConfigError(f"mode must be 'float' or 'binary', got {self.mode!r}")
        if self.selection not in ("best", "final"):
            raise ConfigError(f"selection must be 'best' or 'final', got {self.selection!r}")

    def paper_grid_violations(self) -> list[str]:
        """Fields whose values fall outside the published sweep."""
        bad = [k for k, grid in PAPER_GRIDS.items() if getattr(self, k) not in grid]
        if self.epochs != PAPER_EPOCHS:
            bad.append("epochs")
        return bad

    def to_dict(self) -> dict[str, object]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.to_dict().items())

    @classmethod
    def from_dict(cls, values: dict[str, str]) -> "TrainConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, text in values.items():
            if key not in kinds:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, kinds[key], text)
        return cls(**kwargs)

    @classmethod
    def from_text(cls, text: str) -> "TrainConfig":
        from .checkpoint import parse_config

        try:
            return cls.from_dict(parse_config(text))
        except FormatError as exc:
            raise ConfigError(str(exc)) from exc


def _coerce(key: str, kind: str, text):
    if not isinstance(text, str):
        return text
    try:
        if kind == "float":
            return float(text)
        if kind == "int":
            return int(text)
        if kind == "Fraction":
            return parse_ratio(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {text!r}") from exc
    return text


# -- model bundle -------------------------------------------------------------------


class ModelBundle:
    """Compression matrix plus both networks, sharing one ratio."""

    def __init__(
        self,
        n_samples: int,
        channels: int,
        cfg: TrainConfig,
        fold: int | None = None,
        norm_mean=None,
        norm_std=None,
    ):
        self.cfg = cfg
        self.n_samples = int(n_samples)
        self.channels = int(channels)
        self.fold = fold
        self.norm_mean = None if norm_mean is None else np.asarray(norm_mean, dtype=np.float64)
        self.norm_std = None if norm_std is None else np.asarray(norm_std, dtype=np.float64)
        self.compression = CompressionMatrix(
            n_samples, cfg.ratio, cfg.mode, rng=np.random.default_rng([cfg.seed, 0])
        )
        self.pred_cfg = PredictionConfig(
            in_channels=channels,
            filters_stem=cfg.filters_stem,
            size_fc=cfg.size_fc,
            residual=cfg.residual,
            bn_eps=cfg.bn_eps,
            bn_momentum=cfg.bn_momentum,
        )
        self.prediction = PredictionNet(self.pred_cfg, rng=np.random.default_rng([cfg.seed, 1]))
        self.recon_cfg = ReconstructionConfig(
            cfg.ratio, n_samples, channels, cfg.filters_recon, bn_eps=cfg.bn_eps, bn_momentum=cfg.bn_momentum
        )
        self.reconstruction = ReconstructionNet(self.recon_cfg, rng=np.random.default_rng([cfg.seed, 2]))
        self.recon_calls = 0

    @property
    def modules(self):
        return {"compression": self.compression, "prediction": self.prediction, "reconstruction": self.reconstruction}

    @property
    def n_compressed(self) -> int:
        return self.compression.n_out

    def named_parameters(self, include_reconstruction: bool = True):
        for prefix, module in self.modules.items():
            if prefix == "reconstruction" and not include_reconstruction:
                continue
            yield from module.named_parameters(prefix + ".")

    def train(self, mode: bool = True) -> "ModelBundle":
        for m in self.modules.values():
            m.train(mode)
        return self

    def eval(self) -> "ModelBundle":
        return self.train(False)

    def zero_grad(self) -> None:
        for _, p in self.named_parameters():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {}
        for prefix, module in self.modules.items():
            state.update({f"{prefix}.{k}": v for k, v in module.state_dict().items()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for prefix, module in self.modules.items():
            sub = {k[len(prefix) + 1 :]: v for k, v in state.items() if k.startswith(prefix + ".")}
            module.load_state_dict(sub)

    # -- forward helpers ---------------------------------------------------------
    def reconstruct_tensor(self, z: Tensor) -> Tensor:
        self.recon_calls += 1
        return self.reconstruction(z)

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[1] != self.channels or x.shape[2] != self.n_samples:
            raise ContractError(
                f"model expects windows of {self.channels} channels x {self.n_samples} samples, got {x.shape}"
            )
        return x

    def _batched(self, x: np.ndarray, fn: Callable[[Tensor], Tensor], chunk: int) -> np.ndarray:
        x = self._check_input(x)
        was_training = self.prediction.training
        self.eval()
        try:
            outs = [fn(Tensor(x[i : i + chunk])).data for i in range(0, len(x), chunk)]
        finally:
            self.train(was_training)
        return np.concatenate(outs) if outs else np.zeros((0,))

    def compress(self, x: np.ndarray, chunk: int = 64) -> np.ndarray:
        """``B x C x N`` -> ``B x C x M``."""
        return self._batched(x, self.compression, chunk)

    def predict_proba(self, x: np.ndarray, chunk: int = 64) -> np.ndarray:
        return self._batched(x, lambda t: self.prediction(self.compression(t)), chunk)

    def reconstruct(self, x: np.ndarray, chunk: int = 64) -> np.ndarray:
        return self._batched(x, lambda t: self.reconstruct_tensor(self.compression(t)), chunk)

    def reconstruct_compressed(self, z: np.ndarray, chunk: int = 64) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 3 or z.shape[1:] != (self.channels, self.n_compressed):
            raise ContractError(f"expected compressed windows B x {self.channels} x {self.n_compressed}, got {z.shape}")
        was_training = self.prediction.training
        self.eval()
        try:
            outs = [self.reconstruct_tensor(Tensor(z[i : i + chunk])).data for i in range(0, len(z), chunk)]
        finally:
            self.train(was_training)
        return np.concatenate(outs)

    # -- persistence -----------------------------------------------------------------
    def config_entries(self) -> dict[str, object]:
        entries = {"n_samples": self.n_samples, "channels": self.channels}
        entries.update({f"train.{k}": v for k, v in self.cfg.to_dict().items()})
        if self.fold is not None:
            entries["fold"] = self.fold
        return entries

    def sections(self) -> dict[str, np.ndarray]:
        out = dict(self.state_dict())
        if self.norm_mean is not None:
            out["norm.mean"] = self.norm_mean
            out["norm.std"] = self.norm_std
        return out

    def save(self, path: str | PathLike, extra_config=None, extra_sections=None) -> None:
        config = self.config_entries()
        config.update(extra_config or {})
        sections = self.sections()
        sections.update(extra_sections or {})
        write_container(path, config, sections)

    @classmethod
    def from_container(cls, config: dict[str, str], sections: dict[str, np.ndarray]) -> "ModelBundle":
        try:
            n_samples = int(config["n_samples"])
            channels = int(config["channels"])
        except (KeyError, ValueError) as exc:
            raise FormatError(f"checkpoint config lacks model dimensions: {exc}") from None
        train_keys = {k[6:]: v for k, v in config.items() if k.startswith("train.")}
        cfg = TrainConfig.from_dict(train_keys)
        fold = int(config["fold"]) if "fold" in config else None
        bundle = cls(
            n_samples, channels, cfg, fold=fold, norm_mean=sections.get("norm.mean"), norm_std=sections.get("norm.std")
        )
        bundle.load_state_dict(sections)
        return bundle

    @classmethod
    def load(cls, path: str | PathLike) -> "ModelBundle":
        config, sections = read_container(path)
        return cls.from_container(config, sections)


# -- losses and optimizer -----------------------------------------------------------


def joint_loss(probs: Tensor, onehot, x_hat: Tensor | None, x, lam: float) -> Tensor:
    """``cross_entropy(probs, y) + lam * mse(x_hat, x)``; the reconstruction
    term is omitted entirely when ``lam == 0``."""
    if lam < 0:
        raise ConfigError(f"lambda must be non-negative, got {lam}")
    loss = F.cross_entropy(probs, onehot)
    if lam == 0:
        return loss
    if x_hat is None:
        raise ContractError("lambda > 0 needs a reconstruction")
    return F.add(loss, F.mul(F.mse(x_hat, x), float(lam)))


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update, applied to ``params`` in place.

    Parameters without an entry in ``grads`` are left untouched.
    """
    for name, g in grads.items():
        if name not in params:
            raise ContractError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ContractError(f"{name}: gradient shape {g.shape} != parameter shape {params[name].shape}")
        bad = ~np.isfinite(g)
        if bad.any():
            i = int(np.flatnonzero(bad.reshape(-1))[0])
            raise NumericalError(
                f"non-finite gradient at step {state.step + 1}: parameter {name!r}, index {i}, value {g.reshape(-1)[i]}"
            )
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, g in grads.items():
        m = state.m.setdefault(name, np.zeros_like(g))
        v = state.v.setdefault(name, np.zeros_like(g))
        # in place with one scratch buffer; the compression matrix is large
        tmp = np.subtract(g, m)
        tmp *= 1.0 - beta1
        m += tmp
        np.multiply(g, g, out=tmp)
        tmp -= v
        tmp *= 1.0 - beta2
        v += tmp
        np.divide(v, c2, out=tmp)
        np.sqrt(tmp, out=tmp)
        tmp += eps
        np.divide(m, tmp, out=tmp)
        tmp *= lr / c1
        params[name] -= tmp


class Adam:
    def __init__(self, named_params, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(named_params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = AdamState()

    def step(self) -> None:
        grads = {n: p.grad for n, p in self.params.items() if p.grad is not None}
        data = {n: p.data for n, p in self.params.items()}
        adam_step(data, grads, self.state, self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def sections(self) -> dict[str, np.ndarray]:
        out = {}
        for name in self.state.m:
            out[f"adam.m.{name}"] = self.state.m[name]
            out[f"adam.v.{name}"] = self.state.v[name]
        return out

    def load_sections(self, sections: dict[str, np.ndarray], step: int) -> None:
        self.state = AdamState(step=step)
        for key, values in sections.items():
            for kind in ("m", "v"):
                prefix = f"adam.{kind}."
                if key.startswith(prefix):
                    name = key[len(prefix) :]
                    if name not in self.params:
                        raise FormatError(f"optimizer state for unknown parameter {name!r}")
                    getattr(self.state, kind)[name] = values.reshape(self.params[name].shape).copy()


# -- fold training --------------------------------------------------------------------


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_accuracy: float
    val_sensitivity: float | None
    wall_seconds: float


LOG_FIELDS = ("epoch", "train_loss", "val_accuracy", "val_sensitivity", "wall_seconds")


def write_log(path: str | PathLike, log: Sequence[EpochLog]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_FIELDS)
        for row in log:
            writer.writerow(["" if getattr(row, k) is None else repr(getattr(row, k)) for k in LOG_FIELDS])


@dataclass
class FoldResult:
    bundle: ModelBundle
    log: list[EpochLog]
    best_epoch: int
    best_val_accuracy: float


def _batches(n_train: int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    order = np.random.default_rng([seed, 1000 + epoch]).permutation(n_train)
    batches = [order[i : i + batch_size] for i in range(0, n_train, batch_size)]
    # a single-sample batch has degenerate batch-norm statistics
    if len(batches) > 1 and len(batches[-1]) == 1:
        batches[-2] = np.concatenate([batches[-2], batches[-1]])
        batches.pop()
    return batches


def train_step(bundle: ModelBundle, opt: Adam, xb: np.ndarray, yb: np.ndarray, lam: float) -> float:
    """Forward, backward and one optimizer step on a batch; returns the loss."""
    opt.zero_grad()
    x = Tensor(xb)
    z = bundle.compression(x)
    probs = bundle.prediction(z)
    x_hat = bundle.reconstruct_tensor(z) if lam > 0 else None
    loss = joint_loss(probs, one_hot(yb), x_hat, x, lam)
    value = loss.item()
    if not np.isfinite(value):
        raise NumericalError(f"non-finite loss {value} at optimizer step {opt.state.step + 1}")
    backward(loss)
    opt.step()
    return value


def _val_scores(bundle: ModelBundle, x: np.ndarray, y: np.ndarray) -> tuple[float, float | None]:
    if len(y) == 0:
        return float("nan"), None
    pred = bundle.predict_proba(x).argmax(axis=1)
    m = classify_metrics(pred, y)
    return m.accuracy, m.sensitivity


def train_fold(
    ds: WindowedDataset,
    split: Split,
    cfg: TrainConfig,
    fold: int | None = None,
    checkpoint_path: str | PathLike | None = None,
    resume_from: str | PathLike | None = None,
    stop_after_epoch: int | None = None,
    progress: Callable[[EpochLog], None] | None = None,
) -> FoldResult:
    """Train on ``split.train`` of an already-normalized dataset.

    Validation accuracy is measured after every epoch; with
    ``cfg.selection == "best"`` the weights of the first epoch reaching the
    best validation accuracy are returned, otherwise the final weights.
    ``checkpoint_path`` receives the full training state after every
    epoch; ``resume_from`` continues such a state.
    """
    if len(split.train) == 0:
        raise ContractError("training set is empty")
    bundle = ModelBundle(ds.n_samples, ds.n_channels, cfg, fold=fold, norm_mean=ds.norm_mean, norm_std=ds.norm_std)
    params = list(bundle.named_parameters(include_reconstruction=cfg.lam > 0))
    opt = Adam(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    log: list[EpochLog] = []
    best_acc, best_epoch, best_state = -np.inf, 0, None
    first_epoch = 1

    if resume_from is not None:
        config, sections = read_container(resume_from)
        bundle.load_state_dict(sections)
        opt.load_sections(sections, int(config["adam_step"]))
        first_epoch = int(config["epoch"]) + 1
        best_acc = float(config["best_val_accuracy"])
        best_epoch = int(config["best_epoch"])
        best_state = {k[5:]: v for k, v in sections.items() if k.startswith("best.")} or None
        log = [_parse_log_entry(config[k]) for k in sorted((k for k in config if k.startswith("log.")), key=lambda k: int(k[4:]))]

    x_train = ds.channels_first(split.train)
    y_train = ds.labels[split.train]
    x_val = ds.channels_first(split.val)
    y_val = ds.labels[split.val]

    t0 = time.perf_counter()
    last = cfg.epochs if stop_after_epoch is None else min(cfg.epochs, stop_after_epoch)
    for epoch in range(first_epoch, last + 1):
        bundle.train()
        total, count = 0.0, 0
        for idx in _batches(len(y_train), cfg.batch_size, cfg.seed, epoch):
            total += train_step(bundle, opt, x_train[idx], y_train[idx], cfg.lam) * len(idx)
            count += len(idx)
        if cfg.mode == "binary":
            eff = bundle.compression.effective_matrix()
            assert np.all((eff == 0) | (eff == 1))
        acc, sens = _val_scores(bundle, x_val, y_val)
        entry = EpochLog(epoch, float(total / count), float(acc), None if sens is None else float(sens), time.perf_counter() - t0)
        log.append(entry)
        if progress:
            progress(entry)
        logger.info("fold %s epoch %d loss %.5f val_acc %.4f", fold, epoch, entry.train_loss, acc)
        if acc > best_acc:
            best_acc, best_epoch, best_state = acc, epoch, bundle.state_dict()
        if checkpoint_path is not None:
            _save_training_state(checkpoint_path, bundle, opt, epoch, best_acc, best_epoch, best_state, log)

    if cfg.selection == "best" and best_state is not None:
        bundle.load_state_dict(best_state)
    bundle.recon_calls_during_training = bundle.recon_calls
    return FoldResult(bundle, log, best_epoch, float(best_acc))


def _save_training_state(path, bundle, opt, epoch, best_acc, best_epoch, best_state, log) -> None:
    extra = {"epoch": epoch, "adam_step": opt.state.step, "best_val_accuracy": repr(float(best_acc)), "best_epoch": best_epoch}
    for i, entry in enumerate(log):
        extra[f"log.{i}"] = ",".join(repr(getattr(entry, k)) for k in LOG_FIELDS)
    sections = opt.sections()
    if best_state is not None:
        sections.update({f"best.{k}": v for k, v in best_state.items()})
    bundle.save(path, extra_config=extra, extra_sections=sections)


def _parse_log_entry(text: str) -> EpochLog:
    epoch, loss, acc, sens, wall = text.split(",")
    return EpochLog(int(epoch), float(loss), float(acc), None if sens == "None" else float(sens), float(wall))


# -- evaluation and cross-validation ---------------------------------------------------


def evaluate_fold(bundle: ModelBundle, ds: WindowedDataset, idx, fold: int, with_reconstruction: bool) -> FoldMetrics:
    """Test-fold metrics; PCC/PSNR are per-window values averaged over the
    fold (only when the reconstruction network was trained)."""
    x = ds.channels_first(idx)
    y = ds.labels[idx]
    cm = classify_metrics(bundle.predict_proba(x).argmax(axis=1), y)
    pcc_val = psnr_val = None
    if with_reconstruction and len(idx):
        x_hat = bundle.reconstruct(x)
        # metrics take N x C signals
        pccs = [pcc(a.T, b.T) for a, b in zip(x, x_hat)]
        psnrs = [psnr(a.T, b.T) for a, b in zip(x, x_hat)]
        pcc_val, psnr_val = mean_defined(pccs), mean_defined(psnrs)
    return FoldMetrics(
        fold=fold,
        accuracy=cm.accuracy,
        sensitivity=cm.sensitivity,
        fpr_per_hour=cm.fpr_per_hour,
        pcc=pcc_val,
        psnr=psnr_val,
        tp=cm.tp,
        tn=cm.tn,
        fp=cm.fp,
        fn=cm.fn,
        interictal_hours=cm.interictal_hours,
    )


@dataclass
class CVResult:
    report: EvalReport
    folds: list[FoldResult]


_SHARED: dict[str, object] = {}


def _run_fold(ds: WindowedDataset, split: Split, cfg: TrainConfig, fold: int, out_dir) -> tuple[FoldMetrics, FoldResult]:
    norm = normalize(ds, split.train)
    result = train_fold(norm, split, cfg, fold=fold)
    metrics = evaluate_fold(result.bundle, norm, split.test, fold, with_reconstruction=cfg.lam > 0)
    if out_dir is not None:
        out_dir = Path(out_dir)
        result.bundle.save(out_dir / f"fold{fold}.c2spmodel")
        write_log(out_dir / f"fold{fold}_log.csv", result.log)
    return metrics, result


def _run_fold_shared(split: Split, cfg: TrainConfig, fold: int, out_dir):
    metrics, result = _run_fold(_SHARED["ds"], split, cfg, fold, out_dir)
    return metrics, result


def cross_validate(
    ds: WindowedDataset,
    cfg: TrainConfig,
    folds: Iterable[int] | None = None,
    split_seed: int | None = None,
    jobs: int = 1,
    out_dir: str | PathLike | None = None,
) -> CVResult:
    """Five-fold protocol on raw (unnormalized) windows.

    Each fold is normalized with its own training statistics, trained and
    scored on its test fold. ``jobs > 1`` trains folds in separate
    processes.
    """
    splits = five_fold_split(len(ds), cfg.seed if split_seed is None else split_seed)
    fold_ids = list(range(len(splits))) if folds is None else list(folds)
    if jobs > 1 and len(fold_ids) > 1:
        _SHARED["ds"] = ds
        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
            futures = [pool.submit(_run_fold_shared, splits[i], cfg, i, out_dir) for i in fold_ids]
            outcomes = [f.result() for f in futures]
        _SHARED.clear()
    else:
        outcomes = [_run_fold(ds, splits[i], cfg, i, out_dir) for i in fold_ids]
    report = EvalReport([m for m, _ in outcomes])
    return CVResult(report, [r for _, r in outcomes])


# -- hyper-parameter grid --------------------------------------------------------------


@dataclass
class GridEntry:
    config: TrainConfig
    val_accuracy: float


@dataclass
class GridResult:
    best: TrainConfig
    entries: list[GridEntry]
    cv: CVResult | None


def grid_configs(base: TrainConfig, grids: dict[str, Sequence]) -> list[TrainConfig]:
    keys = [k for k in ("lr", "filters_stem", "size_fc", "batch_size") if k in grids]
    for k in grids:
        if k not in keys:
            raise ConfigError(f"unknown grid dimension {k!r}")
        if len(grids[k]) == 0:
            raise ConfigError(f"grid {k!r} is empty")
    combos = itertools.product(*(grids[k] for k in keys))
    return [replace(base, **dict(zip(keys, values))) for values in combos]


def _tie_key(cfg: TrainConfig):
    return (cfg.lr, cfg.filters_stem, cfg.size_fc, cfg.batch_size)


def select_best(entries: Sequence[GridEntry]) -> GridEntry:
    """Highest validation accuracy; ties go to lower lr, then the smaller
    model, then the smaller batch."""
    return min(entries, key=lambda e: (-e.val_accuracy,) + _tie_key(e.config))


def grid_search(
    ds: WindowedDataset,
    base: TrainConfig,
    grids: dict[str, Sequence] | None = None,
    budget: int | None = None,
    run_cv: bool = True,
    jobs: int = 1,
    out_dir: str | PathLike | None = None,
) -> GridResult:
    """Sweep the grid on the first split's train/validation sets, pick the
    best configuration by validation accuracy, then run the full
    cross-validation with it.

    ``budget`` keeps a seeded subset of that many grid points.
    """
    configs = grid_configs(base, grids if grids is not None else PAPER_GRIDS)
    if budget is not None and budget < len(configs):
        if budget < 1:
            raise ConfigError("budget must be at least 1")
        keep = np.sort(np.random.default_rng([base.seed, 7]).choice(len(configs), size=budget, replace=False))
        configs = [configs[i] for i in keep]
    split = five_fold_split(len(ds), base.seed)[0]
    norm = normalize(ds, split.train)
    entries = []
    for cfg in configs:
        result = train_fold(norm, split, cfg, fold=0)
        entries.append(GridEntry(cfg, result.best_val_accuracy))
        logger.info("grid point %s -> val acc %.4f", _tie_key(cfg), result.best_val_accuracy)
    del norm
    best = select_best(entries).config
    cv = cross_validate(ds, best, jobs=jobs, out_dir=out_dir) if run_cv else None
    return GridResult(best, entries, cv)
