"""Joint training of model parameters and task-noise parameters.

One optimizer, one learning rate, one step for everything: each mini-batch
updates the model weights and the s_k = log sigma_k^2 parameters together.
Every step appends a row to the weight-trajectory CSV (state BEFORE the
update, so the first row shows the neutral 1/3 weights). Runs are
deterministic given (seed, config, data): shuffling uses a dedicated
seeded generator and checkpoints/CSVs are byte-stable.
"""

import hashlib
import json
import math
import os
import random
from dataclasses import dataclass, field
from typing import Optional

from array import array

from .autodiff import backend, backward
from .awl import (
    AlfVariant, DawlStrategy, SigmaParams, assemble_task_losses, combine,
    normalized_task_weights,
)
from .metrics import evaluate
from .model import ToyModel, Vocabulary

CHECKPOINT_VERSION = 1

TRAJECTORY_COLUMNS = (
    "step", "w_polarity", "w_aspect", "w_opinion",
    "sigma2_polarity", "sigma2_aspect", "sigma2_opinion",
    "L_p", "L_a", "L_o",
)


class TrainDivergence(RuntimeError):
    """Combined loss went non-finite; carries the last-good checkpoint path."""

    def __init__(self, msg, checkpoint_path):
        super().__init__(msg)
        self.checkpoint_path = checkpoint_path


@dataclass(frozen=True)
class TrainConfig:
    alf: AlfVariant = field(default_factory=AlfVariant.alf2)
    strategy: DawlStrategy = DawlStrategy.OUTPUT
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 42
    embedding_dim: int = 64
    max_target_len: int = 16
    clip_grad_norm: Optional[float] = 5.0


def config_to_dict(config):
    return {
        "alf": config.alf.kind,
        "fixed_weights": list(config.alf.weights) if config.alf.weights else None,
        "strategy": config.strategy.value,
        "epochs": config.epochs,
        "batch_size": config.batch_size,
        "learning_rate": config.learning_rate,
        "seed": config.seed,
        "embedding_dim": config.embedding_dim,
        "max_target_len": config.max_target_len,
        "clip_grad_norm": config.clip_grad_norm,
    }


def config_from_dict(d):
    if d["alf"] == "fixed":
        alf = AlfVariant.fixed(d["fixed_weights"])
    else:
        alf = AlfVariant(d["alf"])
    return TrainConfig(
        alf=alf,
        strategy=DawlStrategy(d["strategy"]),
        epochs=int(d["epochs"]),
        batch_size=int(d["batch_size"]),
        learning_rate=float(d["learning_rate"]),
        seed=int(d["seed"]),
        embedding_dim=int(d["embedding_dim"]),
        max_target_len=int(d["max_target_len"]),
        clip_grad_norm=(None if d.get("clip_grad_norm") is None
                        else float(d["clip_grad_norm"])),
    )


class Adam:
    """Adaptive-moment gradient descent with optional global-norm clipping.

    Bias correction is folded into the per-step rate
    lr_t = lr * sqrt(1 - beta2^t) / (1 - beta1^t).
    """

    def __init__(self, tensors, lr, beta1=0.9, beta2=0.999, eps=1e-8,
                 clip_norm=None):
        self.tensors = list(tensors)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self.clip_count = 0
        self._m = [array("d", bytes(8 * t.numel)) for t in self.tensors]
        self._v = [array("d", bytes(8 * t.numel)) for t in self.tensors]

    def zero_grad(self):
        for t in self.tensors:
            t.zero_grad()

    def _clip(self):
        if self.clip_norm is None:
            return None
        total = 0.0
        for t in self.tensors:
            if t.grad is not None:
                total += backend.K.sumsq(t.grad, t.numel)
        norm = math.sqrt(total)
        if norm > self.clip_norm:
            factor = self.clip_norm / norm
            for t in self.tensors:
                if t.grad is not None:
                    backend.K.scale_inplace(t.grad, factor, t.numel)
            self.clip_count += 1
        return norm

    def step(self):
        self._clip()
        self.t += 1
        lr_t = (self.lr * math.sqrt(1.0 - self.beta2 ** self.t)
                / (1.0 - self.beta1 ** self.t))
        for t, m, v in zip(self.tensors, self._m, self._v):
            if t.grad is None:
                continue
            backend.K.adam_update(t.data, t.grad, m, v, t.numel,
                                  lr_t, self.beta1, self.beta2, self.eps)


def step(batch, model, sigma, config, opt, on_losses=None):
    """One forward + backward + joint update; returns the combined loss.

    ``on_losses(task_losses, combined_value)`` fires after the forward
    pass and before any update, which is where trajectory rows are logged.
    """
    opt.zero_grad()
    losses = assemble_task_losses(model, batch, config.strategy,
                                  max_target_len=config.max_target_len)
    combined = combine(losses, sigma, config.alf)
    value = combined.item()
    if on_losses is not None:
        on_losses(losses, value)
    if not math.isfinite(value):
        return value
    backward(combined)
    opt.step()
    return value


def build_vocab(dataset):
    """Vocabulary over sentences, targets, and any generated aux text."""
    texts = []
    for inst in dataset:
        texts.append(inst.sentence)
        texts.append(inst.target)
        if hasattr(inst, "aspect"):
            texts.append(inst.aspect)
            texts.append(inst.opinion)
    return Vocabulary.build(texts)


@dataclass
class EpochStats:
    epoch: int
    mean_L_p: float
    mean_L_a: float
    mean_L_o: float
    mean_combined: float
    weights: tuple
    dev_accuracy: Optional[float] = None
    dev_macro_f1: Optional[float] = None


@dataclass
class TrainReport:
    epochs: list
    checkpoint_path: str
    trajectory_path: str
    clip_events: int
    param_count: int


def _csv_row(step_idx, weights, sigma2, lp, la, lo):
    cells = [str(step_idx)]
    cells += [repr(w) for w in weights]
    if sigma2 is None:
        cells += ["", "", ""]
    else:
        cells += [repr(sigma2["polarity"]), repr(sigma2["aspect"]),
                  repr(sigma2["opinion"])]
    cells += [repr(lp), repr(la), repr(lo)]
    return ",".join(cells) + "\n"


def _snapshot(model, sigma):
    params = {name: array("d", t.data) for name, t in model.parameters()}
    return params, sigma.values()


def _restore(model, sigma, snap):
    params, svals = snap
    for name, t in model.parameters():
        t.data[:] = params[name]
    sigma.load_values(svals)


def train(dataset, dev, config, out_dir):
    """Full training run; writes trajectory.csv and checkpoint.json.

    Aborts with TrainDivergence on a non-finite combined loss, after
    writing a checkpoint of the parameters that produced the last finite
    loss.
    """
    os.makedirs(out_dir, exist_ok=True)
    trajectory_path = os.path.join(out_dir, "trajectory.csv")
    checkpoint_path = os.path.join(out_dir, "checkpoint.json")

    instances = list(dataset)
    if not instances:
        raise ValueError("train: empty dataset")
    vocab = build_vocab(dataset)
    model = ToyModel(vocab, dim=config.embedding_dim, seed=config.seed)
    sigma = SigmaParams()
    tensors = [t for _, t in model.parameters()] + [t for _, t in sigma.tensors()]
    opt = Adam(tensors, lr=config.learning_rate,
               clip_norm=config.clip_grad_norm)
    shuffle_rng = random.Random(config.seed)

    fixed = config.alf.kind == "fixed"

    def weights_now():
        if fixed:
            return config.alf.weights
        return normalized_task_weights(sigma)

    last_good = _snapshot(model, sigma)
    epoch_stats = []
    global_step = 0
    with open(trajectory_path, "w", encoding="utf-8", newline="") as traj:
        traj.write(",".join(TRAJECTORY_COLUMNS) + "\n")
        for epoch in range(1, config.epochs + 1):
            order = list(range(len(instances)))
            shuffle_rng.shuffle(order)
            sums = {"L_p": 0.0, "L_a": 0.0, "L_o": 0.0, "combined": 0.0}
            nsteps = 0
            for lo in range(0, len(order), config.batch_size):
                batch = [instances[i] for i in order[lo:lo + config.batch_size]]
                pre_step = _snapshot(model, sigma)

                def log_row(losses, value):
                    nonlocal nsteps
                    w = weights_now()
                    s2 = None if fixed else sigma.sigma2()
                    lp, la, lo_ = (losses.L_p.item(), losses.L_a.item(),
                                   losses.L_o.item())
                    traj.write(_csv_row(global_step, w, s2, lp, la, lo_))
                    sums["L_p"] += lp
                    sums["L_a"] += la
                    sums["L_o"] += lo_
                    sums["combined"] += value
                    nsteps += 1

                value = step(batch, model, sigma, config, opt,
                             on_losses=log_row)
                if not math.isfinite(value):
                    _restore(model, sigma, last_good)
                    save_checkpoint(model, sigma, config, checkpoint_path)
                    raise TrainDivergence(
                        f"combined loss became {value} at step {global_step}; "
                        f"last-good checkpoint at {checkpoint_path}",
                        checkpoint_path,
                    )
                last_good = pre_step
                global_step += 1
            stats = EpochStats(
                epoch=epoch,
                mean_L_p=sums["L_p"] / nsteps,
                mean_L_a=sums["L_a"] / nsteps,
                mean_L_o=sums["L_o"] / nsteps,
                mean_combined=sums["combined"] / nsteps,
                weights=weights_now(),
            )
            line = (f"EPOCH {epoch}: L_p={stats.mean_L_p:.6f} "
                    f"L_a={stats.mean_L_a:.6f} L_o={stats.mean_L_o:.6f} "
                    f"combined={stats.mean_combined:.6f} "
                    f"w=({stats.weights[0]:.4f},{stats.weights[1]:.4f},"
                    f"{stats.weights[2]:.4f})")
            if dev is not None and len(dev) > 0:
                res = evaluate(model, dev)
                stats.dev_accuracy = res.all_accuracy
                stats.dev_macro_f1 = res.all_macro_f1
                line += (f" dev_acc={res.all_accuracy:.4f}"
                         f" dev_f1={res.all_macro_f1:.4f}")
            print(line, flush=True)
            epoch_stats.append(stats)

    save_checkpoint(model, sigma, config, checkpoint_path)
    return TrainReport(
        epochs=epoch_stats,
        checkpoint_path=checkpoint_path,
        trajectory_path=trajectory_path,
        clip_events=opt.clip_count,
        param_count=model.param_count,
    )


def _payload_bytes(payload):
    return json.dumps(payload, sort_keys=True, ensure_ascii=False,
                      separators=(",", ":")).encode("utf-8")


def save_checkpoint(model, sigma, config, path):
    cfg = config_to_dict(config)
    payload = {
        "version": CHECKPOINT_VERSION,
        "vocab": model.vocab.to_list(),
        "dim": model.dim,
        "seed": model.seed,
        "config": cfg,
        "config_hash": hashlib.sha256(_payload_bytes(cfg)).hexdigest(),
        "params": {name: list(t.data) for name, t in model.parameters()},
        "sigma": sigma.values(),
    }
    digest = hashlib.sha256(_payload_bytes(payload)).hexdigest()
    blob = json.dumps({"checksum": digest, "payload": payload},
                      sort_keys=True, ensure_ascii=False,
                      separators=(",", ":"))
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(blob + "\n")


def load_checkpoint(path, trainable=False):
    """Restore (model, sigma, config); eval mode allocates no grad buffers."""
    with open(path, encoding="utf-8") as f:
        obj = json.load(f)
    payload = obj.get("payload")
    if payload is None or "checksum" not in obj:
        raise ValueError(f"{path}: not a checkpoint file")
    digest = hashlib.sha256(_payload_bytes(payload)).hexdigest()
    if digest != obj["checksum"]:
        raise ValueError(f"{path}: checksum mismatch, file corrupt")
    version = payload.get("version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(
            f"{path}: checkpoint version {version} unsupported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    vocab = Vocabulary(payload["vocab"])
    model = ToyModel(vocab, dim=payload["dim"], seed=payload["seed"],
                     trainable=trainable)
    for name, t in model.parameters():
        vals = payload["params"][name]
        if len(vals) != t.numel:
            raise ValueError(f"{path}: parameter {name} has wrong size")
        t.data[:] = array("d", vals)
    sigma = SigmaParams()
    sigma.load_values(payload["sigma"])
    for _, t in sigma.tensors():
        t.requires_grad = trainable
    return model, sigma, config_from_dict(payload["config"])
