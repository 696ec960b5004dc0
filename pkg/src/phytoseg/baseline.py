"""Supervised U-Net baseline: training recipe, subset scaling runs and
crossover detection against the zero-shot score.

Training follows a fixed recipe: Adam at 1e-3, batch size 8, at most 100
epochs, early stopping with patience 5 on the monitored loss (validation
loss when a validation set is supplied, else training loss), per-pixel
binary cross-entropy. Subsets are sampled uniformly without replacement and
every random choice is reproducible from the seeds in the config.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from . import metrics
from .unet import UNet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 8
    max_epochs: int = 100
    early_stop_patience: int = 5
    subset_size: int | None = None
    repetition_seed: int = 0
    base_width: int = 64
    threshold: float = 0.5
    device: str = "cpu"

    def __post_init__(self):
        if self.subset_size is not None and self.subset_size < 1:
            raise ValueError("subset_size must be >= 1")
        if self.early_stop_patience >= self.max_epochs:
            raise ValueError("patience must be smaller than max_epochs")


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float | None
    monitored: float
    best_so_far: bool


@dataclass
class TrainResult:
    model: UNet
    config: TrainConfig
    epoch_logs: list[EpochLog]
    best_epoch: int
    stopped_early: bool
    subset_indices: list[int]
    train_seconds: float

    @property
    def epochs_run(self) -> int:
        return len(self.epoch_logs)


class EarlyStopper:
    """Stop once the monitored loss has not improved for `patience` epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = float("inf")
        self.best_epoch = -1
        self.since_best = 0

    def update(self, epoch: int, loss: float) -> bool:
        """Record one epoch; returns True when training should stop."""
        if loss < self.best:
            self.best = loss
            self.best_epoch = epoch
            self.since_best = 0
        else:
            self.since_best += 1
        return self.since_best >= self.patience


def sample_subset(n_available: int, subset_size: int, seed: int) -> list[int]:
    """Uniform sample without replacement, reproducible from the seed."""
    if subset_size > n_available:
        raise ValueError(
            f"subset size {subset_size} exceeds available records {n_available}"
        )
    rng = np.random.default_rng(seed)
    idx = rng.choice(n_available, size=subset_size, replace=False)
    return sorted(int(i) for i in idx)


def _to_batch(images: list[np.ndarray], masks: list[np.ndarray] | None = None):
    shapes = {img.shape[:2] for img in images}
    if len(shapes) != 1:
        raise ValueError(
            f"training batch requires uniformly sized images, got {sorted(shapes)}"
        )
    x = torch.from_numpy(np.stack(images)).permute(0, 3, 1, 2).float() / 255.0
    if masks is None:
        return x, None
    y = torch.from_numpy(np.stack(masks)).unsqueeze(1).float()
    return x, y


def train(
    train_pairs: list[tuple[np.ndarray, np.ndarray]],
    val_pairs: list[tuple[np.ndarray, np.ndarray]] | None = None,
    config: TrainConfig | None = None,
) -> TrainResult:
    """Train a U-Net from scratch on (image, mask) pairs.

    When ``config.subset_size`` is set, that many training pairs are drawn
    (seeded, without replacement) before training. The best-epoch weights by
    the monitored loss are restored at the end.
    """
    config = config or TrainConfig()
    if not train_pairs:
        raise ValueError("no training pairs")
    indices = list(range(len(train_pairs)))
    if config.subset_size is not None:
        indices = sample_subset(len(train_pairs), config.subset_size,
                                config.repetition_seed)
    chosen = [train_pairs[i] for i in indices]

    torch.manual_seed(config.repetition_seed)
    device = torch.device(config.device)
    model = UNet(base_width=config.base_width).to(device)
    optim = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    loss_fn = torch.nn.BCEWithLogitsLoss()

    x_train, y_train = _to_batch([p[0] for p in chosen], [p[1] for p in chosen])
    x_train = x_train.to(device)
    y_train = y_train.to(device)
    if val_pairs:
        x_val, y_val = _to_batch([p[0] for p in val_pairs],
                                 [p[1] for p in val_pairs])
        x_val = x_val.to(device)
        y_val = y_val.to(device)

    shuffler = torch.Generator().manual_seed(config.repetition_seed)
    stopper = EarlyStopper(config.early_stop_patience)
    logs: list[EpochLog] = []
    best_state = None
    started = time.monotonic()

    for epoch in range(config.max_epochs):
        model.train()
        perm = torch.randperm(len(chosen), generator=shuffler)
        total = 0.0
        for start in range(0, len(chosen), config.batch_size):
            batch = perm[start:start + config.batch_size]
            optim.zero_grad()
            logits = model(x_train[batch])
            loss = loss_fn(logits, y_train[batch])
            loss.backward()
            optim.step()
            total += float(loss.detach()) * len(batch)
        train_loss = total / len(chosen)

        val_loss = None
        if val_pairs:
            model.eval()
            with torch.no_grad():
                chunks = [
                    float(loss_fn(model(x_val[i:i + config.batch_size]),
                                  y_val[i:i + config.batch_size]))
                    * len(x_val[i:i + config.batch_size])
                    for i in range(0, len(x_val), config.batch_size)
                ]
            val_loss = sum(chunks) / len(x_val)

        monitored = val_loss if val_loss is not None else train_loss
        stop = stopper.update(epoch, monitored)
        is_best = stopper.best_epoch == epoch
        logs.append(EpochLog(epoch=epoch, train_loss=train_loss,
                             val_loss=val_loss, monitored=monitored,
                             best_so_far=is_best))
        if is_best:
            best_state = {k: v.detach().clone()
                          for k, v in model.state_dict().items()}
        logger.debug("epoch %d train %.4f val %s", epoch, train_loss,
                     f"{val_loss:.4f}" if val_loss is not None else "-")
        if stop:
            break

    stopped_early = len(logs) < config.max_epochs
    if best_state is not None:
        model.load_state_dict(best_state)
    return TrainResult(model=model, config=config, epoch_logs=logs,
                       best_epoch=stopper.best_epoch,
                       stopped_early=stopped_early,
                       subset_indices=indices,
                       train_seconds=time.monotonic() - started)


def predict_mask(
    model: UNet, image: np.ndarray, threshold: float = 0.5, device: str = "cpu"
) -> np.ndarray:
    """Binary mask for one RGB image (network is fully convolutional)."""
    x, _ = _to_batch([image])
    model.eval()
    with torch.no_grad():
        logits = model(x.to(torch.device(device)))
    probs = torch.sigmoid(logits)[0, 0].cpu().numpy()
    return probs >= threshold


def evaluate_pairs(
    model: UNet,
    pairs: list[tuple[np.ndarray, np.ndarray]],
    threshold: float = 0.5,
    device: str = "cpu",
) -> list[float]:
    return [
        metrics.iou(predict_mask(model, img, threshold, device), gt).value
        for img, gt in pairs
    ]


@dataclass
class CurvePoint:
    """Aggregate of the repeated runs at one training-subset size."""

    subset_size: int
    repetitions: int
    mean_iou: float
    std_iou: float
    ious: list[float] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)
    epochs: list[int] = field(default_factory=list)


def scaling_experiment(
    train_pairs: list[tuple[np.ndarray, np.ndarray]],
    val_pairs: list[tuple[np.ndarray, np.ndarray]],
    sizes: list[int],
    repetitions: int = 5,
    config: TrainConfig | None = None,
    base_seed: int = 0,
    run_callback=None,
) -> list[CurvePoint]:
    """Train `repetitions` independently seeded models per subset size and
    score each on the validation pairs."""
    config = config or TrainConfig()
    points = []
    for size in sizes:
        ious, seeds, epochs = [], [], []
        for rep in range(repetitions):
            seed = base_seed * 100_003 + size * 1_009 + rep
            run_cfg = replace(config, subset_size=size, repetition_seed=seed)
            result = train(train_pairs, val_pairs, run_cfg)
            vals = evaluate_pairs(result.model, val_pairs,
                                  config.threshold, config.device)
            summary = metrics.aggregate(vals)
            ious.append(summary.mean)
            seeds.append(seed)
            epochs.append(result.epochs_run)
            if run_callback is not None:
                run_callback(size, rep, result, summary)
        agg = metrics.aggregate(ious)
        points.append(CurvePoint(subset_size=size, repetitions=repetitions,
                                 mean_iou=agg.mean, std_iou=agg.std,
                                 ious=ious, seeds=seeds, epochs=epochs))
        logger.info("scaling size=%d mean=%.4f std=%.4f", size, agg.mean, agg.std)
    return points


def crossover(points: list[CurvePoint], zero_shot_mean: float) -> int | None:
    """Smallest tested subset size whose mean IoU exceeds the zero-shot mean,
    or None when no tested size does."""
    for point in sorted(points, key=lambda p: p.subset_size):
        if point.mean_iou > zero_shot_mean:
            return point.subset_size
    return None
