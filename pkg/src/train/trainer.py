# src/train/trainer.py

from __future__ import annotations

import logging
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, TextIO

import torch

from src.errors import ConfigError, MetricsError, TrainingDivergedError
from src.etl.corpus.corpus_loader import Corpus, Mashup
from src.etl.corpus.corpus_split import SplitCorpus
from src.metrics.report import evaluate
from src.model.checkpoint import Checkpoint, apply_encoder_weights, load_pretrained_encoder
from src.model.encoder import EncoderConfig
from src.model.filter_head import FilterModel
from src.model.matcher_head import MATCH_MODES, MatcherModel
from src.model.tokenizer import Vocab, encode_single, to_tensors
from src.pipeline.evaluation import filter_judgments, pipeline_judgments
from src.pipeline.recommender import HIERARCHICAL, AblationVariant, ModelBundle, PipelineConfig
from src.train.pair_sampler import epoch_rng, sample_pairs

logger = logging.getLogger(__name__)

TASKS = ("filter-api", "filter-category", "matcher")
BCE_EPS = 1e-7
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
SELECTION_N = 5

# task 별 (epochs, LR 전환 epoch)
_TASK_DEFAULTS = {
    "filter-api": (15, 6),
    "filter-category": (15, 6),
    "matcher": (20, 16),
}


@dataclass(frozen=True)
class TrainConfig:
    task: str
    epochs: int
    phase_boundary: int
    lr_high: float = 1e-3
    lr_low: float = 1e-5
    batch_size: int = 32
    negatives: int = 5
    patience: int = 3
    seed: int = 17
    max_len: int = 256
    # 인코더 모양 (BERT-Tiny)
    num_layers: int = 2
    hidden_size: int = 128
    num_heads: int = 2
    intermediate_size: int = 512
    dropout: float = 0.1
    # ablation 토글
    use_pooler: bool = True
    use_mean: bool = True
    matcher_mode: str = "cross"
    # matcher 검증용 pipeline 설정
    candidate_count: int = 45
    fusion_weight: float = 0.6
    pretrained_path: Optional[str] = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"알 수 없는 task: {self.task} (가능: {TASKS})")
        if self.epochs < 1:
            raise ConfigError(f"epochs 는 1 이상이어야 합니다: {self.epochs}")
        if not 0 <= self.phase_boundary < self.epochs:
            raise ConfigError(
                f"phase_boundary({self.phase_boundary})는 0 이상 epochs({self.epochs}) 미만이어야 합니다."
            )
        if not self.lr_high > self.lr_low > 0:
            raise ConfigError(f"lr_high > lr_low > 0 이어야 합니다: {self.lr_high}, {self.lr_low}")
        if self.negatives < 1:
            raise ConfigError(f"negatives(k)는 1 이상이어야 합니다: {self.negatives}")
        if self.batch_size < 1 or self.patience < 1:
            raise ConfigError("batch_size, patience 는 1 이상이어야 합니다.")
        if not (self.use_pooler or self.use_mean):
            raise ConfigError("use_pooler / use_mean 중 하나는 켜져 있어야 합니다.")
        if self.matcher_mode not in MATCH_MODES:
            raise ConfigError(f"알 수 없는 matcher mode: {self.matcher_mode}")

    @classmethod
    def for_task(cls, task: str, **overrides: Any) -> "TrainConfig":
        if task not in _TASK_DEFAULTS:
            raise ConfigError(f"알 수 없는 task: {task} (가능: {TASKS})")
        epochs, boundary = _TASK_DEFAULTS[task]
        values: Dict[str, Any] = {"task": task, "epochs": epochs, "phase_boundary": boundary}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def encoder_config(self, vocab_size: int) -> EncoderConfig:
        return EncoderConfig(
            vocab_size=vocab_size,
            num_layers=self.num_layers,
            hidden_size=self.hidden_size,
            num_heads=self.num_heads,
            intermediate_size=self.intermediate_size,
            max_positions=self.max_len,
            dropout=self.dropout,
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_ndcg: float


@dataclass
class TrainHistory:
    records: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_metric: float = -math.inf
    stopped_early: bool = False


def bce_loss(pred, target) -> torch.Tensor:
    """mean(−[t·ln p + (1−t)·ln(1−p)]), p 는 [ε, 1−ε] 로 자른다."""
    pred = torch.as_tensor(pred, dtype=torch.get_default_dtype()) if not torch.is_tensor(pred) else pred
    target = torch.as_tensor(target, dtype=pred.dtype) if not torch.is_tensor(target) else target.to(pred.dtype)
    if pred.shape != target.shape:
        raise ValueError(f"pred{tuple(pred.shape)} 와 target{tuple(target.shape)} 모양이 다릅니다.")
    p = pred.clamp(BCE_EPS, 1.0 - BCE_EPS)
    return -(target * torch.log(p) + (1.0 - target) * torch.log(1.0 - p)).mean()


def lr_schedule(epoch: int, config: TrainConfig) -> float:
    return config.lr_high if epoch < config.phase_boundary else config.lr_low


def make_optimizer(params, lr: float) -> torch.optim.Optimizer:
    return torch.optim.Adam(params, lr=lr, betas=ADAM_BETAS, eps=ADAM_EPS)


def _set_lr(optimizer: torch.optim.Optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr


def _check_finite(loss: torch.Tensor, epoch: int, step: int) -> None:
    if not bool(torch.isfinite(loss)):
        raise TrainingDivergedError(
            f"loss 가 발산했습니다 (epoch={epoch}, step={step}, loss={loss.item()})."
        )


def _snapshot(model: torch.nn.Module) -> "OrderedDict[str, torch.Tensor]":
    return OrderedDict((k, v.detach().clone()) for k, v in model.state_dict().items())


def _open_log(path: Optional[Path]) -> Optional[TextIO]:
    if path is None:
        return None
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    f = path.open("w", encoding="utf-8")
    f.write("epoch\tlr\ttrain_loss\tval_ndcg@5\n")
    return f


def _record_epoch(
    history: TrainHistory, record: EpochRecord, log_file: Optional[TextIO]
) -> None:
    history.records.append(record)
    line = f"{record.epoch}\t{record.lr:.0e}\t{record.train_loss:.6f}\t{record.val_ndcg:.6f}"
    if log_file is not None:
        log_file.write(line + "\n")
        log_file.flush()
    logger.info(f"[epoch] {line}")


class _EarlyStopping:
    """
    검증 지표가 patience 번 연속 나아지지 않으면 멈춘다. 최고 시점의 가중치를 들고 있는다.
    동점이면 더 뒤 epoch 의 가중치로 바꾸되, 개선으로 세지는 않는다.
    (지표가 평평해도 epoch 0 가중치가 남지 않게)
    """

    def __init__(self, patience: int):
        self.patience = patience
        self.bad_epochs = 0
        self.best_state: Optional["OrderedDict[str, torch.Tensor]"] = None

    def update(self, model: torch.nn.Module, history: TrainHistory, epoch: int, metric: float) -> bool:
        if metric > history.best_metric:
            history.best_metric = metric
            history.best_epoch = epoch
            self.best_state = _snapshot(model)
            self.bad_epochs = 0
        else:
            if metric == history.best_metric:
                history.best_epoch = epoch
                self.best_state = _snapshot(model)
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def _init_model(model: torch.nn.Module, config: TrainConfig) -> None:
    torch.manual_seed(config.seed)
    model.reset_parameters(config.seed)
    if config.pretrained_path:
        apply_encoder_weights(model, load_pretrained_encoder(Path(config.pretrained_path)))


def _validation_set(split: SplitCorpus) -> Sequence[Mashup]:
    if split.validation:
        return split.validation
    logger.warning("validation split 이 비어 train split 으로 모델을 고릅니다.")
    return split.train


def _checkpoint_meta(
    config: TrainConfig, history: TrainHistory, corpus: Corpus, vocab: Vocab
) -> Dict[str, Any]:
    return {
        "train_config": config.to_dict(),
        "seed": config.seed,
        "max_len": config.max_len,
        "num_apis": corpus.num_apis,
        "num_categories": corpus.num_categories,
        "vocab_size": len(vocab),
        "best_epoch": history.best_epoch,
        "best_val_ndcg@5": history.best_metric,
        "stopped_early": history.stopped_early,
        "history": [asdict(r) for r in history.records],
    }


def train_filter(
    corpus: Corpus,
    split: SplitCorpus,
    vocab: Vocab,
    config: TrainConfig,
    log_path: Optional[Path] = None,
) -> Checkpoint:
    """
    multi-hot 타깃에 대한 BCE 로 filter(API 또는 category) 를 학습한다.
    epoch 마다 validation NDCG@5 를 재고 가장 좋았던 epoch 의 가중치를 돌려준다.
    """
    if config.task not in ("filter-api", "filter-category"):
        raise ConfigError(f"train_filter 에는 filter task 가 필요합니다: {config.task}")
    if not split.train:
        raise MetricsError("train split 이 비어 있습니다.")

    if config.task == "filter-api":
        num_labels = corpus.num_apis
        labels_of = lambda m: m.called_apis  # noqa: E731
    else:
        num_labels = corpus.num_categories
        labels_of = lambda m: m.categories  # noqa: E731
    if num_labels == 0:
        raise ConfigError(f"{config.task}: 라벨 공간이 비어 있습니다.")

    model = FilterModel(
        config.encoder_config(len(vocab)),
        num_labels=num_labels,
        task=config.task,
        use_pooler=config.use_pooler,
        use_mean=config.use_mean,
    )
    _init_model(model, config)

    train = list(split.train)
    ids, seg, mask = to_tensors([encode_single(m.description, vocab, config.max_len) for m in train])
    targets = torch.zeros(len(train), num_labels)
    for row, m in enumerate(train):
        for label in labels_of(m):
            targets[row, label] = 1.0

    validation = _validation_set(split)
    selection_n = min(SELECTION_N, num_labels)
    optimizer = make_optimizer(model.parameters(), lr_schedule(0, config))
    history = TrainHistory()
    stopper = _EarlyStopping(config.patience)
    log_file = _open_log(log_path)

    logger.info(
        f"{config.task} 학습 시작: train={len(train)}, labels={num_labels}, "
        f"epochs={config.epochs}, boundary={config.phase_boundary}, seed={config.seed}"
    )
    try:
        for epoch in range(config.epochs):
            lr = lr_schedule(epoch, config)
            _set_lr(optimizer, lr)
            model.train()
            order = epoch_rng(config.seed, epoch).permutation(len(train))

            total, seen = 0.0, 0
            for step, start in enumerate(range(0, len(train), config.batch_size)):
                idx = torch.as_tensor(order[start : start + config.batch_size], dtype=torch.long)
                probs = torch.sigmoid(model(ids[idx], seg[idx], mask[idx]))
                loss = bce_loss(probs, targets[idx])
                _check_finite(loss, epoch, step)

                optimizer.zero_grad()
                loss.backward()
                optimizer.step()

                total += loss.item() * len(idx)
                seen += len(idx)

            judgments = filter_judgments(
                model, validation, vocab, config.max_len, selection_n, labels=labels_of
            )
            metric = evaluate(judgments, (selection_n,)).get("ndcg", selection_n) if judgments else 0.0
            _record_epoch(history, EpochRecord(epoch, lr, total / seen, metric), log_file)

            if stopper.update(model, history, epoch, metric):
                history.stopped_early = True
                logger.info(f"early stopping: epoch={epoch}, best_epoch={history.best_epoch}")
                break
    finally:
        if log_file is not None:
            log_file.close()

    model.load_state_dict(stopper.best_state)
    model.eval()
    logger.info(f"{config.task} 학습 완료: best_epoch={history.best_epoch}, NDCG@5={history.best_metric:.4f}")
    return model.to_checkpoint(_checkpoint_meta(config, history, corpus, vocab))


def train_matcher(
    corpus: Corpus,
    split: SplitCorpus,
    vocab: Vocab,
    config: TrainConfig,
    filter_model: FilterModel,
    filter_max_len: Optional[int] = None,
    log_path: Optional[Path] = None,
) -> Checkpoint:
    """
    샘플링한 (매시업, API) 쌍으로 cross-encoder 를 학습한다.
    모델 선택은 filter 후보 위에서 hierarchical pipeline 을 돌린 validation NDCG@5.
    """
    if config.task != "matcher":
        raise ConfigError(f"train_matcher 에는 matcher task 가 필요합니다: {config.task}")
    if not split.train:
        raise MetricsError("train split 이 비어 있습니다.")

    model = MatcherModel(config.encoder_config(len(vocab)), mode=config.matcher_mode)
    _init_model(model, config)

    mashup_by_id = {m.id: m for m in split.train}
    validation = _validation_set(split)
    h = min(config.candidate_count, corpus.num_apis)
    pipeline_config = PipelineConfig(
        candidate_count=h,
        fusion_weight=config.fusion_weight,
        top_n=min(SELECTION_N, h),
        mode=HIERARCHICAL,
    )
    bundle = ModelBundle(
        corpus=corpus,
        vocab=vocab,
        filter_model=filter_model,
        matcher_model=model,
        filter_max_len=filter_max_len or config.max_len,
        matcher_max_len=config.max_len,
    )

    optimizer = make_optimizer(model.parameters(), lr_schedule(0, config))
    history = TrainHistory()
    stopper = _EarlyStopping(config.patience)
    log_file = _open_log(log_path)

    logger.info(
        f"matcher 학습 시작: train={len(mashup_by_id)}, k={config.negatives}, H={h}, "
        f"λ={config.fusion_weight}, mode={config.matcher_mode}, seed={config.seed}"
    )
    try:
        for epoch in range(config.epochs):
            lr = lr_schedule(epoch, config)
            _set_lr(optimizer, lr)
            model.train()
            batches = sample_pairs(
                split.train, corpus.num_apis, config.negatives, config.seed, epoch, config.batch_size
            )

            total, seen = 0.0, 0
            for step, batch in enumerate(batches):
                m_texts = [mashup_by_id[m].description for m, _, _ in batch.pairs]
                a_texts = [corpus.api_description(a) for _, a, _ in batch.pairs]
                probs = torch.sigmoid(model.pair_logits(m_texts, a_texts, vocab, config.max_len))
                loss = bce_loss(probs, torch.tensor(batch.labels, dtype=probs.dtype))
                _check_finite(loss, epoch, step)

                optimizer.zero_grad()
                loss.backward()
                optimizer.step()

                total += loss.item() * len(batch)
                seen += len(batch)

            model.eval()
            judgments = pipeline_judgments(bundle, validation, pipeline_config)
            metric = evaluate(judgments, (pipeline_config.top_n,)).get("ndcg", pipeline_config.top_n)
            _record_epoch(history, EpochRecord(epoch, lr, total / max(seen, 1), metric), log_file)

            if stopper.update(model, history, epoch, metric):
                history.stopped_early = True
                logger.info(f"early stopping: epoch={epoch}, best_epoch={history.best_epoch}")
                break
    finally:
        if log_file is not None:
            log_file.close()

    model.load_state_dict(stopper.best_state)
    model.eval()
    logger.info(f"matcher 학습 완료: best_epoch={history.best_epoch}, NDCG@5={history.best_metric:.4f}")
    return model.to_checkpoint(_checkpoint_meta(config, history, corpus, vocab))


def with_variant(config: TrainConfig, variant: AblationVariant) -> TrainConfig:
    """ablation variant 의 head 토글을 학습 설정에 얹는다. pipeline mode 는 평가 시점에 쓴다."""
    return replace(
        config,
        use_pooler=variant.use_pooler,
        use_mean=variant.use_mean,
        matcher_mode=variant.matcher_mode,
    )
