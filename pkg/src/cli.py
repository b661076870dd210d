# src/cli.py

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence

import pandas as pd

from src.api.recommend_client import RecommendClient
from src.api.service import serve
from src.db.connection import get_engine
from src.db.results_store import upsert_results
from src.errors import AppError, ConfigError
from src.etl.corpus.corpus_loader import Corpus, corpus_statistics, load_corpus
from src.etl.corpus.corpus_split import (
    SPLIT_NAMES,
    SplitCorpus,
    load_split_manifest,
    split,
    write_split_manifest,
)
from src.etl.corpus.text_normalizer import TextNormalizer
from src.metrics.report import report_table, write_table
from src.model.checkpoint import load_checkpoint, save_checkpoint
from src.model.filter_head import FilterModel
from src.model.tokenizer import Vocab, build_vocab
from src.pipeline.evaluation import DEFAULT_MODES, evaluate_categories, evaluate_modes
from src.pipeline.recommender import (
    ABLATION_VARIANTS,
    FILTER_ONLY,
    PIPELINE_MODES,
    AblationVariant,
    ModelBundle,
    get_variant,
    load_bundle,
    predict_categories,
    recommend,
)
from src.pipeline.sweep import DEFAULT_HS, DEFAULT_LAMBDAS, plot_sweep, run_sweep
from src.settings import AppConfig, load_app_config, setup_logging
from src.train.trainer import TASKS, TrainConfig, train_filter, train_matcher, with_variant

logger = logging.getLogger(__name__)


# ----------------------------------------
# 공통 로딩
# ----------------------------------------


def _load_corpus(cfg: AppConfig) -> Corpus:
    normalizer = None
    if cfg.abbrev_path or cfg.lemma_path:
        normalizer = TextNormalizer.from_files(cfg.abbrev_path, cfg.lemma_path)
    return load_corpus(cfg.data_dir, normalizer)


def _load_split(cfg: AppConfig, corpus: Corpus) -> SplitCorpus:
    if not cfg.split_manifest.exists():
        raise ConfigError(f"split manifest 가 없습니다. 먼저 ingest 를 실행하세요: {cfg.split_manifest}")
    return load_split_manifest(corpus, cfg.split_manifest)


def _load_bundle(cfg: AppConfig, corpus: Corpus, need_matcher: bool = True) -> ModelBundle:
    cfg.require("vocab_path", "filter_checkpoint")
    if need_matcher:
        cfg.require("matcher_checkpoint")
    matcher = cfg.matcher_checkpoint if Path(cfg.matcher_checkpoint).exists() else None
    category = cfg.category_checkpoint if Path(cfg.category_checkpoint).exists() else None
    return load_bundle(corpus, Vocab.from_file(cfg.vocab_path), cfg.filter_checkpoint, matcher, category)


def _print_summary(title: str, values: Dict[str, object]) -> None:
    print(f"[SUMMARY] {title}")
    for key, value in values.items():
        if isinstance(value, float):
            value = f"{value:.4f}"
        print(f"  {key}: {value}")


# ----------------------------------------
# 명령들
# ----------------------------------------


def cmd_ingest(args: argparse.Namespace, cfg: AppConfig) -> int:
    corpus = _load_corpus(cfg)
    split_corpus = split(corpus, cfg.split_ratios, cfg.seed)
    manifest = write_split_manifest(split_corpus, cfg.split_manifest, cfg.seed, cfg.split_ratios)
    logger.info(f"split manifest 저장: {manifest}")

    if args.build_vocab:
        texts = [a.description for a in corpus.apis] + [m.description for m in corpus.mashups]
        vocab = build_vocab(texts, min_count=args.min_count)
        out = vocab.save(Path(cfg.work_dir) / "vocab.txt")
        logger.info(f"vocab 생성: {out} (size={len(vocab)})")

    stats = corpus_statistics(corpus)
    stats.update({name: len(split_corpus.part(name)) for name in SPLIT_NAMES})
    _print_summary(f"corpus {cfg.data_dir}", stats)
    return 0


def _train_config(args: argparse.Namespace, cfg: AppConfig) -> TrainConfig:
    overrides = dict(cfg.train_overrides)
    overrides.update(
        seed=cfg.seed,
        max_len=cfg.max_len,
        candidate_count=cfg.pipeline.candidate_count,
        fusion_weight=cfg.pipeline.fusion_weight,
    )
    for name in ("epochs", "phase_boundary", "batch_size", "negatives", "patience", "pretrained_path"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    config = TrainConfig.for_task(args.task, **overrides)
    if args.variant:
        config = with_variant(config, get_variant(args.variant))
    return config


def cmd_train(args: argparse.Namespace, cfg: AppConfig) -> int:
    cfg.require("vocab_path")
    corpus = _load_corpus(cfg)
    split_corpus = _load_split(cfg, corpus)
    vocab = Vocab.from_file(cfg.vocab_path)
    config = _train_config(args, cfg)
    log_path = Path(cfg.work_dir) / f"train_{args.task}.log"

    if args.task == "matcher":
        cfg.require("filter_checkpoint")
        filter_ckpt = load_checkpoint(cfg.filter_checkpoint)
        checkpoint = train_matcher(
            corpus,
            split_corpus,
            vocab,
            config,
            FilterModel.from_checkpoint(filter_ckpt),
            filter_max_len=filter_ckpt.metadata.get("max_len"),
            log_path=log_path,
        )
        out = cfg.matcher_checkpoint
    else:
        checkpoint = train_filter(corpus, split_corpus, vocab, config, log_path=log_path)
        out = cfg.filter_checkpoint if args.task == "filter-api" else cfg.category_checkpoint

    save_checkpoint(checkpoint, out)
    print(out)
    return 0


def _store(df: pd.DataFrame, cfg: AppConfig, kind: str) -> None:
    upsert_results(df, cfg.run_id, kind, engine=get_engine(url=cfg.db_url))


def _check_variant(bundle: ModelBundle, variant: AblationVariant) -> None:
    """평가할 variant 와 체크포인트의 head 토글이 같은지 확인한다."""
    head = bundle.filter_model.filter
    if (head.use_pooler, head.use_mean) != (variant.use_pooler, variant.use_mean):
        raise ConfigError(
            f"filter 체크포인트(use_pooler={head.use_pooler}, use_mean={head.use_mean})가 "
            f"variant {variant.name} 와 다릅니다. train --variant {variant.name} 로 다시 학습하세요."
        )
    matcher = bundle.matcher_model
    if variant.mode != FILTER_ONLY and matcher is not None and matcher.mode != variant.matcher_mode:
        raise ConfigError(
            f"matcher 체크포인트(mode={matcher.mode})가 variant {variant.name} "
            f"(mode={variant.matcher_mode}) 와 다릅니다."
        )


def cmd_evaluate(args: argparse.Namespace, cfg: AppConfig) -> int:
    corpus = _load_corpus(cfg)
    mashups = _load_split(cfg, corpus).part(args.split)
    variant = get_variant(args.variant) if args.variant else None
    if variant is not None:
        if args.mode and args.mode != variant.mode:
            raise ConfigError(f"--mode {args.mode} 와 variant {variant.name} 의 mode({variant.mode})가 다릅니다.")
        modes = (variant.mode,)
    else:
        modes = (args.mode,) if args.mode else DEFAULT_MODES
    bundle = _load_bundle(cfg, corpus, need_matcher=any(m != FILTER_ONLY for m in modes))
    if variant is not None:
        _check_variant(bundle, variant)

    reports = evaluate_modes(bundle, mashups, cfg.pipeline, modes, strict_idcg=args.strict_idcg)
    if variant is not None:
        # ablation 표에서는 mode 대신 variant 이름으로 행을 남긴다
        reports = {variant.name: reports[variant.mode]}
    if args.categories:
        reports["category"] = evaluate_categories(bundle, mashups, strict_idcg=args.strict_idcg)

    df = report_table(reports)
    suffix = f"_{variant.name}" if variant is not None else ""
    out = write_table(df, Path(cfg.work_dir) / f"evaluate_{args.split}{suffix}.tsv")
    if args.store:
        _store(df, cfg, "evaluate")

    for name, report in reports.items():
        _print_summary(f"{name} ({args.split}, queries={report.query_count})", report.as_row())
    print(out)
    return 0


def cmd_sweep(args: argparse.Namespace, cfg: AppConfig) -> int:
    corpus = _load_corpus(cfg)
    mashups = _load_split(cfg, corpus).part(args.split)
    bundle = _load_bundle(cfg, corpus)

    df = run_sweep(bundle, mashups, hs=args.hs, lambdas=args.lambdas)
    out = write_table(df, Path(cfg.work_dir) / f"sweep_{args.split}.tsv")
    if args.plot:
        plot_sweep(df, Path(cfg.work_dir) / "figures")
    if args.store:
        _store(df, cfg, "sweep")
    print(out)
    return 0


def cmd_recommend(args: argparse.Namespace, cfg: AppConfig) -> int:
    if args.server:
        data = RecommendClient(args.server).recommend(
            args.description,
            top_n=args.top_n,
            h=args.h,
            fusion_weight=args.fusion_weight,
        )
        for rank, item in enumerate(data["recommendations"], start=1):
            print(f"{rank}\t{item['api_name']}\t{item['score']:.6f}")
        return 0

    corpus = _load_corpus(cfg)
    bundle = _load_bundle(cfg, corpus, need_matcher=cfg.pipeline.mode != FILTER_ONLY)
    rec = recommend(args.description, cfg.pipeline, bundle)
    for rank, item in enumerate(rec.items, start=1):
        matcher = "-" if item.matcher_score is None else f"{item.matcher_score:.6f}"
        print(f"{rank}\t{item.api_name}\t{item.score:.6f}\t{item.filter_score:.6f}\t{matcher}")
    if args.categories:
        for cat_id, score in predict_categories(args.description, bundle, cfg.pipeline.top_n):
            print(f"category\t{corpus.categories[cat_id]}\t{score:.6f}")
    return 0


def cmd_serve(args: argparse.Namespace, cfg: AppConfig) -> int:
    corpus = _load_corpus(cfg)
    bundle = _load_bundle(cfg, corpus, need_matcher=cfg.pipeline.mode != FILTER_ONLY)
    serve(bundle, cfg.pipeline, cfg.serve_host, cfg.serve_port)
    return 0


# ----------------------------------------
# argparse
# ----------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="KEY=VALUE 설정 파일 (기본: APP_CONFIG)")
    common.add_argument("--run-id", help="실행 ID (data/processed/<run_id>)")
    common.add_argument("--seed", type=int)
    common.add_argument("--h", type=int, help="후보 수 H")
    common.add_argument("--lambda", dest="fusion_weight", type=float, help="fusion 가중치 λ")
    common.add_argument("--top-n", type=int, help="추천 수 N")
    common.add_argument("--mode", choices=PIPELINE_MODES)
    common.add_argument("--log-level", default="INFO")

    parser = argparse.ArgumentParser(description="계층형 Web API 추천 (filter → matcher)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="코퍼스 검증 + split manifest")
    p.add_argument("--build-vocab", action="store_true", help="코퍼스 단어로 vocab.txt 생성")
    p.add_argument("--min-count", type=int, default=1)
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("train", parents=[common], help="filter / category / matcher 학습")
    p.add_argument("task", choices=TASKS)
    p.add_argument("--variant", choices=sorted(ABLATION_VARIANTS))
    p.add_argument("--epochs", type=int)
    p.add_argument("--phase-boundary", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--negatives", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--pretrained", dest="pretrained_path", help="BERT-Tiny 가중치 (.bin / .ckpt)")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="모드별 P/R/NDCG/MAP 표")
    p.add_argument("--split", choices=SPLIT_NAMES, default="test")
    p.add_argument("--strict-idcg", action="store_true")
    p.add_argument("--variant", choices=sorted(ABLATION_VARIANTS), help="ablation variant 하나만 그 mode 로 평가")
    p.add_argument("--categories", action="store_true", help="category head 평가도 함께")
    p.add_argument("--store", action="store_true", help="결과를 DB 에도 저장")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("sweep", parents=[common], help="(H, λ) 격자 평가")
    p.add_argument("--hs", type=int, nargs="+", default=list(DEFAULT_HS))
    p.add_argument("--lambdas", type=float, nargs="+", default=list(DEFAULT_LAMBDAS))
    p.add_argument("--split", choices=SPLIT_NAMES, default="test")
    p.add_argument("--plot", action="store_true")
    p.add_argument("--store", action="store_true")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("recommend", parents=[common], help="질의 하나 추천")
    p.add_argument("description")
    p.add_argument("--server", help="실행 중인 서비스 주소 (예: http://127.0.0.1:8000)")
    p.add_argument("--categories", action="store_true")
    p.set_defaults(handler=cmd_recommend)

    p = sub.add_parser("serve", parents=[common], help="HTTP 서비스")
    p.set_defaults(handler=cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)

    handler: Callable[[argparse.Namespace, AppConfig], int] = args.handler
    try:
        cfg = load_app_config(args.config).with_overrides(
            seed=args.seed,
            run_id=args.run_id,
            candidate_count=args.h,
            fusion_weight=args.fusion_weight,
            top_n=args.top_n,
            mode=args.mode,
        )
        return handler(args, cfg)
    except AppError as e:
        logger.error(str(e))
        return 1


if __name__ == "__main__":
    sys.exit(main())
