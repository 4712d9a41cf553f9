"""Command-line entry point: ingest -> catalog -> recognize -> match ->
synthesize -> fuzz -> report, plus a one-shot pipeline command.

Exit codes: 0 success, 1 usage/validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import catalog as catalog_mod
from . import executor as executor_mod
from . import ingest as ingest_mod
from . import matcher as matcher_mod
from . import recognizer as recognizer_mod
from . import synthesizer as synthesizer_mod
from .config import Config, ConfigError, load_config, load_keywords
from .llm import make_client
from .sandbox import RunnerClient
from .store import Store

logger = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); we want exit(1)
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="mirrorfuzz", description=__doc__)
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="collect issues and keep bug-related ones")
    p.add_argument("--repo", required=True, help="owner/name repository coordinate")
    p.add_argument("--out", required=True)
    p.add_argument("--fixtures", help="directory of *.json issue fixtures (bypasses network)")
    p.add_argument("--keywords", help="file with one keyword phrase per line")
    p.add_argument("--framework", help="framework label (default: repo name)")
    p.add_argument("--page-limit", type=int, default=None)
    p.add_argument("--token", help="tracker token (default: MF_TRACKER_TOKEN env)")

    p = sub.add_parser("catalog", help="normalize an API metadata dump")
    p.add_argument("--framework", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("recognize", help="extract bug records from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=recognizer_mod.VARIANTS, default=None)
    p.add_argument("--llm", default=None, help='"mock:<dir>" or "http"')
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("match", help="compute similar-API pairs")
    p.add_argument("--catalogs", required=True, help="comma-separated catalog files")
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--topk", type=int, default=None)
    p.add_argument("--h-within", type=float, default=None)
    p.add_argument("--h-cross", type=float, default=None)
    p.add_argument("--embedder", choices=("stub", "http"), default=None)
    p.add_argument("--embed-url", default=None)

    p = sub.add_parser("synthesize", help="LLM-synthesize candidate test cases")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--api", help="one API full name under test")
    group.add_argument("--all", action="store_true", help="every catalog API")
    p.add_argument("--pairs", required=True)
    p.add_argument("--bugdb", required=True)
    p.add_argument("--catalogs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--llm", default=None)
    p.add_argument("--runner", help="runner command; omitted = admit unexecuted")

    p = sub.add_parser("fuzz", help="mutation campaign over a test-case pool")
    p.add_argument("--pool", required=True)
    p.add_argument("--budget", default="1", help="wall budget (5h, 30m, 90s) or iteration count")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--runner", required=True)
    p.add_argument("--bugdb", help="bug records to update with findings")
    p.add_argument("--crashes-out", default=None)
    p.add_argument("--catalogs", help="catalog files for mutation parameter targeting")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--quota", type=int, default=None)

    p = sub.add_parser("report", help="per-type crash counts")
    p.add_argument("--crashes", required=True)

    p = sub.add_parser("pipeline", help="one-shot end-to-end run into a workdir")
    p.add_argument("--fixtures", required=True, help="issue fixture directory")
    p.add_argument("--catalogs", required=True)
    p.add_argument("--workdir", required=True)
    p.add_argument("--llm", default=None)
    p.add_argument("--runner", required=True)
    p.add_argument("--budget", default="1")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--topk", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)

    return parser


def _config_from_args(args) -> Config:
    overrides = {}
    mapping = {
        "alpha": "alpha",
        "topk": "top_k",
        "h_within": "h_within",
        "h_cross": "h_cross",
        "embedder": "embedder",
        "embed_url": "embed_url",
        "workers": "workers",
        "seed": "seed",
        "variant": "variant",
        "llm": "llm",
        "page_limit": "page_limit",
        "quota": "mutation_quota",
    }
    for attr, key in mapping.items():
        if hasattr(args, attr) and getattr(args, attr) is not None:
            overrides[key] = getattr(args, attr)
    return load_config(args.config, overrides)


def _load_catalogs(spec: str) -> list[list[catalog_mod.ApiRecord]]:
    return [catalog_mod.load_catalog(path.strip()) for path in spec.split(",") if path.strip()]


def _llm_client(cfg: Config):
    return make_client(
        cfg.llm, cfg.llm_base_url, cfg.llm_model, cfg.llm_temperature, cfg.llm_concurrency
    )


def _prepare_issue(issue, cfg: Config):
    issue = ingest_mod.extract_snippets(issue, cfg.link_hosts)
    snippets = tuple(recognizer_mod.compile_filter(s) for s in issue.snippets)
    return replace(issue, snippets=snippets)


# -- commands ---------------------------------------------------------------


def cmd_ingest(args, cfg: Config) -> int:
    keywords = load_keywords(args.keywords) if args.keywords else cfg.keywords
    kw_cfg = ingest_mod.KeywordConfig.from_list(keywords)
    raw = ingest_mod.fetch_issues(
        args.repo,
        token=args.token,
        page_limit=cfg.page_limit,
        fixtures=args.fixtures,
        per_page=cfg.per_page,
        retries=cfg.fetch_retries,
        wait_on_rate_limit=cfg.wait_on_rate_limit,
    )
    framework = args.framework or args.repo.split("/")[-1]
    records = ingest_mod.filter_bug_issues(raw, kw_cfg, framework=framework)
    records = [_prepare_issue(r, cfg) for r in records]
    ingest_mod.save_corpus(records, args.out)
    print(f"ingested {len(raw)} issues, retained {len(records)} bug issues -> {args.out}")
    return 0


def cmd_catalog(args, cfg: Config) -> int:
    records = catalog_mod.load_catalog(args.infile, framework=args.framework)
    catalog_mod.save_catalog(records, args.out)
    print(f"catalog: {len(records)} APIs -> {args.out}")
    return 0


def cmd_recognize(args, cfg: Config) -> int:
    corpus = ingest_mod.load_corpus(args.corpus)
    apis = catalog_mod.load_catalog(args.catalog)
    llm = _llm_client(cfg)

    def process(issue):
        issue = _prepare_issue(issue, cfg)
        return [
            recognizer_mod.verify(record, issue, llm, cfg.llm_budget)
            for record in recognizer_mod.recognize(issue, llm, apis, cfg.variant, cfg.llm_budget)
        ]

    # bounded worker pool; map keeps output in corpus order
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            batches = list(pool.map(process, corpus))
    else:
        batches = [process(issue) for issue in corpus]
    records = [record for batch in batches for record in batch]
    recognizer_mod.save_bugdb(records, args.out)
    print(f"recognized {len(records)} bug records from {len(corpus)} issues -> {args.out}")
    return 0


def cmd_match(args, cfg: Config) -> int:
    catalogs = _load_catalogs(args.catalogs)
    provider = matcher_mod.make_provider(cfg.embedder, cfg.embed_dim, cfg.embed_url)
    engine = matcher_mod.SimilarityMatcher(catalogs, provider, cfg.alpha)
    pairs = engine.match_all(cfg.top_k, cfg.h_within, cfg.h_cross)
    matcher_mod.save_pairs(pairs, args.out)
    os_count = sum(1 for p in pairs if p.kind == "OS")
    print(f"matched {os_count} OS and {len(pairs) - os_count} PS pairs -> {args.out}")
    return 0


def cmd_synthesize(args, cfg: Config) -> int:
    catalogs = _load_catalogs(args.catalogs)
    store = Store(root=None)
    store.add_pairs(matcher_mod.load_pairs(args.pairs))
    store.add_bugs(recognizer_mod.load_bugdb(args.bugdb))
    llm = _llm_client(cfg)
    runner = RunnerClient(args.runner) if args.runner else None

    all_apis = sorted(
        (record for collection in catalogs for record in collection),
        key=lambda r: r.api_id,
    )
    names = sorted(record.full_name for record in all_apis)
    if args.api:
        targets = [r for r in all_apis if r.full_name == args.api]
        if not targets:
            raise UsageError(f"--api {args.api}: not found in the given catalogs")
    else:
        targets = all_apis

    pool = []
    try:
        for api in targets:
            pool.extend(
                synthesizer_mod.synthesize(
                    api,
                    llm,
                    store,
                    executor=runner,
                    catalog_names=names,
                    timeout_s=cfg.exec_timeout_s,
                    repair_retries=cfg.repair_retries,
                    budget=cfg.llm_budget,
                )
            )
    finally:
        if runner is not None:
            runner.close()
    synthesizer_mod.save_pool(pool, args.out)
    print(f"synthesized {len(pool)} pool entries for {len(targets)} APIs -> {args.out}")
    return 0


def cmd_fuzz(args, cfg: Config) -> int:
    pool = synthesizer_mod.load_pool(args.pool)
    budget = executor_mod.parse_budget(args.budget)
    store = Store(root=None)
    if args.bugdb and Path(args.bugdb).exists():
        store.add_bugs(recognizer_mod.load_bugdb(args.bugdb))
    api_params: dict[str, tuple[str, ...]] = {}
    if args.catalogs:
        for collection in _load_catalogs(args.catalogs):
            for record in collection:
                api_params[record.full_name] = record.param_names

    with RunnerClient(args.runner) as runner:
        reports = executor_mod.run_campaign(
            pool,
            budget,
            runner,
            store=store,
            workers=cfg.workers,
            quota=cfg.mutation_quota,
            top_n=cfg.select_top_n,
            timeout_s=cfg.exec_timeout_s,
            seed=cfg.seed,
            api_params=api_params,
            internal_patterns=cfg.internal_failure_patterns,
            compile_patterns=cfg.compile_failure_patterns,
            dtypes=tuple(cfg.dtypes),
        )
    crashes_out = args.crashes_out or str(Path(args.pool).with_name("crashes.jsonl"))
    executor_mod.save_reports(reports, crashes_out)
    if args.bugdb:
        recognizer_mod.save_bugdb(store.all("bugs"), args.bugdb)
    print(executor_mod.crash_table(reports))
    return 0


def cmd_report(args, cfg: Config) -> int:
    reports = executor_mod.load_reports(args.crashes)
    print(executor_mod.crash_table(reports))
    return 0


def cmd_pipeline(args, cfg: Config) -> int:
    workdir = Path(args.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    store = Store(workdir)
    catalogs = _load_catalogs(args.catalogs)
    llm = _llm_client(cfg)

    # ingest + recognize
    raw = ingest_mod.fetch_issues("fixtures/local", fixtures=args.fixtures)
    issues = ingest_mod.filter_bug_issues(raw, ingest_mod.KeywordConfig.from_list(cfg.keywords))
    issues = [_prepare_issue(issue, cfg) for issue in issues]
    store.add_issues(issues)
    all_apis = [record for collection in catalogs for record in collection]
    bug_records = []
    for issue in issues:
        for record in recognizer_mod.recognize(issue, llm, all_apis, cfg.variant, cfg.llm_budget):
            bug_records.append(recognizer_mod.verify(record, issue, llm, cfg.llm_budget))
    store.add_bugs(bug_records)

    # match
    provider = matcher_mod.make_provider(cfg.embedder, cfg.embed_dim, cfg.embed_url)
    engine = matcher_mod.SimilarityMatcher(catalogs, provider, cfg.alpha)
    store.add_pairs(engine.match_all(cfg.top_k, cfg.h_within, cfg.h_cross))

    # synthesize + fuzz
    names = sorted(record.full_name for record in all_apis)
    api_params = {record.full_name: record.param_names for record in all_apis}
    with RunnerClient(args.runner) as runner:
        pool = []
        for api in sorted(all_apis, key=lambda r: r.api_id):
            pool.extend(
                synthesizer_mod.synthesize(
                    api,
                    llm,
                    store,
                    executor=runner,
                    catalog_names=names,
                    timeout_s=cfg.exec_timeout_s,
                    repair_retries=cfg.repair_retries,
                    budget=cfg.llm_budget,
                )
            )
        reports = executor_mod.run_campaign(
            pool,
            executor_mod.parse_budget(args.budget),
            runner,
            store=store,
            workers=cfg.workers,
            quota=cfg.mutation_quota,
            top_n=cfg.select_top_n,
            timeout_s=cfg.exec_timeout_s,
            seed=cfg.seed,
            api_params=api_params,
            internal_patterns=cfg.internal_failure_patterns,
            compile_patterns=cfg.compile_failure_patterns,
            dtypes=tuple(cfg.dtypes),
        )

    print(
        f"pipeline: {len(issues)} bug issues, {len(bug_records)} mined records, "
        f"{len(store.all('pairs'))} pairs, {len(pool)} pool entries"
    )
    print(executor_mod.crash_table(reports))
    return 0


_COMMANDS = {
    "ingest": cmd_ingest,
    "catalog": cmd_catalog,
    "recognize": cmd_recognize,
    "match": cmd_match,
    "synthesize": cmd_synthesize,
    "fuzz": cmd_fuzz,
    "report": cmd_report,
    "pipeline": cmd_pipeline,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _config_from_args(args)
        return _COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        logger.debug("unhandled failure", exc_info=True)
        print(f"failed: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
