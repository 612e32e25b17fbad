"""
Command-line entry point: `pcot <subcommand> ...` or `python -m pcot ...`.

Exit codes: 0 success, 1 validation failure or halted run, 2 configuration error.
"""
import argparse
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from pcot import __version__, config
from pcot.corpus import (SourceDataset, build_manifest, load_dataset, read_documents, sample_test_set,
                         validate_balance, write_documents)
from pcot.errors import AuthError, BudgetExceeded, ConfigError, CorpusError, PcotError, ReportError
from pcot.llm_gateway import ResponseCache
from pcot.metrics import DistributionBy
from pcot.prompt_engine import MethodVariant, render_all
from pcot.report import (MAIN_GROUPINGS, Grouping, ReportFormat, ReportSpec, ResultStore, build_comparison_table,
                         build_distribution_heatmap_data, build_main_table, build_mcc_table, build_method_summary,
                         build_significance_table, build_stage1_table, build_subset_detail_tables,
                         build_subset_table, render_markdown, write_tables)
from pcot.runner import build_gateway, dry_run, execute, load_corpora, load_plan
from pcot.taxonomy import export_taxonomy

logger = logging.getLogger("pcot")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2

REPORT_TABLES = ("main", "subset", "subset-detail", "distribution", "mcc", "significance", "summary", "stage1",
                 "comparison")


def exit_with_error(message: str, code: int) -> int:
    """Prints a boxed error banner to stderr and returns the exit code."""
    print("=" * 50, file=sys.stderr)
    print(f"ERROR: {message}", file=sys.stderr)
    print("=" * 50, file=sys.stderr)
    return code


def configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


# --- Subcommands ---

def cmd_ingest(args) -> int:
    docs = load_dataset(args.input, args.source)
    write_documents(docs, args.output)
    print(f"Wrote {len(docs)} documents to {args.output}")
    if args.manifest:
        manifest = build_manifest({SourceDataset(args.source): docs})
        Path(args.manifest).write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    return EXIT_OK


def cmd_sample(args) -> int:
    docs = read_documents(args.input)
    sample = sample_test_set(docs, args.size, args.seed)
    write_documents(sample, args.output)
    low, high = config.TEST_SET_SIZE_RANGE
    if not low <= len(sample) <= high:
        logger.warning("Sample of %d documents lies outside the usual %d..%d test-set size", len(sample), low, high)
    print(f"Wrote {len(sample)} of {len(docs)} documents (seed {args.seed}) to {args.output}")
    return EXIT_OK


def cmd_validate(args) -> int:
    docs = read_documents(args.input)
    report = validate_balance(docs, args.expect_share, args.tolerance)
    print(report.describe())
    return EXIT_OK if report.passed else EXIT_VALIDATION


def cmd_plan(args) -> int:
    plan = load_plan(args.plan)
    docs = load_corpora(plan)
    print(f"Plan '{plan.name}' ({plan.plan_hash()[:12]})")
    print(f"  models:   {', '.join(m.model_id for m in plan.models)}")
    print(f"  variants: {', '.join(v.slug for v in plan.variants)}")
    print(f"  documents: {len(docs)}")
    print(f"  cells:    {len(docs) * len(plan.models) * len(plan.variants)}")
    return EXIT_OK


def _plan_for(args):
    plan = load_plan(args.plan)
    if getattr(args, "mock", False):
        plan = plan.with_mock_models()
    if getattr(args, "output_dir", None):
        plan = plan.model_copy(update={"output_dir": Path(args.output_dir)})
    return plan


def cmd_run(args) -> int:
    plan = _plan_for(args)
    summary = execute(plan, build_gateway(plan, args.rulebook, args.cache_dir))
    print(summary.describe())
    return EXIT_OK if summary.halted is None else EXIT_VALIDATION


def cmd_dry_run(args) -> int:
    plan = _plan_for(args)
    cache = ResponseCache(config.cache_dir(args.cache_dir or plan.cache_dir))
    estimate = dry_run(plan, cache)
    print(estimate.describe())
    if estimate.total > plan.budget:
        print(f"Warning: plan needs {estimate.total} calls but the budget is {plan.budget}")
    return EXIT_OK


def _store(args) -> ResultStore:
    if args.external:
        return ResultStore.from_external_csv(args.external)
    if not args.store:
        raise ConfigError("report needs --store or --external")
    return ResultStore.from_jsonl(args.store)


def _summary_groups(entries: list[str] | None) -> dict[str, list[str]] | None:
    if not entries:
        return None
    groups = {}
    for entry in entries:
        name, sep, labels = entry.partition("=")
        if not sep:
            raise ConfigError(f"--summary-group {entry!r} must look like NAME=variant,variant")
        groups[name.strip()] = [label.strip() for label in labels.split(",") if label.strip()]
    return groups


def cmd_report(args) -> int:
    store = _store(args)
    spec = ReportSpec(
        groupings=tuple(Grouping.parse(g) for g in args.grouping) if args.grouping else MAIN_GROUPINGS,
        compare=args.compare or (),
        significance_level=args.level,
        formats=tuple(ReportFormat(f) for f in args.format),
        with_std=args.with_std,
    )
    tables = []
    for name in args.tables:
        if name == "main":
            tables.append(build_main_table(store, spec))
        elif name == "subset":
            tables.append(build_subset_table(store, spec))
        elif name == "subset-detail":
            tables.extend(build_subset_detail_tables(store, spec))
        elif name == "distribution":
            by = DistributionBy.PREDICTED_LABEL if args.by == "predicted" else DistributionBy.GOLD_LABEL
            tables.append(build_distribution_heatmap_data(store, by, args.variant))
        elif name == "mcc":
            tables.append(build_mcc_table(store, args.by, args.variant))
        elif name == "significance":
            tables.append(build_significance_table(store, spec))
        elif name == "summary":
            tables.append(build_method_summary(store, _summary_groups(args.summary_group), args.reference))
        elif name == "stage1":
            tables.append(build_stage1_table(store))
        elif name == "comparison":
            if not args.compare_to:
                raise ConfigError("the comparison table needs --compare-to REFERENCE OTHER...")
            reference, *others = args.compare_to
            tables.append(build_comparison_table(store, reference, others, spec.groupings))

    if ReportFormat.MARKDOWN in spec.formats and not args.out_dir:
        sys.stdout.write(render_markdown(tables))
    if args.out_dir:
        for path in write_tables(tables, args.out_dir, spec.formats):
            logger.info("Wrote %s", path)
    elif ReportFormat.CSV in spec.formats:
        for table in tables:
            sys.stdout.write(table.to_csv())
    return EXIT_OK


def cmd_dump_prompts(args) -> int:
    docs = {d.id: d for d in read_documents(args.input)}
    if args.doc_id not in docs:
        raise ConfigError(f"Document {args.doc_id!r} is not in {args.input}")
    variants = [MethodVariant.parse(slug) for slug in args.variants]
    prompts = render_all(docs[args.doc_id], variants, model_id=args.model_id)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, prompt in prompts.items():
        (out_dir / f"{name}.txt").write_text(prompt.text, encoding="utf-8")
        print(f"{name}: {prompt.content_hash}")
    return EXIT_OK


def cmd_export_taxonomy(args) -> int:
    text = export_taxonomy()
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --- Parser ---

def _add_corpus_commands(sub) -> None:
    p = sub.add_parser("ingest", help="Convert a native dataset file to unified JSONL")
    p.add_argument("--source", required=True, choices=[s.value for s in SourceDataset], help="Upstream dataset layout")
    p.add_argument("--in", dest="input", required=True, help="Native CSV/JSON/JSONL file")
    p.add_argument("--out", dest="output", required=True, help="Unified JSONL to write")
    p.add_argument("--manifest", default=None, help="Optional corpus manifest JSON to write")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("sample", help="Draw a seeded test set from unified JSONL")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--n", dest="size", type=int, default=config.DEFAULT_SAMPLE_SIZE, help="Number of documents")
    p.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("validate", help="Check the disinformation share of a corpus")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--expect-share", type=float, required=True, help="Expected disinformation share, e.g. 0.26")
    p.add_argument("--tolerance", type=float, default=0.03)
    p.set_defaults(func=cmd_validate)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcot", description="Persuasion-augmented disinformation detection experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    # Reachable both as `pcot ingest ...` and `pcot corpus ingest ...`
    _add_corpus_commands(sub)
    corpus = sub.add_parser("corpus", help="Dataset commands: ingest, sample, validate")
    _add_corpus_commands(corpus.add_subparsers(dest="corpus_command", required=True))

    p = sub.add_parser("plan"
, help="Validate a plan file and print its matrix")
    p.add_argument("--plan", required=True)
    p.set_defaults(func=cmd_plan)

    for name, func, text in (("run", cmd_run, "Execute a plan"), ("dry-run", cmd_dry_run, "Count the calls a plan needs")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--plan", required=True, help="YAML plan file")
        p.add_argument("--mock", action="store_true", help="Replace every model with the offline mock analyst")
        p.add_argument("--cache-dir", default=None, help=f"Response cache (default: $PCOT_CACHE_DIR or {config.DEFAULT_CACHE_DIR})")
        p.add_argument("--output-dir", default=None, help="Override the plan's output directory")
        if name == "run":
            p.add_argument("--rulebook", default=None, help="YAML rulebook for the mock analyst")
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="Build report tables from a results store")
    p.add_argument("--store", default=None, help="Run output directory or results.jsonl")
    p.add_argument("--external", default=None, help="CSV of published scores: model,variant,grouping,f1")
    p.add_argument("--tables", nargs="+", default=["main"], choices=REPORT_TABLES)
    p.add_argument("--compare", action="append", default=None, metavar="BASE:NEW",
                   help="Variant pair to compare, e.g. baseline-van:pcot-van (repeatable)")
    p.add_argument("--grouping", action="append", default=None, help="Overall, Articles, Posts, PriorCutoff, PostCutoff")
    p.add_argument("--level", type=float, default=config.DEFAULT_SIGNIFICANCE_LEVEL, choices=config.SIGNIFICANCE_LEVELS)
    p.add_argument("--format", nargs="+", default=["Markdown"], choices=[f.value for f in ReportFormat])
    p.add_argument("--with-std", action="store_true", help="Add standard deviation across models to averages")
    p.add_argument("--by", default="gold", choices=("gold", "predicted"), help="Label for distribution and MCC tables")
    p.add_argument("--variant", default=None, help="Analysis-bearing variant for distribution and MCC tables")
    p.add_argument("--summary-group", action="append", default=None, metavar="NAME=V1,V2",
                   help="Method group for the summary table (repeatable)")
    p.add_argument("--reference", default="Base", help="Reference group for the summary table")
    p.add_argument("--compare-to", nargs="+", default=None, metavar="VARIANT",
                   help="Reference variant followed by the variants to compare with it")
    p.add_argument("--out-dir", default=None, help="Write one file per table and format instead of stdout")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("dump-prompts", help="Write every prompt a set of variants sends for one document")
    p.add_argument("--in", dest="input", required=True, help="Unified JSONL")
    p.add_argument("--doc-id", required=True)
    p.add_argument("--variants", nargs="+", required=True, help="Variant slugs, e.g. baseline-van pcot-zcot@tat")
    p.add_argument("--model-id", default="", help="Model id folded into the content hash")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_dump_prompts)

    p = sub.add_parser("export-taxonomy", help="Write the persuasion taxonomy as text")
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_export_taxonomy)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    config.load_environment()
    try:
        return args.func(args)
    except (BudgetExceeded, AuthError) as e:
        return exit_with_error(str(e), EXIT_VALIDATION)
    except (ConfigError, FileNotFoundError, ValidationError) as e:
        return exit_with_error(str(e), EXIT_CONFIG)
    except (CorpusError, ReportError, PcotError) as e:
        return exit_with_error(str(e), EXIT_VALIDATION)
