"""Command line entry point: ``haggis <command> ...``.

Commands: parse, split, mine, extract, evaluate, lift, suggest, sample.
Exit status is 0 on success, 1 on bad input data or configuration and 2 on
usage errors or missing input files.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, demolang
from .corpus_io import SchemaError, ingest_corpus, write_corpus
from .evaluation import LiftMatrix, evaluation_report, lift_matrix, suggest
from .generate import DEFAULT_MAX_DEPTH, PtsgSampler
from .grammar import Fragment, Pcfg, PriorParams, estimate_pcfg
from .idioms import IdiomSet, extract_idioms
from .sampler import (CHECKPOINT_VERSION, FragmentTable, GibbsKernel, PosteriorSample, init_state,
                      run_chain)
from .symbols import SymbolTable
from .transforms import DEFAULT_FREEZE, prepare_corpus, to_raw
from .trees import SourceTree, format_tree

log = logging.getLogger("haggis")

THREADS_ENV = "HAGGIS_THREADS"


class CliError(Exception):
    def __init__(self, message, code=1):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    """Mining configuration; JSON config files use these field names."""

    alpha: float = 1.0
    pStop: float = 0.7
    iterations: int = 100
    burnIn: int = 75
    sampleEvery: int = 1
    cMin: int = 2
    nMin: int = 5
    seed: int = 0
    chains: int = 1
    freezeCategories: list = field(default_factory=lambda: sorted(DEFAULT_FREEZE))
    initPolicy: object = 0.0
    scan: str = "fixed"

    @classmethod
    def from_json(cls, obj) -> "RunConfig":
        if not isinstance(obj, dict):
            raise CliError("config must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(obj) - names)
        if unknown:
            raise CliError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**obj).validated()

    def validated(self) -> "RunConfig":
        try:
            PriorParams(float(self.pStop), float(self.alpha))
        except ValueError as exc:
            raise CliError(str(exc)) from None
        if not 0 <= self.burnIn < self.iterations:
            raise CliError(f"need 0 <= burnIn < iterations, got {self.burnIn} and {self.iterations}")
        if self.sampleEvery < 1 or self.chains < 1 or self.cMin < 1 or self.nMin < 1:
            raise CliError("sampleEvery, chains, cMin and nMin must be positive")
        if self.scan not in ("fixed", "random"):
            raise CliError(f"scan must be 'fixed' or 'random', got {self.scan!r}")
        return self

    @property
    def params(self) -> PriorParams:
        return PriorParams(float(self.pStop), float(self.alpha))

    def idiom_config(self) -> dict:
        return {"alpha": self.alpha, "pstop": self.pStop, "cmin": self.cMin, "nmin": self.nMin, "seed": self.seed}


def thread_limit() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise CliError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


# -- shared helpers -------------------------------------------------------------

def _need_file(path, what="input"):
    if not Path(path).exists():
        raise CliError(f"{what} not found: {path}", code=2)


def _load_corpus(path, config: Optional[RunConfig] = None, table=None):
    _need_file(path, "corpus")
    try:
        raw = ingest_corpus(path)
    except SchemaError as exc:
        raise CliError(f"{path}: {exc}") from None
    freeze = config.freezeCategories if config else sorted(DEFAULT_FREEZE)
    return prepare_corpus(raw, table, frozenset(freeze))


def _read_json(path, what):
    _need_file(path, what)
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON ({exc.msg})") from None


def _write_text(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _load_idioms(path, table) -> IdiomSet:
    obj = _read_json(path, "idiom file")
    try:
        return IdiomSet.from_json(obj, table)
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"{path}: not an idiom file ({exc})") from None


# -- samples in checkpoints -----------------------------------------------------

def _samples_to_json(samples, symbols, chain):
    out = []
    for s in samples:
        rows = sorted(
            ([Fragment(k).to_json(symbols), c, sorted(s.files.get(k, ()))] for k, c in s.fragments.items()),
            key=lambda r: json.dumps(r[0]),
        )
        out.append({"chain": chain, "iteration": s.iteration, "fragments": rows})
    return out


def _samples_from_json(rows, table):
    out = []
    for row in rows:
        frags, files = Counter(), {}
        for frag, count, where in row["fragments"]:
            key = Fragment.from_json(frag, table).key
            frags[key] += count
            files[key] = frozenset(where)
        out.append(PosteriorSample(row["iteration"], frags, files))
    return out


def _run_chain_job(job):
    corpus_path, config_obj, chain, resume = job
    config = RunConfig.from_json(config_obj)
    corpus, table = _load_corpus(corpus_path, config)
    pcfg = estimate_pcfg(corpus, table)
    state = init_state(corpus, pcfg, config.params, seed=config.seed + chain, init=config.initPolicy)
    if resume is not None:
        state.restore(resume)
    samples = run_chain(state, config.iterations, config.burnIn, config.sampleEvery, GibbsKernel(config.scan))
    return state.checkpoint(chain=chain), _samples_to_json(samples, table, chain)


# -- commands -------------------------------------------------------------------

def cmd_parse(args):
    files = []
    for src in args.sources:
        p = Path(src)
        if p.is_dir():
            files.extend(sorted(q for q in p.rglob(f"*{args.ext}") if q.is_file()))
        elif p.is_file():
            files.append(p)
        else:
            raise CliError(f"source not found: {src}", code=2)
    base = Path(args.sources[0]) if len(args.sources) == 1 and Path(args.sources[0]).is_dir() else None

    def parse_one(path):
        try:
            root = demolang.parse_program(path.read_text(encoding="utf-8"))
        except demolang.ParseError as exc:
            raise CliError(f"{path}: {exc}") from None
        imports = [imp.prop("name") for imp in root.group("imports")]
        rel = path.relative_to(base).as_posix() if base else path.as_posix()
        return SourceTree(rel, imports, root)

    with ThreadPoolExecutor(max_workers=thread_limit()) as pool:
        trees = list(pool.map(parse_one, files))
    if args.output in (None, "-"):
        write_corpus(trees, sys.stdout)
    else:
        write_corpus(trees, args.output)
    log.info("parsed %d files", len(trees))


def _project(path: str) -> str:
    parts = path.split("/")
    return parts[0] if len(parts) > 1 else ""


def cmd_split(args):
    _need_file(args.corpus, "corpus")
    if not 0.0 < args.ratio < 1.0:
        raise CliError("--ratio must lie strictly between 0 and 1")
    try:
        trees = ingest_corpus(args.corpus)
    except SchemaError as exc:
        raise CliError(f"{args.corpus}: {exc}") from None
    rng = np.random.default_rng(args.seed)
    groups = {}
    for i, t in enumerate(trees):
        groups.setdefault(_project(t.path) if args.by == "project" else "", []).append(i)
    train = set()
    for key in sorted(groups):
        members = groups[key]
        order = rng.permutation(len(members))
        n_train = int(round(args.ratio * len(members)))
        train.update(members[j] for j in order[:n_train])
    write_corpus([t for i, t in enumerate(trees) if i in train], args.train)
    write_corpus([t for i, t in enumerate(trees) if i not in train], args.test)
    log.info("split %d files: %d train, %d test", len(trees), len(train), len(trees) - len(train))


def _config_from_args(args) -> RunConfig:
    base = RunConfig.from_json(_read_json(args.config, "config file")) if args.config else RunConfig()
    overrides = {
        "seed": args.seed, "iterations": args.iters, "burnIn": args.burn_in, "alpha": args.alpha,
        "pStop": args.pstop, "chains": args.chains, "cMin": args.cmin, "nMin": args.nmin,
        "sampleEvery": args.sample_every, "scan": args.scan,
    }
    if args.init is not None:
        overrides["initPolicy"] = _init_value(args.init)
    if args.freeze is not None:
        overrides["freezeCategories"] = [c for c in args.freeze.split(",") if c]
    merged = dataclasses.replace(base, **{k: v for k, v in overrides.items() if v is not None})
    return merged.validated()


def _init_value(text):
    try:
        return float(text)
    except ValueError:
        return text


def cmd_mine(args):
    resume = None
    if args.resume:
        resume = _read_json(args.resume, "checkpoint")
        if resume.get("version") != CHECKPOINT_VERSION:
            raise CliError(f"{args.resume}: unknown checkpoint version")
        config = RunConfig.from_json(resume["config"])
        if args.iters is not None:
            config = dataclasses.replace(config, iterations=args.iters).validated()
        corpus_path = args.corpus or resume["corpus"]
    else:
        if not args.corpus:
            raise CliError("mine needs a corpus path", code=2)
        config = _config_from_args(args)
        corpus_path = args.corpus
    corpus, table = _load_corpus(corpus_path, config)
    if not corpus:
        raise CliError(f"{corpus_path}: corpus is empty")
    pcfg = estimate_pcfg(corpus, table)
    try:
        init_state(corpus[:1], pcfg, config.params, init=config.initPolicy)
    except ValueError as exc:
        raise CliError(str(exc)) from None

    config_obj = dataclasses.asdict(config)
    previous = resume["chains"] if resume else [None] * config.chains
    jobs = [(str(corpus_path), config_obj, c, previous[c]) for c in range(config.chains)]
    workers = min(thread_limit(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chain_job, jobs))
    else:
        results = [_run_chain_job(j) for j in jobs]

    sample_rows = list(resume["samples"]) if resume else []
    for _, rows in results:
        sample_rows.extend(rows)
    sample_rows.sort(key=lambda r: (r["chain"], r["iteration"]))
    samples = _samples_from_json(sample_rows, table)
    if not samples:
        raise CliError("the chain produced no samples")
    idioms = extract_idioms(samples, config.cMin, config.nMin, table, config.idiom_config())
    _write_text(args.output, idioms.dumps())

    checkpoint = {
        "version": CHECKPOINT_VERSION,
        "corpus": str(corpus_path),
        "config": config_obj,
        "chains": [ckpt for ckpt, _ in results],
        "samples": sample_rows,
    }
    ckpt_path = args.checkpoint or _sibling(args.output, ".ckpt.json")
    grammar_path = args.grammar or _sibling(args.output, ".grammar.json")
    if ckpt_path:
        _write_text(ckpt_path, json.dumps(checkpoint) + "\n")
    if grammar_path:
        _write_text(grammar_path, json.dumps(pcfg.to_json(), indent=1) + "\n")
    log.info("mined %d idioms from %d files", len(idioms), len(corpus))


def _sibling(path, suffix):
    if path in (None, "-"):
        return None
    p = Path(path)
    return str(p.with_name(p.stem + suffix))


def cmd_extract(args):
    ckpt = _read_json(args.checkpoint, "checkpoint")
    try:
        config = RunConfig.from_json(ckpt["config"])
        table = SymbolTable()
        samples = _samples_from_json(ckpt["samples"], table)
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"{args.checkpoint}: not a mining checkpoint ({exc})") from None
    if args.cmin is not None or args.nmin is not None:
        config = dataclasses.replace(config, cMin=args.cmin or config.cMin, nMin=args.nmin or config.nMin).validated()
    if not samples:
        raise CliError(f"{args.checkpoint}: checkpoint holds no samples")
    idioms = extract_idioms(samples, config.cMin, config.nMin, table, config.idiom_config())
    _write_text(args.output, idioms.dumps())


def cmd_evaluate(args):
    corpus, table = _load_corpus(args.corpus)
    idioms = _load_idioms(args.idioms, table)
    report = evaluation_report(idioms, corpus)
    for row, idiom in zip(report["perIdiom"], idioms):
        row["template"] = idiom.template
    _write_text(args.output, json.dumps(report, indent=2) + "\n")


def cmd_lift(args):
    corpus, table = _load_corpus(args.corpus)
    idioms = _load_idioms(args.idioms, table)
    _write_text(args.output, lift_matrix(idioms, corpus).to_csv())


def cmd_suggest(args):
    table = SymbolTable()
    idioms = _load_idioms(args.idioms, table)
    _need_file(args.lift, "lift file")
    try:
        matrix = LiftMatrix.from_csv(Path(args.lift).read_text(encoding="utf-8"))
    except ValueError as exc:
        raise CliError(f"{args.lift}: {exc}") from None
    counts = {i: idiom.file_count for i, idiom in enumerate(idioms)}
    ranked = suggest(args.imports, matrix, args.sth, counts)
    if args.k is not None:
        ranked = ranked[:args.k]
    if args.json:
        rows = [{"id": t, "score": s, "template": _template(idioms, t)} for t, s in ranked]
        sys.stdout.write(json.dumps(rows, indent=2) + "\n")
        return
    for t, s in ranked:
        sys.stdout.write(f"{t}\t{s:.6g}\t{_template(idioms, t)}\n")


def _template(idioms, t):
    if isinstance(t, int) and 0 <= t < len(idioms):
        return idioms[t].template.replace("\n", " ")
    return ""


def render_tree(root, symbols) -> str:
    """Demo-language source for a generated tree, bracket text otherwise."""
    try:
        return demolang.print_program(to_raw(root))
    except (ValueError, KeyError, IndexError, TypeError, AttributeError):
        return format_tree(root)


def cmd_sample(args):
    if args.n < 0:
        raise CliError("-n must be nonnegative")
    if args.checkpoint:
        ckpt = _read_json(args.checkpoint, "checkpoint")
        corpus_path = args.corpus or ckpt.get("corpus")
        config = RunConfig.from_json(ckpt["config"])
        corpus, table = _load_corpus(corpus_path, config)
        pcfg = estimate_pcfg(corpus, table)
        state = init_state(corpus, pcfg, config.params, seed=config.seed).restore(ckpt["chains"][-1])
        frag_table, params = state.table, state.params
    elif args.idioms and args.grammar:
        table = SymbolTable()
        pcfg = Pcfg.from_json(_read_json(args.grammar, "grammar"), table)
        idioms = _load_idioms(args.idioms, table)
        frag_table = FragmentTable.from_counts({i.fragment.key: i.sample_count for i in idioms})
        cfg = idioms.config
        params = PriorParams(float(cfg.get("pstop") or 0.7), float(cfg.get("alpha") or 1.0))
    else:
        raise CliError("sample needs --checkpoint, or --idioms together with --grammar", code=2)
    rng = np.random.default_rng(args.seed)
    gen = PtsgSampler(frag_table, pcfg, params, args.max_depth)
    trees = [SourceTree(f"sample/{i}", [], gen.tree(rng)) for i in range(args.n)]
    if args.format == "jsonl":
        out = []
        for t in trees:
            out.append(json.dumps({"path": t.path, "tree": format_tree(t.root)}) + "\n")
        _write_text(args.output, "".join(out))
    else:
        _write_text(args.output, "".join(f"// {t.path}\n{render_tree(t.root, table)}\n\n" for t in trees))


# -- argument parsing -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="haggis", description="Mine syntactic idioms from parsed source trees.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", parents=[common], help="parse demo-language sources into a tree corpus")
    p.add_argument("sources", nargs="+")
    p.add_argument("-o", "--output")
    p.add_argument("--ext", default=".demo")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("split", parents=[common], help="train/test split of a tree corpus")
    p.add_argument("corpus")
    p.add_argument("--ratio", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--by", choices=("project", "file"), default="project")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("mine", parents=[common], help="run the sampler and write an idiom file")
    p.add_argument("corpus", nargs="?")
    p.add_argument("-c", "--config")
    p.add_argument("-o", "--output", default="idioms.json")
    p.add_argument("--checkpoint")
    p.add_argument("--grammar")
    p.add_argument("--resume")
    p.add_argument("--seed", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--pstop", type=float)
    p.add_argument("--chains", type=int)
    p.add_argument("--cmin", type=int)
    p.add_argument("--nmin", type=int)
    p.add_argument("--sample-every", type=int)
    p.add_argument("--init")
    p.add_argument("--scan", choices=("fixed", "random"))
    p.add_argument("--freeze", help="comma-separated freeze categories")
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("extract", parents=[common], help="re-extract idioms from a mining checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--cmin", type=int)
    p.add_argument("--nmin", type=int)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("evaluate", parents=[common], help="coverage, precision and match sizes on a corpus")
    p.add_argument("idioms")
    p.add_argument("corpus")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("lift", parents=[common], help="import/idiom lift matrix as CSV")
    p.add_argument("idioms")
    p.add_argument("corpus")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("suggest", parents=[common], help="rank idioms for a set of imports")
    p.add_argument("idioms")
    p.add_argument("lift")
    p.add_argument("imports", nargs="*")
    p.add_argument("--sth", type=float, default=0.0)
    p.add_argument("-k", type=int)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_suggest)

    p = sub.add_parser("sample", parents=[common], help="generate synthetic trees from a posterior grammar")
    p.add_argument("--checkpoint")
    p.add_argument("--corpus")
    p.add_argument("--idioms")
    p.add_argument("--grammar")
    p.add_argument("-n", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-depth", type=int, default=DEFAULT_MAX_DEPTH)
    p.add_argument("--format", choices=("text", "jsonl"), default="text")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_sample)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        args.func(args)
    except CliError as exc:
        print(f"haggis {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except BrokenPipeError:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
