"""Pipeline stages: corpus to assembled dataset, one artifact per stage.

Stage order is synth (optional) -> ingest -> train-lm -> generate -> filter
-> annotate -> assemble -> evaluate -> report. Each stage reads files the
previous one wrote under the workdir, so any stage can be rerun in
isolation, and a manifest records config hash plus input/output hashes.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import synth
from .af import (
    AFConfig,
    AFContext,
    AFDataset,
    init_assignment,
    load_assignment_jsonl,
    load_trace_csv,
    run_af,
    save_assignment_jsonl,
    save_trace_csv,
)
from .bots import BotProfile, ScriptedAnnotator
from .committee import CommitteeConfig
from .corpus import (
    build_contexts,
    fold_assign,
    ingest_pairs,
    read_contexts_jsonl,
    read_jsonl,
    write_contexts_jsonl,
    write_rejects_jsonl,
)
from .evalharness import evaluate, questions_from_assignment, stats_report, write_report
from .features import CommonWordEncoder, TokenVocab, style_features
from .lm import (
    NGramLM,
    read_pools_jsonl,
    sample_endings,
    train_lm,
    write_pools_jsonl,
)
from .manifest import Manifest, config_hash
from .seeds import rng_for
from .validation.assembly import (
    Reannotate,
    Reject,
    assemble,
    read_assembled_jsonl,
    write_assembled_jsonl,
)
from .validation.store import ValidationStore
from .validation.tasks import make_reannotation_task, make_task

log = logging.getLogger("afkit")


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


DEFAULT_CONFIG: dict = {
    "seed": 0,
    "workdir": "run",
    "paths": {"corpus": None, "embeddings": None},
    "synth": {
        "n_contexts": 500,
        "lm_only_per_context": 3.0,
        "marker_rate": 0.4,
        "detour_continue": 0.55,
    },
    "corpus": {
        "max_gap_seconds": 25.0,
        "min_count": 3,
        "min_len": 5,
        "max_ending_len": 25,
        "n_folds": 5,
        "verb_lexicon": list(synth.VERB_LEXICON),
    },
    "lm": {"order": 3, "discount": 0.75},
    "generation": {"n_samples": 1023, "max_len": 25},
    "af": {
        "k": 9,
        "n_easy": 2,
        "train_fraction": 0.8,
        "mlp_only_iterations": 100,
        "max_iterations": 150,
        "window": 20,
        "tolerance": 0.02,
    },
    "committee": {
        "embed_dim": 32,
        "mlp_hidden": 32,
        "cnn_filters_per_width": 8,
        "cnn_widths": [2, 3, 4, 5],
        "lstm_hidden": 16,
        "ensemble_hidden": 32,
        "epochs": 4,
        "learning_rate": 0.15,
        "batch_size": 16,
        "max_seq_len": 25,
        "grad_clip": 2.0,
        "common_top_k": 100,
    },
    "validation": {
        "lease_seconds": 1800.0,
        "audit_rate": 0.0,
        "audit_annotations": 3,
        "eval_folds": [4],
    },
    "annotate": {
        "n_annotators": 3,
        "max_rounds": 8,
        "p_found_best": 0.75,
        "p_found_second": 0.15,
        "p_gibberish": 0.08,
        "p_generated_likely": 0.25,
    },
    "eval": {"bag_epochs": 5, "dual_epochs": 10, "embed_dim": 16, "bias_contrast": True},
}


def _merge(defaults: dict, overrides: dict, trail: str = "") -> dict:
    out = dict(defaults)
    for key, val in overrides.items():
        here = f"{trail}.{key}" if trail else key
        if key not in defaults:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(defaults[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config section {here} must be an object")
            out[key] = _merge(defaults[key], val, here)
        else:
            out[key] = val
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, then the JSON file, then CLI overrides (seed/workdir)."""
    user: dict = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as f:
                user = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file is not valid JSON: {e}")
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
    cfg = _merge(DEFAULT_CONFIG, user)
    for key, val in (overrides or {}).items():
        if val is not None:
            cfg[key] = val
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    """Eagerly build every dataclass config so bad values fail up front."""
    try:
        synth_config(cfg)
        af_config(cfg)
        committee_config(cfg)
        bot_profile(cfg)
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e))
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed must be an integer")
    if cfg["corpus"]["n_folds"] < 2:
        raise ConfigError("corpus.n_folds must be at least 2")
    if cfg["generation"]["n_samples"] < cfg["af"]["k"]:
        raise ConfigError("generation.n_samples must be at least af.k")
    bad = [f for f in cfg["validation"]["eval_folds"]
           if not (0 <= f < cfg["corpus"]["n_folds"])]
    if bad:
        raise ConfigError(f"validation.eval_folds out of range: {bad}")


def synth_config(cfg: dict) -> synth.SynthConfig:
    return synth.SynthConfig(**cfg["synth"])


def af_config(cfg: dict) -> AFConfig:
    return AFConfig(seed=cfg["seed"], **cfg["af"])


def committee_config(cfg: dict) -> CommitteeConfig:
    c = dict(cfg["committee"])
    c.pop("common_top_k", None)
    c["cnn_widths"] = tuple(c["cnn_widths"])
    return CommitteeConfig(**c)


def bot_profile(cfg: dict) -> BotProfile:
    a = cfg["annotate"]
    return BotProfile(
        p_found_best=a["p_found_best"],
        p_found_second=a["p_found_second"],
        p_gibberish=a["p_gibberish"],
        p_generated_likely=a["p_generated_likely"],
    )


# ------------------------------------------------------------------- paths


def artifact(workdir, name: str, stage: str) -> Path:
    """Resolve a required input file; a clear error names what is missing."""
    p = Path(workdir) / name
    if not p.exists():
        raise DataError(f"missing artifact {name}; run the {stage} stage first")
    return p


def lm_path(workdir, direction: str, fold: int) -> Path:
    return Path(workdir) / "lm" / f"{direction}_f{fold}.json"


def _save_lm(model: NGramLM, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model.to_dict(), f, sort_keys=True)


def _load_lm(path: Path) -> NGramLM:
    with open(path, encoding="utf-8") as f:
        return NGramLM.from_dict(json.load(f))


def _load_fold_lms(workdir, n_folds: int) -> dict:
    """fold -> (forward, backward) models; errors name the missing file."""
    out = {}
    for fold in range(n_folds):
        pair = []
        for direction in ("forward", "backward"):
            p = lm_path(workdir, direction, fold)
            if not p.exists():
                raise DataError(
                    f"missing artifact lm/{p.name}; run the train-lm stage first"
                )
            pair.append(_load_lm(p))
        out[fold] = tuple(pair)
    return out


# ------------------------------------------------------------------- stages


def stage_synth(cfg: dict, workdir: Path, manifest: Manifest) -> Path:
    records = synth.generate_corpus(synth_config(cfg), cfg["seed"])
    out = workdir / "corpus.jsonl"
    synth.write_corpus_jsonl(records, out)
    manifest.record("synth", outputs=[out], extra={"records": len(records)})
    log.info("synth: wrote %d records to %s", len(records), out)
    return out


def stage_ingest(cfg: dict, workdir: Path, manifest: Manifest) -> Path:
    corpus_path = Path(cfg["paths"]["corpus"] or workdir / "corpus.jsonl")
    if not corpus_path.exists():
        raise DataError(
            f"missing artifact {corpus_path.name}; run the synth stage "
            "or point paths.corpus at an existing corpus"
        )
    cc = cfg["corpus"]
    pairs, ingest_rejects = ingest_pairs(read_jsonl(corpus_path), cc["max_gap_seconds"])
    contexts, filter_rejects = build_contexts(
        pairs, set(cc["verb_lexicon"]), cc["min_count"], cc["min_len"], cc["max_ending_len"]
    )
    if not contexts:
        raise DataError("no contexts survived the corpus filters")
    fold_assign(contexts, cc["n_folds"], cfg["seed"])
    fold_by_id = {c.context_id: c.fold for c in contexts}

    contexts_path = workdir / "contexts.jsonl"
    rejects_path = workdir / "rejects.jsonl"
    write_contexts_jsonl(contexts, contexts_path)
    write_rejects_jsonl(ingest_rejects + filter_rejects, rejects_path)

    # LM training text: each pair contributes ONE sequence, the first and
    # second sentences concatenated, so that cross-sentence n-gram histories
    # exist at generation time. Pairs that were rejected as contexts still
    # count as fold -1 training text.
    lm_corpus_path = workdir / "lm_corpus.jsonl"
    with open(lm_corpus_path, "w", encoding="utf-8") as f:
        for p in pairs:
            rec = {
                "id": p.id,
                "tokens": p.first_sentence + p.second_sentence,
                "fold": fold_by_id.get(p.id, -1),
            }
            f.write(json.dumps(rec, sort_keys=True) + "\n")

    manifest.record(
        "ingest",
        inputs=[corpus_path],
        outputs=[contexts_path, rejects_path, lm_corpus_path],
        extra={"contexts": len(contexts), "rejected": len(ingest_rejects) + len(filter_rejects)},
    )
    log.info("ingest: %d contexts, %d rejects", len(contexts),
             len(ingest_rejects) + len(filter_rejects))
    return contexts_path


def stage_train_lm(cfg: dict, workdir: Path, manifest: Manifest) -> list:
    lm_corpus_path = artifact(workdir, "lm_corpus.jsonl", "ingest")
    seqs, folds = [], []
    for rec in read_jsonl(lm_corpus_path):
        seqs.append(list(rec["tokens"]))
        folds.append(int(rec["fold"]))
    order, discount = cfg["lm"]["order"], cfg["lm"]["discount"]
    outputs = []
    for fold in range(cfg["corpus"]["n_folds"]):
        for direction in ("forward", "backward"):
            model = train_lm(
                seqs, folds=folds, order=order, direction=direction,
                discount=discount, exclude_fold=fold,
            )
            path = lm_path(workdir, direction, fold)
            _save_lm(model, path)
            outputs.append(path)
        log.info("train-lm: fold %d models written", fold)
    manifest.record("train-lm", inputs=[lm_corpus_path], outputs=outputs)
    return outputs


def stage_generate(cfg: dict, workdir: Path, manifest: Manifest) -> Path:
    contexts_path = artifact(workdir, "contexts.jsonl", "ingest")
    contexts = read_contexts_jsonl(contexts_path)
    lms = _load_fold_lms(workdir, cfg["corpus"]["n_folds"])
    gen = cfg["generation"]
    pools = []
    short = 0
    for ctx in contexts:
        fwd, _ = lms[ctx.fold]
        pool = sample_endings(
            fwd, ctx.context_id, ctx.s + ctx.n, ctx.v_found,
            n_samples=gen["n_samples"], seed=cfg["seed"],
            context_fold=ctx.fold, max_len=gen["max_len"],
        )
        short += pool.short_pool
        pools.append(pool)
    pools_path = workdir / "pools.jsonl"
    write_pools_jsonl(pools, pools_path)
    manifest.record(
        "generate",
        inputs=[contexts_path],
        outputs=[pools_path],
        extra={"pools": len(pools), "short_pools": short},
    )
    log.info("generate: %d pools (%d short)", len(pools), short)
    return pools_path


def _context_features(args):
    ctx_records, fwd_dict, bwd_dict, vocab_dict, common_dict = args
    fwd, bwd = NGramLM.from_dict(fwd_dict), NGramLM.from_dict(bwd_dict)
    vocab = TokenVocab.from_dict(vocab_dict)
    common = CommonWordEncoder.from_dict(common_dict)
    out = []
    for cid, s, n, v_found, cand_tokens in ctx_records:
        pos = style_features(fwd, bwd, s, n, v_found, vocab, common)
        pool = [style_features(fwd, bwd, s, n, toks, vocab, common)
                for toks in cand_tokens]
        out.append((
            cid, pos.f_ppl, pos.second_ids, pos.common_ids,
            np.stack([p.f_ppl for p in pool]),
            [p.second_ids for p in pool],
            [p.common_ids for p in pool],
        ))
    return out


def build_af_dataset(cfg: dict, workdir: Path, threads: int = 1) -> AFDataset:
    """Precompute every candidate's committee features, grouped by fold."""
    contexts = read_contexts_jsonl(artifact(workdir, "contexts.jsonl", "ingest"))
    pools = {p.context_id: p for p in read_pools_jsonl(artifact(workdir, "pools.jsonl", "generate"))}
    missing = [c.context_id for c in contexts if c.context_id not in pools]
    if missing:
        raise DataError(f"pools.jsonl lacks candidates for contexts: {missing[:5]}")
    lms = _load_fold_lms(workdir, cfg["corpus"]["n_folds"])

    vocab = TokenVocab.from_sequences(
        [c.n + c.v_found for c in contexts]
        + [c.n + cand.tokens for c in contexts for cand in pools[c.context_id].candidates]
    )
    common = CommonWordEncoder.fit(
        [c.s + c.n + c.v_found for c in contexts], cfg["committee"]["common_top_k"]
    )

    by_fold: dict = {}
    for ctx in contexts:
        cands = [list(cand.tokens) for cand in pools[ctx.context_id].candidates]
        by_fold.setdefault(ctx.fold, []).append(
            (ctx.context_id, ctx.s, ctx.n, ctx.v_found, cands)
        )
    jobs = [
        (recs, lms[fold][0].to_dict(), lms[fold][1].to_dict(),
         vocab.to_dict(), common.to_dict())
        for fold, recs in sorted(by_fold.items())
    ]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
            results = list(pool.map(_context_features, jobs))
    else:
        results = [_context_features(j) for j in jobs]

    feats = {}
    for group in results:
        for cid, pos_x, pos_second, pos_common, pool_x, pool_second, pool_common in group:
            feats[cid] = AFContext(
                context_id=cid, pos_x=pos_x, pos_second=pos_second,
                pos_common=pos_common, pool_x=pool_x, pool_second=pool_second,
                pool_common=pool_common,
            )
    af_contexts = [feats[c.context_id] for c in contexts]
    return AFDataset(contexts=af_contexts, n_word_ids=len(vocab), n_common_ids=len(common))


def stage_filter(cfg: dict, workdir: Path, manifest: Manifest,
                 resume: bool = False, threads: int = 1) -> Path:
    dataset = build_af_dataset(cfg, workdir, threads)
    af_cfg = af_config(cfg)
    assignment_path = workdir / "assignment.jsonl"
    initial_path = workdir / "assignment_initial.jsonl"
    trace_path = workdir / "trace.csv"

    assignment, trace = None, None
    if resume:
        if not (assignment_path.exists() and trace_path.exists()):
            raise DataError("nothing to resume: assignment.jsonl/trace.csv not found")
        assignment, _ = load_assignment_jsonl(assignment_path)
        trace = load_trace_csv(trace_path)
        log.info("filter: resuming after iteration %d", len(trace) - 1)
    else:
        assignment = init_assignment(dataset, af_cfg.k, af_cfg.seed)
        save_assignment_jsonl(assignment, -1, initial_path)

    trace_run = list(trace or [])

    def on_iteration(it, current, row, _res):
        trace_run.append(row)
        save_assignment_jsonl(current, it, assignment_path)
        save_trace_csv(trace_run, trace_path)
        log.info("filter: iteration %d accuracy %.4f (%s)", it, row["accuracy"],
                 row["active_members"])

    assignment, trace = run_af(
        dataset, af_cfg, committee_config(cfg),
        assignment=assignment, trace=trace, on_iteration=on_iteration,
    )
    save_assignment_jsonl(assignment, len(trace) - 1, assignment_path)
    save_trace_csv(trace, trace_path)
    manifest.record(
        "filter",
        inputs=[workdir / "contexts.jsonl", workdir / "pools.jsonl"],
        outputs=[assignment_path, initial_path, trace_path],
        extra={"iterations": len(trace), "final_accuracy": trace[-1]["accuracy"]},
    )
    log.info("filter: stopped after %d iterations at accuracy %.4f",
             len(trace), trace[-1]["accuracy"])
    return assignment_path


def _load_assembly_inputs(cfg: dict, workdir: Path):
    contexts = read_contexts_jsonl(artifact(workdir, "contexts.jsonl", "ingest"))
    pools = {p.context_id: p for p in read_pools_jsonl(artifact(workdir, "pools.jsonl", "generate"))}
    assignment, _ = load_assignment_jsonl(artifact(workdir, "assignment.jsonl", "filter"))
    return contexts, pools, assignment


def open_store(cfg: dict, workdir: Path) -> ValidationStore:
    root = workdir / "validation"
    root.mkdir(parents=True, exist_ok=True)
    return ValidationStore(root, lease_seconds=cfg["validation"]["lease_seconds"])


def ensure_tasks(cfg: dict, store: ValidationStore, contexts, pools, assignment) -> int:
    """Create round-0 annotation tasks for contexts that have none yet."""
    existing = {t.context_id for t in store.all_tasks()}
    vc = cfg["validation"]
    created = 0
    for ctx in contexts:
        if ctx.context_id in existing:
            continue
        n_required = 1
        if vc["audit_rate"] > 0 and rng_for(
            cfg["seed"], "audit", ctx.context_id
        ).random() < vc["audit_rate"]:
            n_required = vc["audit_annotations"]
        task = make_task(
            ctx, pools[ctx.context_id], assignment[ctx.context_id],
            cfg["seed"], n_required=n_required,
        )
        store.add_task(task)
        created += 1
    return created


def _route_done_tasks(cfg: dict, store: ValidationStore, contexts, pools, assignment) -> tuple:
    """Assemble every done task; route Reannotate results to new tasks.

    Returns (questions, rejects, n_new_tasks). Routing is idempotent: a done
    task re-assembles to the same result, and successor ids are derived.
    """
    ctx_by_id = {c.context_id: c for c in contexts}
    questions, rejects, created = [], [], 0
    for task in store.all_tasks():
        if task.status != "done":
            continue
        ctx = ctx_by_id[task.context_id]
        a_i = assignment[task.context_id]
        unseen = len(set(a_i) - set(task.shown_pool_indices))
        result = assemble(
            task, store.responses_for(task.task_id), cfg["seed"],
            eval_folds=tuple(cfg["validation"]["eval_folds"]),
            available_unseen=unseen,
        )
        if isinstance(result, Reannotate):
            successor = make_reannotation_task(
                task, result.flagged, ctx, pools[task.context_id], a_i, cfg["seed"]
            )
            if successor is None:  # should be unreachable given available_unseen
                rejects.append({"task_id": task.task_id, "reason": "pool exhausted"})
                continue
            store.add_task(successor)
            store.mark_reannotate(task.task_id, result.flagged)
            created += 1
        elif isinstance(result, Reject):
            rejects.append({"task_id": result.task_id, "reason": result.reason})
        else:
            questions.extend(result)
    return questions, rejects, created


def stage_annotate(cfg: dict, workdir: Path, manifest: Manifest) -> dict:
    """Drive the queue with scripted annotators until no task needs work."""
    contexts, pools, assignment = _load_assembly_inputs(cfg, workdir)
    store = open_store(cfg, workdir)
    ensure_tasks(cfg, store, contexts, pools, assignment)

    found_by_context = {c.context_id: " ".join(c.v_found) for c in contexts}
    profile = bot_profile(cfg)
    bots = [
        ScriptedAnnotator(f"bot{j}", found_by_context, profile, cfg["seed"])
        for j in range(cfg["annotate"]["n_annotators"])
    ]

    responses = 0
    for round_no in range(cfg["annotate"]["max_rounds"]):
        answered = 0
        for bot in bots:
            while True:
                task = store.claim_next(bot.annotator_id)
                if task is None:
                    break
                payload = bot.respond(task.client_view())
                store.submit_response(task.task_id, payload)
                answered += 1
        responses += answered
        _, _, created = _route_done_tasks(cfg, store, contexts, pools, assignment)
        log.info("annotate: round %d, %d responses, %d reannotation tasks",
                 round_no, answered, created)
        if created == 0:
            break
    else:
        raise DataError("annotation did not settle within annotate.max_rounds")

    manifest.record(
        "annotate",
        inputs=[workdir / "assignment.jsonl"],
        outputs=[store.tasks_path, store.responses_path],
        extra={"responses": responses, "tasks": len(store.all_tasks())},
    )
    return store.progress()


def stage_assemble(cfg: dict, workdir: Path, manifest: Manifest) -> Path:
    contexts, pools, assignment = _load_assembly_inputs(cfg, workdir)
    store = open_store(cfg, workdir)
    if not store.all_tasks():
        raise DataError("missing artifact validation/tasks.jsonl; run the annotate stage first")
    pending = [t.task_id for t in store.all_tasks()
               if t.status not in ("done", "reannotate")]
    if pending:
        raise DataError(
            f"{len(pending)} tasks still need responses (e.g. {pending[0]}); "
            "finish the annotate stage first"
        )
    questions, rejects, created = _route_done_tasks(cfg, store, contexts, pools, assignment)
    if created:
        raise DataError(
            f"{created} tasks were routed to reannotation; run the annotate stage again"
        )
    assembled_path = workdir / "assembled.jsonl"
    rejected_path = workdir / "rejected.jsonl"
    write_assembled_jsonl(questions, assembled_path)
    with open(rejected_path, "w", encoding="utf-8") as f:
        for rec in sorted(rejects, key=lambda r: r["task_id"]):
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    manifest.record(
        "assemble",
        inputs=[store.tasks_path, store.responses_path],
        outputs=[assembled_path, rejected_path],
        extra={"questions": len(questions), "rejected": len(rejects)},
    )
    log.info("assemble: %d questions, %d rejected", len(questions), len(rejects))
    return assembled_path


def stage_evaluate(cfg: dict, workdir: Path, manifest: Manifest) -> Path:
    assembled_path = artifact(workdir, "assembled.jsonl", "assemble")
    questions = read_assembled_jsonl(assembled_path)
    eval_folds = set(cfg["validation"]["eval_folds"])
    train = [q for q in questions if q.fold not in eval_folds]
    held_out = [q for q in questions if q.fold in eval_folds]
    if not train or not held_out:
        raise DataError("assembled.jsonl does not cover both train and eval folds")
    ec = cfg["eval"]
    report = evaluate(
        train, {"train": train, "eval": held_out}, seed=cfg["seed"],
        bag_epochs=ec["bag_epochs"], dual_epochs=ec["dual_epochs"],
        embed_dim=ec["embed_dim"],
    )
    report["stats"] = stats_report(questions)  # whole dataset, no split overlap

    if ec["bias_contrast"]:
        report["bias_contrast"] = bias_contrast(cfg, workdir)

    json_path = workdir / "eval.json"
    write_report(report, json_path, workdir / "eval.txt", workdir / "losses.csv")
    manifest.record(
        "evaluate",
        inputs=[assembled_path],
        outputs=[json_path, workdir / "eval.txt", workdir / "losses.csv"],
    )
    return json_path


def bias_contrast(cfg: dict, workdir: Path) -> dict:
    """Shallow-baseline accuracy before vs after filtering.

    Builds mechanical 4-way questions from the initial (random) assignment
    and from the final one, trains on non-eval folds, scores eval folds.
    """
    contexts = read_contexts_jsonl(artifact(workdir, "contexts.jsonl", "ingest"))
    pools = read_pools_jsonl(artifact(workdir, "pools.jsonl", "generate"))
    final, _ = load_assignment_jsonl(artifact(workdir, "assignment.jsonl", "filter"))
    initial, _ = load_assignment_jsonl(artifact(workdir, "assignment_initial.jsonl", "filter"))
    eval_folds = set(cfg["validation"]["eval_folds"])
    fold_of = {c.context_id: c.fold for c in contexts}
    out = {}
    for name, assignment in (("initial", initial), ("final", final)):
        qs = questions_from_assignment(contexts, pools, assignment, cfg["seed"])
        train = [q for q in qs
                 if fold_of[q.question_id.removesuffix("-mech")] not in eval_folds]
        held = [q for q in qs
                if fold_of[q.question_id.removesuffix("-mech")] in eval_folds]
        rep = evaluate(
            train, {"eval": held}, seed=cfg["seed"],
            bag_epochs=cfg["eval"]["bag_epochs"],
            dual_epochs=cfg["eval"]["dual_epochs"],
            embed_dim=cfg["eval"]["embed_dim"],
        )
        out[name] = {k: v["accuracy"] for k, v in rep["baselines"]["eval"].items()}
    return out


def stage_report(cfg: dict, workdir: Path, manifest: Manifest) -> Path:
    trace = load_trace_csv(artifact(workdir, "trace.csv", "filter"))
    eval_path = artifact(workdir, "eval.json", "evaluate")
    with open(eval_path, encoding="utf-8") as f:
        eval_report = json.load(f)

    report_dir = workdir / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    series_path = report_dir / "accuracy_vs_iteration.csv"
    with open(series_path, "w", encoding="utf-8") as f:
        f.write("iteration,accuracy,active_members\n")
        for row in trace:
            f.write(f"{row['iteration']},{row['accuracy']},{row['active_members']}\n")

    af_cfg = af_config(cfg)
    tail = [r["accuracy"] for r in trace[-af_cfg.window:]]
    summary = {
        "iterations": len(trace),
        "chance": af_cfg.chance,
        "final_accuracy": trace[-1]["accuracy"],
        "trailing_mean_accuracy": float(np.mean(tail)),
        "converged": len(trace) >= af_cfg.window
        and float(np.mean(tail)) <= af_cfg.chance + af_cfg.tolerance,
        "dataset": eval_report["stats"],
        "baselines": eval_report["baselines"],
        "bias_contrast": eval_report.get("bias_contrast"),
    }
    summary_path = report_dir / "summary.json"
    with open(summary_path, "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")

    lines = [
        f"adversarial filtering: {summary['iterations']} iterations, "
        f"final accuracy {summary['final_accuracy']:.4f} "
        f"(chance {summary['chance']:.4f}, converged: {summary['converged']})",
    ]
    if summary["bias_contrast"]:
        bc = summary["bias_contrast"]
        lines.append(
            "bias contrast (eval folds): "
            + ", ".join(
                f"{b} {bc['initial'][b]:.3f} -> {bc['final'][b]:.3f}"
                for b in ("bag_ngram", "length")
            )
        )
    text_path = report_dir / "summary.txt"
    with open(text_path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")

    manifest.record(
        "report",
        inputs=[workdir / "trace.csv", eval_path],
        outputs=[series_path, summary_path, text_path],
    )
    return summary_path


STAGES = {
    "synth": stage_synth,
    "ingest": stage_ingest,
    "train-lm": stage_train_lm,
    "generate": stage_generate,
    "filter": stage_filter,
    "annotate": stage_annotate,
    "assemble": stage_assemble,
    "evaluate": stage_evaluate,
    "report": stage_report,
}


def run_stage(name: str, cfg: dict, resume: bool = False, force: bool = False,
              threads: int = 1) -> None:
    workdir = Path(cfg["workdir"])
    workdir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest.load(workdir)
    manifest.check(config_hash(cfg), cfg["seed"], force=force)
    manifest.save()
    if name == "filter":
        stage_filter(cfg, workdir, manifest, resume=resume, threads=threads)
    else:
        STAGES[name](cfg, workdir, manifest)
