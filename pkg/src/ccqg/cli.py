"""Pipeline orchestration: one executable, one subcommand per stage.

Every subcommand reads a flat key = value config (overridable with
`--key value` flags), writes its artifacts under `output_dir`, and
prints a one-line summary `<command> ok <key-metrics> <elapsed-ms>`.
Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import grad_check
from .annotations import parse_conllu, to_conllu
from .config import (
    PipelineConfig,
    apply_overrides,
    config_keys,
    model_config,
    parse_pairs,
    read_config_file,
    require,
    train_config,
)
from .data import (
    Vocab,
    annotate_fallback_corpus,
    build_vocab,
    corpus_features,
    filter_answerable,
    label_corpus,
    load_qa_json,
    model_tokens,
    read_instances,
    split_dataset,
    write_instances,
    write_split_manifest,
)
from .estimator import (
    ComplexityLabel,
    calibrate_threshold,
    classify,
    coerce_label,
    cpx_score,
    evaluate_estimator,
    fit_normalizer,
    load_normalizer,
    normalize,
    save_normalizer,
)
from .metrics import bleu4, corpus_rouge_l, pairwise_diversity
from .model import CCQGModel, LEVELS, ModelConfig
from .training import (
    init_template_bank,
    install_template_banks,
    prepare_instances,
    train_loop,
)


class UsageError(Exception):
    pass


class NumericFailure(RuntimeError):
    """A thresholded numeric check did not meet its target."""


# fd step chosen for conditioning at this scale; see the gradcheck command
GRADCHECK_STEP = 2e-3
GRADCHECK_TOLERANCE = 1e-4


def _outdir(config: PipelineConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_annotations(path: str) -> dict:
    docs = parse_conllu(Path(path).read_text(encoding="utf-8"))
    return {doc.doc_id: doc for doc in docs}


def _read_lines(path: str) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


def _cmd_prepare(config: PipelineConfig) -> str:
    require(config, "prepare", "corpus", "output_dir")
    out = _outdir(config)
    instances = load_qa_json(config.corpus, config.format)
    kept = filter_answerable(instances)
    split = split_dataset(kept, seed=config.seed)
    write_instances(out / "train.jsonl", split.train)
    write_instances(out / "dev.jsonl", split.dev)
    write_instances(out / "test.jsonl", split.test)
    write_split_manifest(out / "split.json", split)
    return (f"loaded={len(instances)} answerable={len(kept)} "
            f"train={len(split.train)} dev={len(split.dev)} "
            f"test={len(split.test)}")


def _cmd_annotate_fallback(config: PipelineConfig) -> str:
    require(config, "annotate-fallback", "corpus", "output_dir")
    out = _outdir(config)
    instances = read_instances(config.corpus)
    docs = annotate_fallback_corpus(instances)
    (out / "annotations.conllu").write_text(
        to_conllu(list(docs.values())), encoding="utf-8")
    return f"instances={len(instances)} docs={len(docs)}"


def _cmd_calibrate(config: PipelineConfig) -> str:
    require(config, "calibrate", "corpus", "annotations", "output_dir")
    out = _outdir(config)
    instances = read_instances(config.corpus)
    annotations = _read_annotations(config.annotations)
    scored, features, skipped = corpus_features(
        instances, annotations, alpha=config.alpha, f3_mode=config.f3_mode)
    gold = []
    for inst in scored:
        if inst.gold_complexity is None:
            raise ValueError(f"instance {inst.id}: calibration needs gold labels")
        gold.append(inst.gold_complexity)
    normalizer = fit_normalizer(features)
    scores = [cpx_score(normalize(f, normalizer)) for f in features]
    lam = calibrate_threshold(scores, gold)
    normalizer = dataclasses.replace(normalizer, lam=lam)
    save_normalizer(out / "normalizer.txt", normalizer)
    report = evaluate_estimator([classify(s, lam) for s in scores], gold)
    return (f"lambda={lam:.2f} macro_f1={report.macro_f1:.4f} "
            f"scored={len(scored)} skipped={len(skipped)}")


def _cmd_label(config: PipelineConfig) -> str:
    require(config, "label", "corpus", "annotations", "normalizer",
            "output_dir")
    out = _outdir(config)
    instances = read_instances(config.corpus)
    normalizer = load_normalizer(config.normalizer)
    annotations = _read_annotations(config.annotations)
    labeled, report = label_corpus(
        instances, normalizer, annotations,
        alpha=config.alpha, f3_mode=config.f3_mode)
    write_instances(out / "labeled.jsonl", labeled)
    return (f"simple={report['simple']} complex={report['complex']} "
            f"skipped={len(report['skipped'])}")


def _cmd_eval_estimator(config: PipelineConfig) -> str:
    require(config, "eval-estimator", "corpus", "output_dir")
    out = _outdir(config)
    instances = read_instances(config.corpus)
    pairs = [
        (inst.predicted_complexity, inst.gold_complexity)
        for inst in instances
        if inst.predicted_complexity is not None
        and inst.gold_complexity is not None
    ]
    if not pairs:
        raise ValueError(
            f"{config.corpus}: no instances carry both gold and predicted labels")
    report = evaluate_estimator([p for p, _ in pairs], [g for _, g in pairs])
    cm = report.confusion
    lines = [
        f"n={len(pairs)}",
        f"ts_ps={cm.ts_ps}", f"ts_pc={cm.ts_pc}",
        f"tc_ps={cm.tc_ps}", f"tc_pc={cm.tc_pc}",
        f"f1_simple={report.f1_simple!r}",
        f"f1_complex={report.f1_complex!r}",
        f"macro_f1={report.macro_f1!r}",
        f"weighted_f1={report.weighted_f1!r}",
    ]
    (out / "estimator_report.txt").write_text("\n".join(lines) + "\n",
                                              encoding="utf-8")
    return (f"n={len(pairs)} macro_f1={report.macro_f1:.4f} "
            f"weighted_f1={report.weighted_f1:.4f}")


def _cmd_cluster_templates(config: PipelineConfig) -> str:
    require(config, "cluster-templates", "corpus", "output_dir")
    out = _outdir(config)
    instances = read_instances(config.corpus)
    mc, tc = model_config(config), train_config(config)
    banks = {
        level.value: init_template_bank(instances, level, mc, tc).tolist()
        for level in LEVELS
    }
    (out / "banks.json").write_text(
        json.dumps(banks, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return f"levels={len(banks)} n_pi={mc.n_pi} dim={mc.d_template}"


def _load_banks(path: str, mc: ModelConfig) -> dict[str, np.ndarray]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    banks = {}
    for level in LEVELS:
        if level.value not in payload:
            raise ValueError(f"{path}: missing bank for level {level.value!r}")
        bank = np.array(payload[level.value], dtype=np.float64)
        if bank.shape != (mc.n_pi, mc.d_template):
            raise ValueError(
                f"{path}: bank {level.value!r} has shape {bank.shape}, "
                f"expected {(mc.n_pi, mc.d_template)}")
        banks[level.value] = bank
    return banks


def _cmd_train(config: PipelineConfig) -> str:
    require(config, "train", "train_instances", "dev_instances", "output_dir")
    out = _outdir(config)
    train_insts = read_instances(config.train_instances)
    dev_insts = read_instances(config.dev_instances)
    mc, tc = model_config(config), train_config(config)
    vocab = build_vocab(train_insts, config.max_vocab)
    model = CCQGModel(mc, vocab, seed=config.seed)
    if config.banks:
        banks = _load_banks(config.banks, mc)
        model.params["tpl_simple"].data[...] = banks["simple"]
        model.params["tpl_complex"].data[...] = banks["complex"]
    else:
        install_template_banks(model, train_insts, tc)
    train_examples = prepare_instances(model, train_insts)
    dev_examples = prepare_instances(model, dev_insts)
    report = train_loop(model, train_examples, dev_examples, tc)
    model.save(out / "checkpoint.json")
    vocab.save(out / "vocab.txt")
    payload = {
        "best_epoch": report.best_epoch,
        "converged": report.converged,
        "epochs": [
            {"train_nll": row.train_nll, "dev_nll": row.dev_nll,
             "selection_counts": list(row.selection_counts)}
            for row in report.epochs
        ],
    }
    (out / "train_report.json").write_text(
        json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    best = report.epochs[report.best_epoch].dev_nll
    return (f"epochs={len(report.epochs)} best_epoch={report.best_epoch} "
            f"dev_nll={best:.6f} converged={str(report.converged).lower()}")


def _cmd_generate(config: PipelineConfig) -> str:
    require(config, "generate", "checkpoint", "vocab", "input", "output_dir")
    out = _outdir(config)
    level = coerce_label(config.complexity)
    vocab = Vocab.load(config.vocab)
    model = CCQGModel.load(config.checkpoint, vocab)
    rows = []
    for lineno, line in enumerate(_read_lines(config.input), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(
                f"{config.input}:{lineno}: expected passage<TAB>answer")
        tokens, expert, _ = model.generate(
            model_tokens(parts[0]), model_tokens(parts[1]), level)
        question = " ".join(tokens)
        print(f"{question}\t{expert}")
        rows.append(f"{question}\t{expert}")
    if not rows:
        raise ValueError(f"{config.input}: no passage/answer rows")
    (out / "generated.tsv").write_text("\n".join(rows) + "\n",
                                       encoding="utf-8")
    (out / "questions.txt").write_text(
        "\n".join(row.rsplit("\t", 1)[0] for row in rows) + "\n",
        encoding="utf-8")
    return f"questions={len(rows)} complexity={level.value}"


def _cmd_eval_qg(config: PipelineConfig) -> str:
    require(config, "eval-qg", "generated", "references", "output_dir")
    out = _outdir(config)
    candidates = [model_tokens(l) for l in _read_lines(config.generated)]
    references = [model_tokens(l) for l in _read_lines(config.references)]
    metrics = {
        "bleu4": bleu4(candidates, references),
        "rouge_l": corpus_rouge_l(candidates, references),
    }
    if config.generated_simple and config.generated_complex:
        simple = [model_tokens(l) for l in _read_lines(config.generated_simple)]
        cplx = [model_tokens(l) for l in _read_lines(config.generated_complex)]
        metrics["pairwise_diversity"] = pairwise_diversity(simple, cplx)
    lines = [f"{key}={metrics[key]!r}" for key in sorted(metrics)]
    (out / "qg_eval.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return " ".join(f"{key}={metrics[key]:.4f}" for key in sorted(metrics))


def _cmd_gradcheck(config: PipelineConfig) -> str:
    vocab = Vocab([f"w{i}" for i in range(16)])
    mc = ModelConfig(n_z=2, n_pi=3, top_k=2, d_complexity=4, d_expert=4,
                     d_template=4, hidden=8, d_word=8, max_decode_len=10)
    model = CCQGModel(mc, vocab, seed=config.seed)
    prep = model.prepare("w1 w2 zebra w3".split(), ["w2"],
                         "w1 zebra ?".split())

    def loss():
        return ad.mul(
            model.sequence_log_prob(prep, ComplexityLabel.COMPLEX, 1),
            ad.scalar(-1.0))

    worst = max(
        grad_check(loss, {name: p}, h=GRADCHECK_STEP)
        for name, p in model.params.items()
    )
    print(f"max relative error {worst:.3e}")
    if worst >= GRADCHECK_TOLERANCE:
        raise NumericFailure(
            f"gradient check failed: max relative error {worst:.3e} "
            f">= {GRADCHECK_TOLERANCE}")
    return f"max_rel_err={worst:.3e} params={len(model.params)}"


COMMANDS = {
    "prepare": _cmd_prepare,
    "annotate-fallback": _cmd_annotate_fallback,
    "calibrate": _cmd_calibrate,
    "label": _cmd_label,
    "eval-estimator": _cmd_eval_estimator,
    "cluster-templates": _cmd_cluster_templates,
    "train": _cmd_train,
    "generate": _cmd_generate,
    "eval-qg": _cmd_eval_qg,
    "gradcheck": _cmd_gradcheck,
}

USAGE = """usage: ccqg <command> [--config FILE] [--key value ...]

commands:
  prepare            load a raw corpus, filter, and split 80/10/10
  annotate-fallback  heuristic CoNLL-U annotations for prepared instances
  calibrate          fit feature normalizer and decision threshold
  label              attach complexity labels using a normalizer
  eval-estimator     score predicted vs gold complexity labels
  cluster-templates  build per-level template banks from question clusters
  train              run hard-EM training, save checkpoint + report
  generate           decode questions for passage/answer rows at one level
  eval-qg            BLEU-4 / ROUGE-L (and diversity) for generated text
  gradcheck          finite-difference audit of the model gradients

config keys (file or --key value): """ + ", ".join(config_keys())


def _parse_flags(argv: list[str]) -> tuple[dict[str, str], str | None]:
    overrides: dict[str, str] = {}
    config_path = None
    known = set(config_keys())
    i = 0
    while i < len(argv):
        flag = argv[i]
        if not flag.startswith("--"):
            raise UsageError(f"expected a --key flag, got {flag!r}")
        key = flag[2:]
        if i + 1 >= len(argv):
            raise UsageError(f"flag {flag} needs a value")
        value = argv[i + 1]
        if key == "config":
            config_path = value
        elif key in known:
            overrides[key] = value
        else:
            raise UsageError(f"unknown flag {flag}")
        i += 2
    return overrides, config_path


def run_command(argv: list[str]) -> int:
    if not argv:
        print(USAGE, file=sys.stderr)
        return 1
    command = argv[0]
    if command in ("-h", "--help", "help"):
        print(USAGE)
        return 0
    if command not in COMMANDS:
        print(f"unknown command {command!r}\n{USAGE}", file=sys.stderr)
        return 1
    try:
        overrides, config_path = _parse_flags(argv[1:])
    except UsageError as exc:
        print(f"{exc}\n{USAGE}", file=sys.stderr)
        return 1
    started = time.perf_counter()
    try:
        pairs = read_config_file(config_path) if config_path else {}
        config = apply_overrides(parse_pairs(pairs), overrides)
        metrics = COMMANDS[command](config)
    except NumericFailure as exc:
        print(f"{command}: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"{command}: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"{command}: {exc}", file=sys.stderr)
        return 3
    elapsed_ms = int((time.perf_counter() - started) * 1000)
    print(f"{command} ok {metrics} {elapsed_ms}ms")
    return 0


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
