"""Command-line entry point: ``stitchformer <command> [--flags] [--config FILE]``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
import traceback
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import tensor as T
from .config import COMMANDS, FIELD_TYPES, RunConfig, resolve
from .errors import StitchformerError, UsageError

_HELP = {
    "gen-data": "generate a sub-optimal dataset plus expert demos",
    "train": "train ContextFormer on a dataset",
    "eval": "evaluate a trained checkpoint",
    "stitch-exp": "ContextFormer vs the zero-token control on identical data",
    "verify-theorem": "exhaustively check the objective's decomposition",
    "export-metrics": "convert a metrics or report file to CSV and a plot",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stitchformer", description="Latent-conditioned transformer imitation on toy stitching tasks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for cmd in COMMANDS:
        p = sub.add_parser(cmd, help=_HELP[cmd])
        p.add_argument("--config", default=None, help="flat key = value file; flags override it")
        for f in fields(RunConfig):
            if f.name == "command":
                continue
            kind = {"int": int, "float": float, "str": str}[FIELD_TYPES[f.name]]
            p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=kind, default=None,
                           help=f"(default: {f.default})")
    return parser


def parse_config(argv) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    config_file = ns.pop("config")
    return resolve(ns, config_file)


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _train_config(cfg: RunConfig, conditioning: str):
    from .objectives import LossConfig, TrainConfig

    return TrainConfig(batch_size=cfg.batch_size, groups_per_epoch=cfg.groups_per_epoch, epochs=cfg.epochs,
                       context=cfg.context, lr=cfg.lr, weight_decay=cfg.weight_decay,
                       warmup_steps=cfg.warmup_steps, z_lr=cfg.z_lr, z_warmup_steps=cfg.z_warmup_steps,
                       conditioning=conditioning, seed=cfg.seed,
                       loss=LossConfig(cfg.lambda1, cfg.lambda2, cfg.norm, cfg.clip))


def _model_kwargs(cfg: RunConfig):
    shared = dict(z_dim=cfg.z_dim, hidden=cfg.hidden, layers=cfg.layers, dropout=cfg.dropout)
    return dict(shared, heads=cfg.heads), dict(shared, heads=cfg.encoder_heads)


def experiment_config(cfg: RunConfig, conditioning: str | None = None):
    """The stitching-experiment settings a run configuration describes."""
    from .evaluation import ExperimentConfig

    pk, ek = _model_kwargs(cfg)
    return ExperimentConfig(_train_config(cfg, conditioning or cfg.conditioning), pk, ek,
                            cfg.eval_episodes, cfg.eval_seed)


def _load_dataset(cfg: RunConfig):
    from .data import load_dataset

    if not cfg.dataset:
        raise UsageError("dataset path required (--dataset)", field="dataset")
    if not Path(cfg.dataset).is_file():
        raise UsageError(f"dataset {cfg.dataset} does not exist", field="dataset")
    return load_dataset(cfg.dataset)


# -- commands --------------------------------------------------------------------
def cmd_gen_data(cfg: RunConfig, out: Path) -> dict:
    from .data import build_dataset, save_dataset

    ds = build_dataset(cfg.env, cfg.episodes, cfg.demos, cfg.seed, cfg.conditioning)
    path = Path(cfg.dataset) if cfg.dataset else out / "dataset.jsonl"
    digest = save_dataset(path, ds)
    return {"dataset": str(path), "content_hash": digest, "suboptimal": len(ds.suboptimal),
            "expert": len(ds.expert), "env": cfg.env, "conditioning": cfg.conditioning}


def cmd_train(cfg: RunConfig, out: Path) -> dict:
    from .objectives import build_learner, learner_arrays, learner_config, train

    ds = _load_dataset(cfg)
    spec = ds.make_env().spec
    pk, ek = _model_kwargs(cfg)
    learner = build_learner(spec.obs_dim, spec.act_dim, _train_config(cfg, ds.manifest.conditioning),
                            ds.manifest.obs_mean, ds.manifest.obs_std, pk, ek)
    metrics = out / "metrics.jsonl"
    metrics.unlink(missing_ok=True)
    history = train(learner, ds.expert, ds.suboptimal, metrics)
    conf = learner_config(learner)
    conf["env"] = ds.env_name
    conf["dataset_hash"] = ds.manifest.content_hash
    ckpt = Path(cfg.checkpoint) if cfg.checkpoint else out / "checkpoint.sfck"
    T.save_checkpoint(ckpt, learner_arrays(learner), conf, T.get_precision())
    return {"checkpoint": str(ckpt), "metrics": str(metrics), "epochs": len(history),
            "final": history[-1] if history else None, "z_star": learner.z_star.value().tolist()}


def load_policy(path):
    """Rebuild the policy and z* from a checkpoint, validating the stored architecture."""
    from .errors import ContractError
    from .models import PolicyConfig, PolicyModel

    arrays, conf, _ = T.load_checkpoint(path)
    try:
        pcfg = PolicyConfig(**conf["policy"])
    except (KeyError, TypeError) as exc:
        raise ContractError(f"checkpoint {path} has no valid policy config ({exc})") from None
    policy = PolicyModel(pcfg)
    policy.load_state_dict({k[len("policy."):]: v for k, v in arrays.items() if k.startswith("policy.")})
    return policy, arrays["z_star"], arrays["obs_mean"], arrays["obs_std"], conf


def cmd_eval(cfg: RunConfig, out: Path) -> dict:
    from .envs import make_env
    from .evaluation import rollout_eval

    if not cfg.checkpoint:
        raise UsageError("checkpoint path required (--checkpoint)", field="checkpoint")
    policy, z, mean, std, conf = load_policy(cfg.checkpoint)
    env = make_env(conf.get("env", cfg.env))
    rep = rollout_eval(policy, z, env, cfg.eval_episodes, cfg.eval_seed, mean, std).to_dict()
    rep["env"] = env.spec.name
    _write_json(out / "eval_report.json", rep)
    return rep


def cmd_stitch_exp(cfg: RunConfig, out: Path) -> dict:
    from .data import build_dataset
    from .evaluation import demo_sweep, stitching_experiment
    from .plotting import plot_sweep

    xcfg = experiment_config(cfg)
    if cfg.demo_counts():
        reports = demo_sweep(lambda n: build_dataset(cfg.env, cfg.episodes, n, cfg.seed, cfg.conditioning),
                             cfg.demo_counts(), xcfg)
        for rep in reports:
            _write_json(out / f"stitch_report_demos{rep['demos']}.json", rep)
        plot_sweep(reports, out / "demo_sweep.png")
        return {"sweep": [{k: r[k] for k in ("demos", "success_gap")} |
                          {"contextformer": r["contextformer"]["success_rate"],
                           "control": r["control"]["success_rate"]} for r in reports]}
    if cfg.dataset:
        ds = _load_dataset(cfg)
        xcfg.train.conditioning = ds.manifest.conditioning
    else:
        ds = build_dataset(cfg.env, cfg.episodes, cfg.demos, cfg.seed, cfg.conditioning)
    metrics = out / "metrics.jsonl"
    metrics.unlink(missing_ok=True)
    rep = stitching_experiment(ds, xcfg, metrics)
    rep.pop("_learner")
    _write_json(out / "stitch_report.json", rep)
    return {k: rep[k] for k in ("env", "conditioning", "demos", "success_gap", "training_steps")} | {
        "contextformer": rep["contextformer"]["success_rate"], "control": rep["control"]["success_rate"]}


def cmd_verify_theorem(cfg: RunConfig, out: Path) -> dict:
    from .theorem import check_theorem

    rep = check_theorem(cfg.instances, cfg.seed)
    _write_json(out / "theorem_report.json", rep)
    return rep


def cmd_export_metrics(cfg: RunConfig, out: Path) -> dict:
    from .plotting import plot_metrics

    if not cfg.input:
        raise UsageError("input file required (--input)", field="input")
    src = Path(cfg.input)
    if not src.is_file():
        raise UsageError(f"input {src} does not exist", field="input")
    text = src.read_text(encoding="utf-8")
    if src.suffix == ".jsonl":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    else:
        rows = _report_rows(json.loads(text))
    if not rows:
        raise UsageError(f"input {src} holds no records", field="input")
    dest = out / (src.stem + ".csv")
    keys = list(rows[0])
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        writer.writerows(rows)
    result = {"csv": str(dest), "rows": len(rows)}
    if "loss_a" in keys:
        result["figure"] = str(plot_metrics(rows, out / (src.stem + ".png")))
    return result


def _report_rows(rep: dict) -> list:
    """Flatten an evaluation or stitching report into per-episode rows."""
    arms = {k: rep[k] for k in ("contextformer", "control") if k in rep} or {"policy": rep}
    rows = []
    for arm, r in arms.items():
        if "returns" not in r:
            continue
        for i, (ret, ok) in enumerate(zip(r["returns"], r["successes"])):
            rows.append({"arm": arm, "episode": i, "return": ret, "success": int(ok)})
    if not rows:
        rows = [{k: v for k, v in rep.items() if not isinstance(v, (dict, list))}]
    return rows


COMMAND_FUNCS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "stitch-exp": cmd_stitch_exp,
                 "verify-theorem": cmd_verify_theorem, "export-metrics": cmd_export_metrics}


def dispatch(cfg: RunConfig) -> int:
    from threadpoolctl import threadpool_limits

    out = _out(cfg)
    (out / "config.cfg").write_text(cfg.to_text(), encoding="utf-8")
    (out / "error.json").unlink(missing_ok=True)
    T.set_precision(cfg.precision)
    with threadpool_limits(limits=cfg.threads):
        result = COMMAND_FUNCS[cfg.command](cfg, out)
    print(json.dumps(result, indent=2, sort_keys=True, default=_jsonable))
    if cfg.command == "verify-theorem" and not result["pass"]:
        return 1
    return 0


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return str(x)


def _error_report(exc: Exception, argv) -> dict:
    return {"error": type(exc).__name__, "message": str(exc), "field": getattr(exc, "field", None),
            "argv": list(argv)}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    cfg = None
    try:
        cfg = parse_config(argv)
        return dispatch(cfg)
    except (StitchformerError, OSError) as exc:
        report = _error_report(exc, argv)
        status = 2 if isinstance(exc, UsageError) else 1
    except Exception as exc:  # unexpected failure: keep the traceback in the report
        report = _error_report(exc, argv)
        report["traceback"] = traceback.format_exc()
        status = 1
    print(json.dumps(report, sort_keys=True), file=sys.stderr)
    if cfg is not None:
        try:
            _write_json(_out(cfg) / "error.json", report)
        except OSError:
            pass
    return status


if __name__ == "__main__":
    sys.exit(main())
