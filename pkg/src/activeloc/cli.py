"""Command line entry point: ``activeloc run|train|eval|render|maps generate|selftest``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import metrics, selftest
from .cem import write_curve_csv
from .config import ConfigError, ExperimentConfig, load_config
from .episode import EpisodeError
from .experiment import Job, _run_job, evaluate, load_corpus, run_experiment, train_policy, write_corpus
from .mapgen import split_corpus
from .policies import load_policy, save_policy
from .render import render_trajectory

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_EPISODE = 2


def _config(path) -> ExperimentConfig:
    return load_config(path) if path else ExperimentConfig().validate()


def cmd_run(args):
    cfg = _config(args.config)
    summary, status = run_experiment(cfg, args.out)
    print(metrics.summary_table(summary), end="")
    return status


def cmd_train(args):
    cfg = _config(args.config)
    seen, _ = load_corpus(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    log_path = out.with_suffix(".log")
    with open(log_path, "w") as lf:
        res = train_policy(cfg, seen, callback=lambda p: print(f"gen {p.generation}: mean {p.mean_return:.3f} elite {p.elite_return:.3f} best {p.best_return:.3f}"), log_file=lf)
    save_policy(out, res.best_params, cfg.arch())
    write_curve_csv(out.with_suffix(".csv"), res.curve)
    print(f"wrote {out}")
    return EXIT_OK


def _params_for(cfg, policy, policy_file):
    if policy != "learned":
        return None
    path = policy_file or cfg.policy_file
    if not path:
        raise ConfigError("learned policy needs --policy-file or policy_file")
    return load_policy(path)[0]


def cmd_eval(args):
    cfg = _config(args.config)
    seen, unseen = load_corpus(cfg)
    maps = seen if args.split == "seen" else unseen
    params = _params_for(cfg, args.policy, args.policy_file)
    jobs, results = evaluate(cfg, args.policy, args.task, args.split, maps, params, args.episodes)
    good = [r for r in results if not isinstance(r, Exception)]
    print(metrics.results_csv(metrics.episode_row(r, args.split) for r in good), end="")
    if good:
        rep = metrics.aggregate(good)
        print(f"# rmse_pos_cm {rep.rmse_position_cm:.2f} rmse_orient_rad {rep.rmse_orientation_rad:.3f} n {rep.n_episodes}")
    return EXIT_OK if len(good) == len(results) else EXIT_EPISODE


def cmd_render(args):
    cfg = _config(args.config)
    seen, unseen = load_corpus(cfg)
    maps = {**seen, **unseen}
    map_id = args.map_id or sorted(maps)[0]
    params = _params_for(cfg, args.policy, args.policy_file)
    result = _run_job(cfg, Job(args.policy, args.task, "", map_id, args.seed), maps[map_id], params)
    if isinstance(result, EpisodeError):
        raise result
    Path(args.out).write_text(render_trajectory(result, maps[map_id]))
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_maps_generate(args):
    seen, unseen = split_corpus(args.seed, args.n_train, args.n_test)
    for p in write_corpus(seen, unseen, args.out):
        print(p)
    return EXIT_OK


def cmd_selftest(args):
    results = selftest.run_all()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail} ({r.seconds:.1f}s)")
    return EXIT_OK if all(r.passed for r in results) else EXIT_EPISODE


def build_parser():
    p = argparse.ArgumentParser(prog="activeloc", description="Active particle-filter localization lab")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a config file")
    r.add_argument("config")
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("train", help="train the learned policy")
    t.add_argument("config", nargs="?")
    t.add_argument("--out", default="policy.apfn")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate one policy")
    e.add_argument("config", nargs="?")
    e.add_argument("--policy", required=True)
    e.add_argument("--policy-file", default="")
    e.add_argument("--task", default="tracking")
    e.add_argument("--split", default="unseen", choices=["seen", "unseen"])
    e.add_argument("--episodes", type=int, default=None)
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("render", help="render one episode as SVG")
    d.add_argument("config", nargs="?")
    d.add_argument("--policy", default="goalnav")
    d.add_argument("--policy-file", default="")
    d.add_argument("--task", default="tracking")
    d.add_argument("--map-id", default="")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", default="episode.svg")
    d.set_defaults(func=cmd_render)

    m = sub.add_parser("maps", help="map corpus tools")
    msub = m.add_subparsers(dest="maps_command", required=True)
    g = msub.add_parser("generate", help="write a seeded train/test corpus")
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--n-train", type=int, default=10)
    g.add_argument("--n-test", type=int, default=3)
    g.add_argument("--out", default="maps")
    g.set_defaults(func=cmd_maps_generate)

    s = sub.add_parser("selftest", help="run the invariant and oracle suite")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except EpisodeError as e:
        print(f"episode failed: {e}", file=sys.stderr)
        return EXIT_EPISODE


if __name__ == "__main__":
    sys.exit(main())
