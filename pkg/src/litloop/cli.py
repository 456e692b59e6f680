"""Command-line interface.

    litloop run --config cfg.json [--batch | --interactive]
    litloop review list|approve|correct|reject ...
    litloop refine --session ID [--query ...] [--flag-upto N ...]
    litloop report --session ID [--iteration N]
    litloop synth-eval --materials 8 --targeted 20 --untargeted 5 --seed S
    litloop serve --port N [--ui DIR]
    litloop demo --out DIR
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .consensus import ConsensusPolicy
from .session import Session, SessionConfig, SessionError


def _print(obj):
    print(json.dumps(obj, indent=1, sort_keys=True))


def cmd_run(args) -> int:
    config = SessionConfig.from_file(args.config)
    if args.mode:
        config = SessionConfig.from_dict({**config.to_dict(), "mode": args.mode})
    if args.session:
        try:
            session = Session.load(args.session, data_dir=args.data_dir)
        except SessionError:
            session = Session.create(config, data_dir=args.data_dir,
                                     session_id=args.session)
    else:
        session = Session.create(config, data_dir=args.data_dir)
    result = session.run_iteration(config=config)
    _print({"session_id": session.session_id, **{
        k: v for k, v in result.items() if k != "report"
    }})
    if result["status"] == "awaiting_review":
        print(f"review queue: litloop review list --session {session.session_id}",
              file=sys.stderr)
    return 0


def cmd_review(args) -> int:
    session = Session.load(args.session, data_dir=args.data_dir)
    if args.review_command == "list":
        _print(session.list_flagged())
        return 0
    values = json.loads(args.values) if args.values else None
    decision = session.decide(
        args.point, args.review_command, values=values,
        inspector=args.inspector, note=args.note,
    )
    _print(decision)
    return 0


def cmd_refine(args) -> int:
    session = Session.load(args.session, data_dir=args.data_dir)
    policy = None
    if args.k or args.filter_below or args.flag_upto:
        base = session.config.policy
        policy = ConsensusPolicy(
            k=args.k or base.k,
            filter_below=args.filter_below or base.filter_below,
            flag_upto=args.flag_upto or base.flag_upto,
        )
    result = session.refine(new_query=args.query, new_policy=policy)
    _print({k: v for k, v in result.items() if k != "report"})
    return 0


def cmd_report(args) -> int:
    session = Session.load(args.session, data_dir=args.data_dir)
    indices = session.iteration_indices()
    if not indices:
        print("no iterations yet", file=sys.stderr)
        return 1
    index = args.iteration or indices[-1]
    path = session.iteration_dir(index) / "report" / ("report.md" if args.md
                                                      else "report.json")
    if not path.exists():
        print(f"no report for iteration {index}", file=sys.stderr)
        return 1
    print(path.read_text(encoding="utf-8"))
    return 0


def cmd_synth_eval(args) -> int:
    from .synth import SynthConfig, run_synth_eval, summary_markdown, write_outputs

    variants = ("full", "no-filter", "no-ics", "neither") if args.ablate == "all" \
        else (args.ablate,)
    payload = run_synth_eval(SynthConfig(
        materials=args.materials,
        targeted=args.targeted,
        untargeted=args.untargeted,
        seed=args.seed,
        noise=args.noise,
        hallucination_rate=args.hallucinate,
        variants=variants,
    ))
    if args.out:
        write_outputs(payload, args.out)
        print(f"wrote {args.out}/eval.json and summary.md", file=sys.stderr)
    print(summary_markdown(payload))
    return 0


def cmd_serve(args) -> int:
    from .server import serve

    serve(port=args.port, data_dir=args.data_dir, ui_dir=args.ui)
    return 0


def cmd_demo(args) -> int:
    """Materialize the bundled example study and a ready-to-run config."""
    from .pilot import pilot_definition, pilot_policy, pilot_query, write_pilot_fixture

    out = Path(args.out)
    paths = write_pilot_fixture(out)
    config = SessionConfig(
        corpus_dir=paths["corpus_dir"],
        definition=pilot_definition(),
        query=pilot_query(),
        policy=pilot_policy(),
        backend={"type": "scripted", "fixture": paths["responses"]},
        mode=args.mode or "interactive",
    )
    config_path = out / "config.json"
    config_path.write_text(json.dumps(config.to_dict(), indent=1, sort_keys=True),
                           encoding="utf-8")
    print(f"wrote {config_path}")
    print(f"next: litloop run --config {config_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="litloop")
    parser.add_argument("--data-dir", default=None,
                        help="session store (default $LITLOOP_DATA_DIR or ./litloop-data)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run or resume a pipeline iteration")
    run.add_argument("--config", required=True)
    run.add_argument("--session", default=None)
    mode = run.add_mutually_exclusive_group()
    mode.add_argument("--batch", dest="mode", action="store_const", const="batch")
    mode.add_argument("--interactive", dest="mode", action="store_const",
                      const="interactive")
    run.set_defaults(func=cmd_run, mode=None)

    review = sub.add_parser("review", help="inspect and decide flagged points")
    review.add_argument("review_command",
                        choices=["list", "approve", "correct", "reject"])
    review.add_argument("--session", required=True)
    review.add_argument("--point", default=None)
    review.add_argument("--values", default=None,
                        help='replacement values as JSON, e.g. \'{"dose": 3}\'')
    review.add_argument("--inspector", default="cli")
    review.add_argument("--note", default="")
    review.set_defaults(func=cmd_review)

    refine = sub.add_parser("refine", help="start a refined iteration")
    refine.add_argument("--session", required=True)
    refine.add_argument("--query", default=None)
    refine.add_argument("--k", type=int, default=None)
    refine.add_argument("--filter-below", type=int, default=None)
    refine.add_argument("--flag-upto", type=int, default=None)
    refine.set_defaults(func=cmd_refine)

    report = sub.add_parser("report", help="print a report")
    report.add_argument("--session", required=True)
    report.add_argument("--iteration", type=int, default=None)
    report.add_argument("--md", action="store_true", help="print markdown instead of JSON")
    report.set_defaults(func=cmd_report)

    synth = sub.add_parser("synth-eval", help="synthetic closed-loop evaluation")
    synth.add_argument("--materials", type=int, default=8)
    synth.add_argument("--targeted", type=int, default=20)
    synth.add_argument("--untargeted", type=int, default=5)
    synth.add_argument("--seed", type=int, default=7)
    synth.add_argument("--noise", type=float, default=0.05)
    synth.add_argument("--hallucinate", type=float, default=0.0)
    synth.add_argument("--ablate", default="full",
                       choices=["full", "no-filter", "no-ics", "neither", "all"])
    synth.add_argument("--out", default=None)
    synth.set_defaults(func=cmd_synth_eval)

    serve = sub.add_parser("serve", help="serve the review API and console")
    serve.add_argument("--port", type=int, default=8321)
    serve.add_argument("--ui", default=None, help="directory of built console assets")
    serve.set_defaults(func=cmd_serve)

    demo = sub.add_parser("demo", help="write the bundled example study")
    demo.add_argument("--out", required=True)
    demo.add_argument("--mode", default=None, choices=["batch", "interactive"])
    demo.set_defaults(func=cmd_demo)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SessionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
