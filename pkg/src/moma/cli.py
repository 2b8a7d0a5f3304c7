"""Command-line entry point. Every command prints one JSON document."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .agentroute import AgentRegistry, register_agent
from .catalog import PreferenceMode, dump_agent_registry, load_agent_registry, load_comparisons, load_model_catalog, model_index, parse_agent
from .config import load_config
from .elo import K_FACTOR, compute_elo
from .errors import ConfigError, DataFormatError, MomaError
from .gateway import Gateway
from .grk import dataset_loss, encode_comparisons, init_params, load_params, save_params, train
from .harness import load_harness_config, report_json, run_harness


def _emit(doc) -> None:
    sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def _registry(path: Path) -> AgentRegistry:
    if path is None or not path.exists():
        return AgentRegistry()
    agents, categories = load_agent_registry(path)
    return AgentRegistry(agents, categories)


def _gateway(args, cfg) -> Gateway:
    params_path = Path(args.params) if args.params else cfg.params_path
    if not params_path.exists():
        raise ConfigError(f"no trained params at {params_path}; run `moma train` first")
    catalog = load_model_catalog(Path(args.catalog) if args.catalog else cfg.catalog_path)
    encoder = cfg.make_encoder()
    return Gateway(
        catalog,
        load_params(params_path),
        encoder,
        _registry(Path(args.agents) if args.agents else cfg.agents_path),
        cfg.make_fsm(),
        cfg.make_cache(encoder),
        preference_weights=cfg.preference_weights(),
        expected_output_tokens=cfg.selection.expected_output_tokens,
    )


def cmd_train(args, cfg) -> None:
    catalog = load_model_catalog(Path(args.catalog) if args.catalog else cfg.catalog_path)
    records = load_comparisons(args.data, catalog)
    if not records:
        raise DataFormatError(f"{args.data}: no comparison records")
    encoder = cfg.make_encoder()
    data = encode_comparisons(records, encoder, model_index(catalog))
    g = cfg.grk
    seed = g.seed if args.seed is None else args.seed
    params = init_params(encoder.dim, len(catalog), g.n_experts, g.top_k, g.kappa, g.margin, seed=seed)
    history: list = []
    params = train(params, data, g.train_config(epochs=args.epochs, seed=seed), history=history)
    out = Path(args.out) if args.out else cfg.params_path
    save_params(params, out)
    _emit({"out": str(out), "records": len(records), "models": len(catalog), "loss": dataset_loss(params, data), "history": history})


def cmd_route(args, cfg) -> None:
    mode = PreferenceMode(args.preference, args.budget)
    gw = _gateway(args, cfg)
    _emit(gw.route(args.query, mode).to_dict())


def cmd_eval(args, cfg) -> None:
    report = run_harness(load_harness_config(args.harness))
    text = report_json(report)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def cmd_agents_register(args, cfg) -> None:
    try:
        doc = json.loads(Path(args.file).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{args.file}: {exc}") from None
    path = Path(args.agents) if args.agents else cfg.agents_path
    reg = register_agent(parse_agent(doc, str(args.file)), _registry(path), cfg.make_encoder())
    dump_agent_registry(reg.registry.agents, reg.registry.categories, path)
    _emit({
        "registry": str(path),
        "agent": doc.get("name"),
        "assigned": list(reg.assigned),
        "new_category": reg.new_category.to_dict() if reg.new_category else None,
    })


def cmd_cache_stats(args, cfg) -> None:
    # the cache lives in-process, so stats describe the queries routed here
    gw = _gateway(args, cfg)
    if args.queries:
        for line in Path(args.queries).read_text(encoding="utf-8").splitlines():
            if line.strip():
                gw.route(line)
    _emit(gw.cache.stats().to_dict())


def cmd_elo(args, cfg) -> None:
    table = compute_elo(load_comparisons(args.data), k_factor=args.k)
    _emit([{"model": m, "rating": round(r, 4)} for m, r in table.leaderboard()])


def _add_engine_paths(p) -> None:
    p.add_argument("--params", help="trained router params (default from config)")
    p.add_argument("--catalog", help="model catalog JSON (default: bundled price table)")
    p.add_argument("--agents", help="agent registry JSON (default from config)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="moma", description="Cost-aware query router over LLMs and agents.")
    ap.add_argument("--config", help="JSON config file (default: $MOMA_CONFIG)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit the router head on comparison records")
    p.add_argument("--data", required=True, help="comparison records, JSON lines")
    p.add_argument("--catalog")
    p.add_argument("--out")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("route", help="route one query")
    p.add_argument("--query", required=True)
    p.add_argument("--preference", default="auto", choices=["cost", "auto", "performance"])
    p.add_argument("--budget", type=float)
    _add_engine_paths(p)
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("eval", help="run the synthetic harness")
    p.add_argument("--harness", required=True, help="harness config JSON")
    p.add_argument("--out", help="also write the report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("agents", help="agent registry operations")
    asub = p.add_subparsers(dest="agents_command", required=True)
    r = asub.add_parser("register", help="register one agent descriptor")
    r.add_argument("--file", required=True)
    r.add_argument("--agents", help="registry file to update (default from config)")
    r.set_defaults(func=cmd_agents_register)

    p = sub.add_parser("cache", help="prefetch cache operations")
    csub = p.add_subparsers(dest="cache_command", required=True)
    s = csub.add_parser("stats", help="cache statistics after routing --queries")
    s.add_argument("--queries", help="file with one query per line to route first")
    _add_engine_paths(s)
    s.set_defaults(func=cmd_cache_stats)

    p = sub.add_parser("elo", help="Elo leaderboard from comparison records")
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=float, default=K_FACTOR)
    p.set_defaults(func=cmd_elo)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        args.func(args, cfg)
    except (MomaError, OSError) as exc:
        print(f"moma: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
