"""One handler per subcommand; each returns the process exit code"""
import json
import logging
from dataclasses import replace

import numpy as np

from commands.config import RunConfig
from experiment.ablation import ablation_run
from experiment.bench import bench
from experiment.dataset import ScenarioDataset, generate_dataset
from experiment.morphism import quality_prior_morphism
from experiment.sampling import sample_loads
from grid.network import network_model
from grid.parser import load_case, serialize_case
from mtl.inference import predict_warm_start
from mtl.serialization import load_model, save_model
from mtl.training import TrainingSet, build_network, train
from solver.ipm import export_history_csv, solve, solve_with_fallback
from solver.state import WarmStart
from utils.errors import CaseError, DatasetError, ModelFormatError
from utils.helpers import DeterminismHelper, JsonHelper

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_CONVERGED = 3


def _load_dataset(path) -> ScenarioDataset:
    dataset = ScenarioDataset.read_jsonl(path)
    if not len(dataset):
        raise DatasetError(f"{path}: no samples")
    return dataset


def case_validate(args, config: RunConfig) -> int:
    try:
        case = load_case(args.file)
    except CaseError as e:
        print(json.dumps({"file": str(args.file), "valid": False, "error": str(e)}, indent=2))
        logger.error(f"❌ {args.file}: {e}")
        return EXIT_USAGE
    report = {"file": str(args.file), "valid": True, "name": case.name, **network_model(case).dims.to_dict()}
    print(json.dumps(report, indent=2))
    logger.info(f"✅ {args.file} is a valid case")
    return EXIT_OK


def case_import(args, config: RunConfig) -> int:
    case = load_case(args.file)
    with open(args.output, "w", encoding="utf-8") as f:
        f.write(serialize_case(case))
    logger.info(f"✅ Wrote {case.name} to {args.output}")
    return EXIT_OK


def solve_case(args, config: RunConfig) -> int:
    model = network_model(load_case(args.case))
    ws = WarmStart.from_dict(JsonHelper.read(args.warm_start)) if args.warm_start else None
    runner = solve if args.no_fallback else solve_with_fallback
    point, report = runner(model, ws, config.ipm)

    document = {"point": point.to_dict(model), "report": report.to_dict()}
    if config.deterministic:
        document = DeterminismHelper.strip_timings(document)
    if args.output:
        JsonHelper.write(args.output, document)
    if args.history:
        export_history_csv(report, args.history)
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def dataset_gen(args, config: RunConfig) -> int:
    model = network_model(load_case(args.case))
    sampling = config.sampling
    n = args.n if args.n is not None else sampling.n
    t = args.t if args.t is not None else sampling.t
    seed = args.seed if args.seed is not None else sampling.seed

    scenarios = sample_loads(model, n, t, seed)
    dataset, rejects = generate_dataset(model, scenarios, config.ipm, config.workers)
    dataset.write_jsonl(args.output, include_timing=not config.deterministic)
    if args.rejects:
        JsonHelper.write(args.rejects, sorted(rejects))
    return EXIT_OK


def train_model(args, config: RunConfig) -> int:
    model = network_model(load_case(args.case))
    train_cfg = config.train
    if args.epochs is not None:
        train_cfg = replace(train_cfg, epochs=args.epochs)
    if args.seed is not None:
        train_cfg = replace(train_cfg, seed=args.seed)
    if args.input_norm:
        train_cfg = replace(train_cfg, input_norm=args.input_norm)
    if args.separate_heads:
        train_cfg = replace(train_cfg, trunk_mode="separate")
    weights = config.loss_weights.physics_off() if args.no_physics else config.loss_weights

    train_samples, val_samples = _load_dataset(args.dataset).split()
    train_set = TrainingSet.from_samples(train_samples, model)
    val_set = TrainingSet.from_samples(val_samples, model) if val_samples else None
    net = build_network(model, train_set, train_cfg)
    net, log = train(net, train_set, val_set, model, train_cfg, weights)

    save_model(net, args.output)
    if args.log:
        log.to_csv(args.log)
    return EXIT_OK


def predict(args, config: RunConfig) -> int:
    model = network_model(load_case(args.case))
    net = load_model(args.model, model)
    loads = JsonHelper.read(args.loads)
    if not isinstance(loads, dict) or "pd" not in loads or "qd" not in loads:
        raise ModelFormatError(f"{args.loads}: expected an object with 'pd' and 'qd' lists")
    ws = predict_warm_start(net, np.asarray(loads["pd"], dtype=float), np.asarray(loads["qd"], dtype=float), model)
    JsonHelper.write(args.output, ws.to_dict())
    logger.info(f"✅ Wrote warm start to {args.output}")
    return EXIT_OK


def ablate(args, config: RunConfig) -> int:
    model = network_model(load_case(args.case))
    samples = _load_dataset(args.dataset).sorted()
    if args.limit:
        samples = samples[:args.limit]
    table = ablation_run(model, samples, opts=config.ipm, workers=config.workers,
                         deterministic=config.deterministic)
    table.write_csv(args.output)
    if args.json:
        table.write_json(args.json)
    return EXIT_OK


def morph(args, config: RunConfig) -> int:
    model = network_model(load_case(args.case))
    net = load_model(args.model, model)
    train_samples, val_samples = _load_dataset(args.dataset).split()
    if not val_samples:
        raise DatasetError("morphism needs a non-empty validation split")
    result = quality_prior_morphism(
        net,
        TrainingSet.from_samples(train_samples, model),
        TrainingSet.from_samples(val_samples, model),
        model,
        requirement=args.target_mape,
        config=config.train,
        weights=config.loss_weights,
        opts=config.ipm,
        max_rounds=args.rounds,
    )
    save_model(result.net, args.output)
    if args.summary:
        JsonHelper.write(args.summary, result.to_dict())
    return EXIT_OK


def bench_model(args, config: RunConfig) -> int:
    model = network_model(load_case(args.case))
    net = load_model(args.model, model)
    _, val_samples = _load_dataset(args.dataset).split()
    report = bench(model, val_samples, net, config.ipm, config.workers, config.deterministic)
    report.write_json(args.output)
    if args.csv:
        report.write_csv(args.csv)
    return EXIT_OK
