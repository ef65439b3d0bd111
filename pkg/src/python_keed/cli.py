"""``keed`` command line: synth, train, delineate, eval, bench and fetch."""

import argparse
import asyncio
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence, Tuple

import numpy as np

from python_keed.baseline import WaveletDelineator, WtConfig
from python_keed.config import ConfigSection, read_config_text, read_section, section, section_data
from python_keed.core import ReferenceAnnotations, TimeSeriesRecord, peak_kind
from python_keed.errors import ConfigError, DataError, FetchError, KeedError, UsageError
from python_keed.evaluation import (
    EvalReport,
    HeatmapCache,
    MethodReport,
    align,
    benchmark,
    evaluate_method,
    lambda_sweep,
    sweep_csv,
)
from python_keed.fetch import DatasetFetcher, FetchConfig
from python_keed.heatmap import DecodeConfig
from python_keed.io.text import read_csv_record, write_result
from python_keed.io.wfdb import (
    BEAT_CODES,
    NORMAL,
    PWAVE,
    TWAVE,
    WFOFF,
    WFON,
    WfdbAnnotation,
    annotations_to_reference,
    encode_wfdb_annotations,
    parse_header,
    read_wfdb_annotations,
    read_wfdb_record,
    write_wfdb_record,
)
from python_keed.net.model import ModelConfig, init_parameters
from python_keed.net.train import TrainConfig, train
from python_keed.net.weights import load_weights, save_weights
from python_keed.pipeline import KeedDelineator, default_workers, delineate_record
from python_keed.qrs import QrsConfig, detect_rpeaks
from python_keed.synth import SynthConfig, SynthRecord, generate_corpus, read_truth_json, stack_pairs, to_training_set
from python_keed.utils import str_to_json

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_FETCH = 0, 1, 2, 3
SWEEP_LAMBDAS = tuple(round(0.1 * i, 1) for i in range(1, 10))


@section("data", "dataset")
@dataclass(frozen=True)
class DataConfig(ConfigSection):
    """Where evaluation and training records come from and how their annotations read.

    Attributes:
        records: Directory of records (synthetic CSV + truth, or WFDB)
        fs: Sampling rate assumed for CSV records
        lead: Signal index used from WFDB records
        annotation_extension: Extension of WFDB annotation files
        wave_codes: Annotation type code to wave ("P" or "T")
        beat_codes: Annotation type codes marking R peaks
    """
    records: Path | None = field(default=None, metadata={"name": ["records", "path"], "type": "path"})
    fs: float = field(default=250.0, metadata={"name": ["fs"], "type": "float"})
    lead: int = field(default=0, metadata={"name": ["lead"], "type": "int"})
    annotation_extension: str = field(default="atr", metadata={"name": ["annotation_extension", "annotator"], "type": "str"})
    wave_codes: Mapping[int, str] = field(default_factory=lambda: {PWAVE: "P", TWAVE: "T"},
                                          metadata={"name": ["wave_codes"], "type": "int_map"})
    beat_codes: Tuple[int, ...] = field(default=BEAT_CODES, metadata={"name": ["beat_codes"], "type": "int_list"})

    def __post_init__(self):
        if not self.fs > 0:
            raise ConfigError(f"fs must be positive, got {self.fs}")
        for code, wave in self.wave_codes.items():
            if wave not in ("P", "T"):
                raise ConfigError(f"wave_codes maps {code} to {wave!r}; expected 'P' or 'T'")


@dataclass(frozen=True)
class RunConfig:
    """Every section plus the flat run keys, after defaults, file and flags are merged."""
    model: ModelConfig = field(default_factory=ModelConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    qrs: QrsConfig = field(default_factory=QrsConfig)
    wt: WtConfig = field(default_factory=WtConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    data: DataConfig = field(default_factory=DataConfig)
    fetch: FetchConfig = field(default_factory=FetchConfig)
    seed: int = 0
    out: Path | None = None
    workers: int = field(default_factory=default_workers)


SECTIONS = {"model": ModelConfig, "decode": DecodeConfig, "qrs": QrsConfig, "wt": WtConfig,
            "train": TrainConfig, "synth": SynthConfig, "data": DataConfig, "fetch": FetchConfig}
RUN_KEYS = {"seed", "lambda", "out", "workers"}


def load_run_config(config_path: Path | None = None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Merge built-in defaults, an optional config file and flag overrides, in that order.

    Args:
        config_path: Tolerant-JSON config file
        overrides: Flag values keyed by run key (``seed``, ``lambda``, ``out``, ``workers``); None means unset

    Returns:
        The validated run configuration.
    """
    document: Dict[str, Any] = {}
    if config_path is not None:
        if not Path(config_path).is_file():
            raise DataError(f"Config file not found: {config_path}")
        document = read_config_text(Path(config_path).read_text())
    known = set(RUN_KEYS)
    for cls in SECTIONS.values():
        known.update([cls.section_name, *cls.section_aliases])
    for key in document:
        if key not in known:
            logger.warning("Ignoring unknown config key %r", key)

    sections = {name: read_section(cls, section_data(document, cls)) for name, cls in SECTIONS.items()}
    run: Dict[str, Any] = {key: document[key] for key in RUN_KEYS if key in document}
    run.update({key: value for key, value in (overrides or {}).items() if value is not None})

    try:
        if "lambda" in run:
            sections["decode"] = replace(sections["decode"], lam=float(run["lambda"]))
        seed = None
        if "seed" in run:
            seed = int(run["seed"])
            sections["train"] = replace(sections["train"], seed=seed)
            sections["synth"] = replace(sections["synth"], seed=seed)
        workers = int(run["workers"]) if "workers" in run else default_workers()
    except ConfigError:
        raise
    except (TypeError, ValueError) as err:
        raise ConfigError(f"Invalid run key: {err}") from err
    if workers < 1:
        raise ConfigError(f"workers must be at least 1, got {workers}")
    data = sections["data"]
    if data.records is not None and not data.records.exists():
        raise DataError(f"Records path not found: {data.records}")
    return RunConfig(**sections, seed=seed if seed is not None else sections["train"].seed,
                     out=Path(run["out"]) if run.get("out") is not None else None, workers=workers)


class ArgumentParser(argparse.ArgumentParser):
    """Raises UsageError instead of exiting, so ``main`` owns the exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="tolerant-JSON config file")
    common.add_argument("--seed", type=int, help="run seed (overrides the config file)")
    common.add_argument("--out", type=Path, help="output file or directory")
    common.add_argument("--workers", type=int, help="parallel workers (default: available cores)")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug logging")

    parser = ArgumentParser(prog="keed", description="ECG delineation by keypoint estimation")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    synth = commands.add_parser("synth", parents=[common], help="write a synthetic corpus")
    synth.add_argument("--export", choices=["csv", "wfdb"], default="csv")

    train_cmd = commands.add_parser("train", parents=[common], help="train the network")
    train_cmd.add_argument("--weights", type=Path, help="where to write weights (default: <out>/keed.weights)")
    train_cmd.add_argument("--data", type=Path, help="synthetic corpus directory (default: generate one)")

    delineate = commands.add_parser("delineate", parents=[common], help="delineate one record")
    delineate.add_argument("record", type=Path, help="record file (.csv or .hea)")
    delineate.add_argument("--weights", type=Path, required=True)
    delineate.add_argument("--lambda", dest="lam", type=float)

    for name, help_text in (("eval", "score delineators against references"), ("bench", "time delineators")):
        sub = commands.add_parser(name, parents=[common], help=help_text)
        sub.add_argument("--weights", type=Path)
        sub.add_argument("--lambda", dest="lam", type=float)
        sub.add_argument("--data", type=Path, help="record directory (default: generate a synthetic set)")
        sub.add_argument("--format", choices=["json", "table", "csv"], default="table")
        sub.add_argument("--wave", choices=["P", "T"], default="P")
        sub.add_argument("--swap-fp-fn", action="store_true", help="report FP/FN with swapped labels")
        sub.add_argument("--repeats", type=int, default=1 if name == "eval" else 3)
    commands.choices["eval"].add_argument("--sweep-out", type=Path, help="write the λ sweep CSV here")
    commands.choices["bench"].add_argument("--intervals", type=int, default=1000)

    fetch = commands.add_parser("fetch", parents=[common], help="download a dataset from the catalog")
    fetch.add_argument("dataset")
    fetch.add_argument("--dest", type=Path, help="destination directory (default: <out>/<dataset>)")
    return parser


def configure_logging(verbosity: int):
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("python_keed").setLevel(level)


def _emit(text: str, out: Path | None):
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)


def _read_bytes(path: Path) -> bytes:
    if not path.is_file():
        raise DataError(f"File not found: {path}")
    return path.read_bytes()


def load_record(path: Path, data: DataConfig) -> TimeSeriesRecord:
    """Read a CSV record, or a WFDB record through its header."""
    if path.suffix == ".hea":
        header_text = _read_bytes(path).decode("latin-1")
        header = parse_header(header_text)
        if not 0 <= data.lead < header.n_signals:
            raise DataError(f"Lead {data.lead} not in {path} ({header.n_signals} signals)")
        signal_path = path.parent / header.signals[data.lead].file_name
        return read_wfdb_record(header_text, _read_bytes(signal_path), data.lead)
    return read_csv_record(_read_bytes(path).decode(), data.fs, record_id=path.stem)


def load_synth_dir(directory: Path, cfg_fs: float = 250.0) -> List[SynthRecord]:
    """Synthetic records written by ``keed synth``: one CSV plus truth sidecar each."""
    records = []
    for truth_path in sorted(directory.glob("*.truth.json")):
        stem = truth_path.name[:-len(".truth.json")]
        document = truth_path.read_text()
        beats, episodes = read_truth_json(document)
        fs = float(str_to_json(document).get("fs", cfg_fs))
        record = read_csv_record(_read_bytes(directory / f"{stem}.csv").decode(), fs, record_id=stem, lead="synthetic")
        records.append(SynthRecord(record, beats, episodes))
    return records


def load_reference_items(directory: Path, data: DataConfig) -> List[Tuple[TimeSeriesRecord, ReferenceAnnotations]]:
    """Records with references from a synthetic corpus or from WFDB records with annotation files."""
    if not directory.is_dir():
        raise DataError(f"Records directory not found: {directory}")
    synth = load_synth_dir(directory, data.fs)
    if synth:
        return [(s.record, s.reference()) for s in synth]
    items = []
    for header_path in sorted(directory.glob("*.hea")):
        record = load_record(header_path, data)
        annotations = read_wfdb_annotations(_read_bytes(header_path.with_suffix(f".{data.annotation_extension}")))
        items.append((record, annotations_to_reference(annotations, data.wave_codes, data.beat_codes)))
    if not items:
        raise DataError(f"No records found in {directory}")
    return items


def synth_annotations(synth: SynthRecord) -> List[WfdbAnnotation]:
    annotations = []
    for beat in synth.beats:
        annotations.append(WfdbAnnotation(beat.r, NORMAL))
        for wave, code in ((beat.p, PWAVE), (beat.t, TWAVE)):
            if wave is not None:
                annotations.extend([WfdbAnnotation(wave.onset, WFON), WfdbAnnotation(wave.peak, code),
                                    WfdbAnnotation(wave.offset, WFOFF)])
    return sorted(annotations, key=lambda a: a.sample_index)


def cmd_synth(args, cfg: RunConfig) -> int:
    out = cfg.out or Path("synth")
    out.mkdir(parents=True, exist_ok=True)
    for synth in generate_corpus(cfg.synth):
        name = synth.record.record_id
        (out / f"{name}.csv").write_text(synth.to_csv())
        (out / f"{name}.truth.json").write_text(synth.truth_json())
        if args.export == "wfdb":
            header, signal = write_wfdb_record(synth.record)
            (out / f"{name}.hea").write_text(header)
            (out / f"{name}.dat").write_bytes(signal)
            (out / f"{name}.atr").write_bytes(encode_wfdb_annotations(synth_annotations(synth)))
    logger.info("Wrote %d synthetic records to %s", cfg.synth.n_records, out)
    return EXIT_OK


def split_records(records: Sequence[SynthRecord], fraction: float, seed: int) -> Tuple[List[SynthRecord], List[SynthRecord]]:
    """Record-level split so adjacent beats never straddle train and validation."""
    if fraction <= 0 or len(records) < 2:
        return list(records), []
    order = np.random.default_rng(seed).permutation(len(records))
    n_valid = min(len(records) - 1, max(1, int(round(fraction * len(records)))))
    valid = set(order[:n_valid].tolist())
    return ([r for i, r in enumerate(records) if i not in valid], [r for i, r in enumerate(records) if i in valid])


def cmd_train(args, cfg: RunConfig) -> int:
    out = cfg.out or Path(".")
    data_dir = args.data or cfg.data.records
    records = load_synth_dir(data_dir, cfg.data.fs) if data_dir is not None else generate_corpus(cfg.synth)
    if data_dir is not None and not records:
        raise DataError(f"No synthetic records in {data_dir}")
    train_records, valid_records = split_records(records, cfg.train.validation_fraction, cfg.train.seed)
    inputs, targets = stack_pairs(to_training_set(train_records, cfg.model.L, cfg.decode))
    validation = stack_pairs(to_training_set(valid_records, cfg.model.L, cfg.decode)) if valid_records else None
    logger.info("Training on %d intervals (%d validation records)", len(inputs), len(valid_records))
    params = init_parameters(cfg.model, cfg.train.seed)
    params, history = train(params, cfg.model, inputs, targets[:, :cfg.model.K], cfg.train,
                            None if validation is None else (validation[0], validation[1][:, :cfg.model.K]))
    weights_path = args.weights or out / "keed.weights"
    weights_path.parent.mkdir(parents=True, exist_ok=True)
    weights_path.write_bytes(save_weights(params, cfg.model))
    out.mkdir(parents=True, exist_ok=True)
    (out / "loss.csv").write_text(history.to_csv())
    return EXIT_OK


def _keed(weights: Path, cfg: RunConfig) -> KeedDelineator:
    params, model_cfg = load_weights(_read_bytes(weights))
    return KeedDelineator(params, model_cfg, cfg.decode, workers=cfg.workers)


def cmd_delineate(args, cfg: RunConfig) -> int:
    record = load_record(args.record, cfg.data)
    result = delineate_record(_keed(args.weights, cfg), record, cfg.qrs)
    _emit(write_result(result), cfg.out)
    return EXIT_OK


def _evaluation_items(args, cfg: RunConfig, n_beats: int | None = None):
    data_dir = args.data or cfg.data.records
    if data_dir is not None:
        pairs = load_reference_items(data_dir, cfg.data)
    else:
        synth_cfg = replace(cfg.synth, seed=cfg.synth.seed + 1)
        if n_beats is not None:
            synth_cfg = replace(synth_cfg, n_beats=n_beats)
        pairs = [(s.record, s.reference()) for s in generate_corpus(synth_cfg)]
    items = []
    for record, reference in pairs:
        rpeaks = detect_rpeaks(record, cfg.qrs)
        if len(rpeaks) < 2:
            logger.warning("Skipping %s: fewer than 2 R peaks detected", record.record_id)
            continue
        items.append((record, rpeaks, reference))
    if not items:
        raise DataError("No record yielded at least two R peaks")
    return items


def _methods(args, cfg: RunConfig) -> list:
    methods = []
    if args.weights is not None:
        methods.append(_keed(args.weights, cfg))
    methods.extend([WaveletDelineator("DWT", cfg.wt), WaveletDelineator("Peak", cfg.wt)])
    return methods


def _render(report: EvalReport, fmt: str) -> str:
    return {"json": report.to_json, "table": report.to_table, "csv": report.to_csv}[fmt]()


def cmd_eval(args, cfg: RunConfig) -> int:
    items = _evaluation_items(args, cfg)
    methods = _methods(args, cfg)
    rows: List[MethodReport] = [evaluate_method(method, items, args.wave, args.repeats) for method in methods]
    sweep = ()
    if isinstance(methods[0], KeedDelineator):
        keed = methods[0]
        caches, truth = [], []
        for record, rpeaks, reference in items:
            result, maps = keed.delineate_with_heatmaps(record, rpeaks)
            aligned = align(result, reference, args.wave)
            caches.append(HeatmapCache.from_heatmaps(maps[aligned.scored] if aligned.scored.size
                                                     else np.zeros((0,) + maps.shape[1:])))
            truth.append(aligned.truth_present)
        sweep = tuple(lambda_sweep(HeatmapCache.concatenate(caches), np.concatenate(truth), SWEEP_LAMBDAS,
                                   peak_kind(args.wave)))
        if args.sweep_out is not None:
            args.sweep_out.parent.mkdir(parents=True, exist_ok=True)
            args.sweep_out.write_text(sweep_csv(sweep))
    report = EvalReport(args.wave, tuple(rows), args.swap_fp_fn, sweep)
    _emit(_render(report, args.format), cfg.out)
    return EXIT_OK


def cmd_bench(args, cfg: RunConfig) -> int:
    n_beats = max(2, -(-args.intervals // cfg.synth.n_records) + 1) if args.data is None else None
    items = _evaluation_items(args, cfg, n_beats)
    if args.weights is None:
        keed = KeedDelineator(init_parameters(cfg.model, cfg.seed), cfg.model, cfg.decode, workers=cfg.workers)
        methods = [keed] + _methods(args, cfg)
    else:
        methods = _methods(args, cfg)
    rows = []
    for method in methods:
        timing = benchmark(method, [(record, rpeaks) for record, rpeaks, _ in items], args.repeats)
        if not timing.deterministic:
            raise DataError(f"{method.name} produced different results across repeats")
        row = evaluate_method(method, items, args.wave, 1)
        rows.append(replace(row, time=timing.seconds, throughput=timing.throughput))
    keed_time = rows[0].time
    rows = [replace(row, speedup=row.time / keed_time if keed_time else None) for row in rows]
    for row in rows[1:]:
        logger.info("%s/%s time ratio: %sx", row.method, rows[0].method, row.speedup)
    report = EvalReport(args.wave, tuple(rows), args.swap_fp_fn)
    _emit(_render(report, args.format), cfg.out)
    return EXIT_OK


async def _fetch(entry, destination: Path):
    try:
        import httpx
    except ImportError:
        httpx = None
    if httpx is not None:
        from python_keed.http import createHttpClient
        async with httpx.AsyncClient(follow_redirects=True) as client:
            return await DatasetFetcher(createHttpClient(client), entry, destination).fetch()
    try:
        import aiohttp
    except ImportError as err:
        raise FetchError("Fetching needs httpx or aiohttp; install python-keed[httpx]") from err
    from python_keed.http import createHttpClient
    async with aiohttp.ClientSession() as session:
        return await DatasetFetcher(createHttpClient(session), entry, destination).fetch()


def cmd_fetch(args, cfg: RunConfig) -> int:
    entry = cfg.fetch.entry(args.dataset)
    destination = args.dest or (cfg.out or Path("data")) / args.dataset
    summary = asyncio.run(_fetch(entry, destination))
    logger.info("%s: %d downloaded, %d already present", args.dataset, len(summary.downloaded), len(summary.skipped))
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "delineate": cmd_delineate,
            "eval": cmd_eval, "bench": cmd_bench, "fetch": cmd_fetch}


def main(argv: Sequence[str] | None = None) -> int:
    """Run one command; returns 0 on success, 1 on usage/config errors, 2 on data errors, 3 on fetch errors."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as err:
        print(err, file=sys.stderr)
        return EXIT_USAGE
    configure_logging(args.verbose)
    try:
        cfg = load_run_config(args.config, {"seed": args.seed, "out": args.out, "workers": args.workers,
                                            "lambda": getattr(args, "lam", None)})
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, UsageError) as err:
        print(f"keed: {err}", file=sys.stderr)
        return EXIT_USAGE
    except FetchError as err:
        print(f"keed: {err}", file=sys.stderr)
        return EXIT_FETCH
    except (KeedError, OSError) as err:
        print(f"keed: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
