"""Pipeline stages: simulate, characterize, calibrate, extract, test.

Every stage reads and writes plain files so the CLI subcommands can be run
one at a time or chained by :func:`run_pipeline`.
"""

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import fingerprint, validation
from .bits import BitString
from .entropy import EntropyReport, entropy_report, grey_histogram, report_from_h_min
from .extractor import extract, image_to_bytes, output_bits
from .puf_sim import PufModel, read_pgm, render_many, uniform_phase_pattern, write_pgm
from .rng import derive_seed

# camera-limited rate of the optical bench (28 Mbit/frame at 35 fps), for context only
REFERENCE_RATE_BPS = 0.96e9
KINDS = ("intra", "inter")


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it and ``__cause__`` holds the reason."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


def frame_plan(cfg):
    """``{kind: [(pattern_seed, noise_seed), ...]}`` for both datasets.

    Intra frames share one pattern; every frame gets its own noise seed.
    """
    d, noise_seed = cfg.dataset, cfg.camera.noise_seed
    return {
        "intra": [(d.pattern_seed, derive_seed(noise_seed, "intra", i)) for i in range(d.intra)],
        "inter": [(d.pattern_seed + 1 + i, derive_seed(noise_seed, "inter", i))
                  for i in range(d.inter)],
    }


def render_frames(cfg, plan, puf=None, threads=None):
    puf = puf or cfg.make_puf()
    patterns = [uniform_phase_pattern(p, puf.in_dims) for p, _ in plan]
    noises = [cfg.noise(n) for _, n in plan]
    return render_many(puf, patterns, noises, cfg.camera.exposure_percentile, cfg.halo(),
                       threads=threads or cfg.threads)


def simulate(cfg, out_dir=None, threads=None):
    """Render the intra and inter datasets to ``<out>/dataset``."""
    root = Path(out_dir or cfg.output_dir) / "dataset"
    puf = cfg.make_puf()
    timings = {}
    for kind, plan in frame_plan(cfg).items():
        folder = root / kind
        folder.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        frames = render_frames(cfg, plan, puf, threads)
        timings[kind] = time.perf_counter() - t0
        entries = []
        for i, (img, (pseed, nseed)) in enumerate(zip(frames, plan)):
            name = f"frame_{i:04d}.pgm"
            write_pgm(folder / name, img)
            entries.append({"file": name, "pattern_seed": pseed, "noise_seed": nseed})
        _write_json(folder / "manifest.json", {
            "kind": kind,
            "puf": puf.params(),
            "camera": asdict(cfg.camera),
            "config_digest": cfg.digest(),
            "frames": entries,
        })
    with open(root / "puf.json", "w") as fh:
        fh.write(puf.to_json())
    cfg.save(root / "config.toml")
    return {"dataset": str(root), "simulation_seconds": timings}


@dataclass
class Dataset:
    root: Path
    manifests: dict

    def files(self, kind):
        folder = self.root / kind
        return [folder / e["file"] for e in self.manifests[kind]["frames"]]

    def frames(self, kind):
        return [read_pgm(p) for p in self.files(kind)]

    def pattern_seeds(self, kind):
        return [e["pattern_seed"] for e in self.manifests[kind]["frames"]]

    def puf(self):
        return PufModel.from_json((self.root / "puf.json").read_text())


def load_dataset(path, kinds=KINDS):
    """Open a dataset directory; raises FileNotFoundError listing missing files."""
    root = Path(path)
    if (root / "dataset").is_dir() and not (root / "inter").is_dir():
        root = root / "dataset"
    manifests, missing = {}, []
    for kind in kinds:
        mpath = root / kind / "manifest.json"
        if not mpath.is_file():
            missing.append(str(mpath))
            continue
        manifests[kind] = _read_json(mpath)
        missing += [str(root / kind / e["file"]) for e in manifests[kind]["frames"]
                    if not (root / kind / e["file"]).is_file()]
    if not (root / "puf.json").is_file():
        missing.append(str(root / "puf.json"))
    if missing:
        raise FileNotFoundError(f"dataset {root} is missing: {', '.join(missing)}")
    return Dataset(root, manifests)


def characterize(dataset, out_dir, gabor=None):
    """Euclidean and Gabor-hash Hamming histograms for the intra and inter datasets."""
    ds = dataset if isinstance(dataset, Dataset) else load_dataset(dataset)
    gabor = gabor or fingerprint.GaborParams()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = {"euclidean": {}, "hamming": {}, "gabor": asdict(gabor)}
    stats = {}
    for kind in KINDS:
        frames = ds.frames(kind)
        if len(frames) < 2:
            raise ValueError(f"{kind} dataset has {len(frames)} frame(s); at least 2 required")
        euc = fingerprint.pairwise_stats(frames, "euclidean")
        ham = fingerprint.pairwise_stats([fingerprint.gabor_hash(f, gabor) for f in frames],
                                         "hamming")
        euc.write_histogram_csv(out / f"euclidean_{kind}.csv")
        ham.write_histogram_csv(out / f"hamming_{kind}.csv")
        result["euclidean"][kind] = euc.to_dict()
        result["hamming"][kind] = ham.to_dict()
        stats[kind] = (euc, ham)
    result["euclidean"]["separated"] = fingerprint.histograms_disjoint(stats["intra"][0],
                                                                       stats["inter"][0])
    result["hamming"]["separated"] = fingerprint.histograms_disjoint(stats["intra"][1],
                                                                     stats["inter"][1])
    result["hamming"]["bits_per_fingerprint"] = gabor.hash_length(ds.frames("inter")[0].shape)
    _write_json(out / "characterize.json", result)
    return result


def calibrate(dataset, out_dir, h_min=None):
    """Min-entropy of the pooled inter dataset and the resulting block length.

    ``h_min`` bypasses measurement and fixes the min-entropy directly.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if h_min is not None:
        report = report_from_h_min(h_min, source="fixed h_min")
    else:
        ds = dataset if isinstance(dataset, Dataset) else load_dataset(dataset)
        hist = grey_histogram(ds.frames("inter"))
        hist.write_csv(out / "grey_histogram.csv")
        report = entropy_report(hist, source=f"{ds.root.name}/inter")
    _write_json(out / "entropy.json", report.to_dict())
    return report


@dataclass
class ThroughputReport:
    frames: int
    raw_bits: int
    random_bits: int
    wall_time: float
    bits_per_second: float
    stages: dict = field(default_factory=dict)
    block_bits: int = 0
    threads: int = 1

    def to_dict(self):
        d = asdict(self)
        d["reference_bits_per_second"] = REFERENCE_RATE_BPS
        d["ratio_to_reference"] = self.bits_per_second / REFERENCE_RATE_BPS
        return d

    def summary(self):
        return (f"extraction: {self.frames} frames, {self.raw_bits:,} raw bits -> "
                f"{self.random_bits:,} random bits in {self.wall_time:.3f} s = "
                f"{self.bits_per_second / 1e6:.1f} Mbit/s "
                f"(reference optical-bench rate: {REFERENCE_RATE_BPS / 1e9:.2f} Gbit/s)")


def resolve_block_bits(block_bits=None, entropy=None):
    if block_bits:
        return int(block_bits)
    if entropy is None:
        raise ValueError("no block length: pass block_bits or an entropy report")
    if isinstance(entropy, EntropyReport):
        return entropy.block_bits
    return int(_read_json(entropy)["block_bits"])


def timed_extract(frames, ext_cfg, threads=1):
    """Extract and time it; the frame list must already be in memory."""
    t0 = time.perf_counter()
    stream = extract(frames, ext_cfg, threads=threads)
    dt = time.perf_counter() - t0
    raw_bits = sum(len(image_to_bytes(f, ext_cfg.crop)) * 8 for f in frames)
    report = ThroughputReport(
        frames=len(frames), raw_bits=raw_bits, random_bits=len(stream), wall_time=dt,
        bits_per_second=len(stream) / dt if dt > 0 else float("inf"),
        stages={"hash": dt}, block_bits=ext_cfg.block_bits, threads=threads)
    return stream, report


def extract_dataset(dataset, out_dir, cfg, block_bits=None, entropy=None, threads=None,
                    export_ascii=None):
    """Hash the inter dataset into ``random.bin`` plus provenance and throughput JSON."""
    ds = dataset if isinstance(dataset, Dataset) else load_dataset(dataset)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ext_cfg = cfg.extractor_config(resolve_block_bits(block_bits or cfg.extractor.block_bits,
                                                      entropy))
    threads = threads or cfg.threads
    t0 = time.perf_counter()
    frames = ds.frames("inter")
    load_time = time.perf_counter() - t0
    stream, report = timed_extract(frames, ext_cfg, threads)
    report.stages["load"] = load_time
    ascii_path = out / "random.txt" if (export_ascii if export_ascii is not None
                                        else cfg.extractor.export_ascii) else None
    stream.write(out / "random.bin", ascii_path)
    provenance = {
        "puf": ds.manifests["inter"]["puf"],
        "pattern_seeds": ds.pattern_seeds("inter"),
        "extractor": ext_cfg.to_dict(),
        "extractor_digest": ext_cfg.digest(),
        "config_digest": cfg.digest(),
        "bits": len(stream),
        "sha256": stream.sha256(),
    }
    _write_json(out / "provenance.json", provenance)
    _write_json(out / "throughput.json", report.to_dict())
    return stream, report


def read_bitstream(path):
    with open(path, "rb") as fh:
        return BitString.from_bytes(fh.read())


def check_bitstream(bits, out_dir, cfg, threads=None):
    """Run the NIST subset and write ``test_report.json`` and ``p_values.csv``."""
    if isinstance(bits, (str, os.PathLike)):
        bits = read_bitstream(bits)
    b = cfg.battery
    report = validation.run_battery(bits, b.subseq_bits, b.alpha, b.tests, cfg.battery_params(),
                                    threads=threads or cfg.threads)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    d = report.to_dict()
    d["config_digest"] = cfg.digest()
    _write_json(out / "test_report.json", d)
    report.write_p_values_csv(out / "p_values.csv")
    return report


def consecutive_pearson(sequences):
    """|r| between each sequence and the next, truncated to a common length."""
    n = min(len(s) for s in sequences)
    return np.array([abs(validation.pearson(sequences[i][:n], sequences[i + 1][:n]))
                     for i in range(len(sequences) - 1)])


def correlation_analysis(ds, ext_cfg, limit=100):
    """Raw vs hashed frame-to-frame correlation, plus challenge-vs-output correlation."""
    frames = ds.frames("inter")[:limit]
    raw = [np.frombuffer(image_to_bytes(f, ext_cfg.crop), dtype=np.uint8) for f in frames]
    hashed = [np.frombuffer(extract([f], ext_cfg).to_bytes(), dtype=np.uint8) for f in frames]
    raw_r = consecutive_pearson(raw)
    hashed_r = consecutive_pearson(hashed)
    n_hashed = min(len(h) for h in hashed)

    puf = ds.puf()
    pattern_bytes = b"".join(uniform_phase_pattern(s, puf.in_dims).to_slm_bytes()
                             for s in ds.pattern_seeds("inter")[:limit])
    output_bytes = b"".join(h.tobytes() for h in hashed)
    n = min(len(pattern_bytes), len(output_bytes))
    rho_pattern = validation.pearson(pattern_bytes[:n], output_bytes[:n])
    return {
        "raw_abs_pearson": raw_r.tolist(),
        "hashed_abs_pearson": hashed_r.tolist(),
        "raw_mean_abs": float(raw_r.mean()),
        "hashed_mean_abs": float(hashed_r.mean()),
        "hashed_max_abs": float(hashed_r.max()),
        "hashed_bytes_per_frame": n_hashed,
        "hashed_bound": validation.null_correlation_bound(n_hashed),
        "reduction_factor": float(raw_r.mean() / hashed_r.mean()),
        "pattern_vs_output": {"pearson": rho_pattern, "bytes": n,
                              "bound": validation.null_correlation_bound(n)},
    }


def run_pipeline(cfg, out_dir=None, threads=None):
    """simulate -> characterize -> calibrate -> extract -> test, then correlations.

    Raises StageError tagged with the first failing stage.
    """
    out = Path(out_dir or cfg.output_dir)
    summary = {"config_digest": cfg.digest()}

    def stage(name, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except Exception as exc:
            raise StageError(name, exc) from exc

    def prepare():
        out.mkdir(parents=True, exist_ok=True)
        cfg.save(out / "config.toml")

    stage("setup", prepare)
    sim = stage("simulate", simulate, cfg, out, threads)
    ds = stage("load", load_dataset, out / "dataset")
    summary["characterize"] = stage("characterize", characterize, ds, out / "characterize",
                                    cfg.gabor_params())
    entropy = stage("calibrate", calibrate, ds, out / "calibrate")
    summary["entropy"] = entropy.to_dict()
    stream, throughput = stage("extract", extract_dataset, ds, out / "extract", cfg,
                               entropy=entropy, threads=threads)
    throughput.stages["simulate"] = sum(sim["simulation_seconds"].values())
    _write_json(out / "extract" / "throughput.json", throughput.to_dict())
    summary["bitstream"] = {"bits": len(stream), "sha256": stream.sha256()}
    summary["throughput"] = throughput.to_dict()
    report = stage("test", check_bitstream, stream.bits, out / "test", cfg, threads)
    summary["test"] = {"verdict": "pass" if report.passed else "fail",
                       "subsequences": report.subsequences}
    ext_cfg = cfg.extractor_config(resolve_block_bits(cfg.extractor.block_bits, entropy))
    corr = stage("correlate", correlation_analysis, ds, ext_cfg)
    _write_json(out / "correlation.json", corr)
    summary["correlation"] = {k: v for k, v in corr.items()
                              if not k.endswith("abs_pearson")}
    summary["passed"] = report.passed
    _write_json(out / "summary.json", summary)
    return summary, report


def bench(cfg, frames=32, repeats=3, threads=None, block_bits=None):
    """Simulation and extraction throughput measured separately."""
    threads = threads or cfg.threads
    plan = frame_plan(cfg)["inter"][:frames]
    if len(plan) < frames:
        plan = [(cfg.dataset.pattern_seed + 1 + i, derive_seed(cfg.camera.noise_seed, "inter", i))
                for i in range(frames)]
    t0 = time.perf_counter()
    images = render_frames(cfg, plan, threads=threads)
    sim_time = time.perf_counter() - t0
    ext_cfg = cfg.extractor_config(block_bits or cfg.extractor.block_bits or 344)
    best = None
    for _ in range(repeats):
        _, report = timed_extract(images, ext_cfg, threads)
        if best is None or report.wall_time < best.wall_time:
            best = report
    best.stages["simulate"] = sim_time
    expected = sum(output_bits(len(image_to_bytes(f, ext_cfg.crop)) * 8, ext_cfg.block_bits)
                   for f in images)
    if best.random_bits != expected:
        raise RuntimeError(f"output-length law violated: {best.random_bits} != {expected}")
    return best, {"frames_per_second": frames / sim_time if sim_time > 0 else float("inf"),
                  "simulation_seconds": sim_time,
                  "simulated_raw_bits_per_second": best.raw_bits / sim_time}


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()

