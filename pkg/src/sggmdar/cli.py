"""Command line entry point: ``sggmdar simulate|fit|summarize|metrics``."""

import argparse
from concurrent.futures import ThreadPoolExecutor
import logging
import os
import sys

import numpy as np

from . import __version__
from .config import config_hash, load_config
from .errors import ConfigError, DataError, DimensionMismatch, NoMatchingSnapshots, SamplerAbort
from .inference import summarize
from .metrics import align_labels, mean_sd, state_metrics
from .numerics import rng_stream
from .persistence import (
    RunManifest,
    atomic_write,
    manifest_path,
    read_chain,
    read_data_csv,
    read_report,
    read_truth,
    write_chain,
    write_data_csv,
    write_histograms,
    write_local_csv,
    write_manifest,
    write_report,
    write_truth,
)
from .sampler import run_mcmc
from .simulation import simulate_dataset

log = logging.getLogger("sggmdar")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SAMPLER = 0, 2, 3, 4
METRIC_COLUMNS = ("acc", "sens", "spec", "f1", "mcc", "rmse")


def _workers(n):
    return max(1, min(n, os.cpu_count() or 1))


def _split(path, suffix):
    root, ext = os.path.splitext(path)
    return f"{root}{suffix}{ext}"


# --- simulate --------------------------------------------------------------


def cmd_simulate(config_path, out_prefix, seed=None, replicates=1):
    cfg = load_config(config_path)
    sim = cfg.sim_config(seed)
    digest = cfg.digest()
    prefixes = [out_prefix] if replicates == 1 else [f"{out_prefix}_r{i + 1:02d}" for i in range(replicates)]

    def one(i):
        prefix = prefixes[i]
        man = RunManifest("simulate", digest, sim.seed, inputs=[config_path]).start()
        data, truth = simulate_dataset(sim, rng_stream(sim.seed, i))
        truth.extra = {"seed": sim.seed, "stream": i}
        write_data_csv(f"{prefix}.csv", data.y)
        write_truth(f"{prefix}.truth.json", truth)
        man.outputs = [f"{prefix}.csv", f"{prefix}.truth.json"]
        write_manifest(manifest_path(prefix), man.finish())
        return prefix

    with ThreadPoolExecutor(_workers(replicates)) as pool:
        done = list(pool.map(one, range(replicates)))
    return done


# --- fit -------------------------------------------------------------------


def fit_header(cfg, hp, scfg, data, data_path, manifest):
    return {
        "version": __version__,
        "config_hash": cfg.digest(),
        "data_path": data_path,
        "T": data.T, "D": data.D, "Mmax": hp.Mmax, "Pmax": hp.Pmax,
        "hyperparameters": {
            "a0": hp.a0, "b0": hp.b0, "av": hp.av, "bv": hp.bv, "kappa0": hp.kappa0,
            "mu0": hp.mu0, "R0": hp.R0, "state_floor": hp.state_floor,
            "omega_diag_upper": hp.omega_diag_upper,
        },
        "sampler": dict(scfg.__dict__),
        "manifest": manifest.as_dict(),
    }


def cmd_fit(data_paths, config_path, out_path, seed=None, chains=None, thin=None):
    cfg = load_config(config_path)
    scfg = cfg.sampler_config(seed, thin, chains)
    jobs = []
    for data_path in data_paths:
        out = out_path if len(data_paths) == 1 else os.path.join(
            out_path, os.path.splitext(os.path.basename(data_path))[0] + ".chain.jsonl")
        for c in range(scfg.chains):
            jobs.append((data_path, out if scfg.chains == 1 else _split(out, f".c{c + 1}"), c))
    datasets = {p: read_data_csv(p) for p in data_paths}

    def one(job):
        data_path, out, c = job
        data = datasets[data_path]
        hp = cfg.hyper(data.D)
        man = RunManifest("fit", cfg.digest(), scfg.seed, inputs=[data_path, config_path], outputs=[out]).start()
        chain = run_mcmc(scfg, data, hp, chain_id=c)
        man.finish()
        write_chain(out, chain, fit_header(cfg, hp, scfg, data, data_path, man))
        write_manifest(manifest_path(out), man)
        log.info("wrote %s (%d snapshots)", out, len(chain))
        return out

    with ThreadPoolExecutor(_workers(len(jobs))) as pool:
        return list(pool.map(one, jobs))


# --- summarize -------------------------------------------------------------


def cmd_summarize(chain_path, out_path, level=0.95, data_path=None):
    chain, header = read_chain(chain_path)
    data_path = data_path or header.get("data_path")
    data = read_data_csv(data_path)
    if (data.T, data.D) != (int(header["T"]), int(header["D"])):
        raise DataError(f"data shape {(data.T, data.D)} does not match chain {(header['T'], header['D'])}", data_path)
    man = RunManifest("summarize", header.get("config_hash", ""), header.get("sampler", {}).get("seed"),
                      inputs=[chain_path, data_path]).start()
    summary = summarize(chain, data, level=level)
    root = os.path.splitext(out_path)[0]
    local_csv, hist_csv = f"{root}.local.csv", f"{root}.hist.csv"
    write_report(out_path, summary, {"chain_path": chain_path, "data_path": data_path})
    write_local_csv(local_csv, summary.local_probs)
    write_histograms(hist_csv, [("phi", summary.phi_samples), ("pi", summary.pi_samples)])
    man.outputs = [out_path, local_csv, hist_csv]
    write_manifest(manifest_path(out_path), man.finish())
    return summary


# --- metrics ---------------------------------------------------------------


def replicate_rows(truth, report):
    """One row per true state; the estimated state is found by label alignment."""
    mapping = align_labels(truth.gamma, report["gamma_global"])
    true_omega = truth.omega_in_data_units()
    if true_omega.shape[1:] != report["omega"].shape[1:]:
        raise DimensionMismatch(f"truth D={true_omega.shape[1]} but report D={report['omega'].shape[1]}")
    rows = []
    for j in range(true_omega.shape[0]):
        hits = np.flatnonzero(mapping == j)
        row = {"state": j + 1, "graph": truth.graph_kinds[j] if j < len(truth.graph_kinds) else ""}
        if hits.size:
            k = int(hits[0])
            row["matched"] = k + 1
            row.update(state_metrics(true_omega[j], report["omega"][k], report["adjacency"][k]))
        else:
            row["matched"] = None
            row.update({c: None for c in METRIC_COLUMNS})
        rows.append(row)
    return rows


def _cell(v):
    if v is None:
        return "null"
    if isinstance(v, str):
        return v
    return "%.17g" % v if isinstance(v, float) else str(v)


def cmd_metrics(truth_paths, report_paths, out_path, digits=3):
    if len(truth_paths) != len(report_paths):
        raise DimensionMismatch(f"{len(truth_paths)} truth files but {len(report_paths)} reports")
    all_rows = []
    for r, (tp, rp) in enumerate(zip(truth_paths, report_paths), start=1):
        for row in replicate_rows(read_truth(tp), read_report(rp)):
            all_rows.append({"replicate": r, **row})
    header = ["replicate", "state", "graph", "matched", *METRIC_COLUMNS]
    lines = [",".join(header)]
    lines += [",".join(_cell(row[h]) for h in header) for row in all_rows]
    if len(truth_paths) > 1:
        for j in sorted({row["state"] for row in all_rows}):
            sub = [row for row in all_rows if row["state"] == j]
            cells = ["mean(sd)", str(j), sub[0]["graph"], ""]
            cells += [_cell(mean_sd([row[c] for row in sub], digits)) for c in METRIC_COLUMNS]
            lines.append(",".join(f'"{c}"' if " " in c else c for c in cells))
    atomic_write(out_path, "\n".join(lines) + "\n")
    man = RunManifest("metrics", config_hash({"truth": truth_paths, "reports": report_paths}),
                      inputs=[*truth_paths, *report_paths], outputs=[out_path]).start()
    write_manifest(manifest_path(out_path), man.finish())
    return all_rows


# --- entry point -----------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="sggmdar", description="Sparse graphical DAR hidden-state models")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate synthetic data and truth files")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True, help="output prefix")
    s.add_argument("--replicates", type=int, default=1)

    f = sub.add_parser("fit", help="run the sampler on CSV data")
    f.add_argument("--data", nargs="+", required=True)
    f.add_argument("--config")
    f.add_argument("--seed", type=int)
    f.add_argument("--out", required=True, help="chain file, or a directory for several data files")
    f.add_argument("--chains", type=int)
    f.add_argument("--thin", type=int)

    m = sub.add_parser("summarize", help="post-process a chain into a report")
    m.add_argument("--chain", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--level", type=float, default=0.95)
    m.add_argument("--data", help="override the data path stored in the chain header")

    e = sub.add_parser("metrics", help="score reports against simulation truth")
    e.add_argument("--truth", nargs="+", required=True)
    e.add_argument("--report", nargs="+", required=True)
    e.add_argument("--out", required=True)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            if args.replicates < 1:
                raise ConfigError("must be positive", "--replicates")
            cmd_simulate(args.config, args.out, args.seed, args.replicates)
        elif args.command == "fit":
            cmd_fit(args.data, args.config, args.out, args.seed, args.chains, args.thin)
        elif args.command == "summarize":
            if not 0 < args.level < 1:
                raise ConfigError("must lie in (0, 1)", "--level")
            cmd_summarize(args.chain, args.out, args.level, args.data)
        elif args.command == "metrics":
            cmd_metrics(args.truth, args.report, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SamplerAbort as exc:
        print(f"sampler error: {exc}", file=sys.stderr)
        return EXIT_SAMPLER
    except NoMatchingSnapshots as exc:
        print(f"data error: {exc}; M mass {exc.m_mass}; P mass {exc.p_mass}", file=sys.stderr)
        return EXIT_DATA
    except (DataError, DimensionMismatch, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
