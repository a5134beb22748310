import os
import sys
import json
import argparse
import logging
from itertools import product
from pathlib import Path

import numpy as np
from dotenv import load_dotenv
from pydantic import ValidationError

from config import DatabaseConfig, ExperimentConfig
from database import ReportStore
from hybridlinks.adversary import GameConfig, exact_leakage, run_distinguishing_game
from hybridlinks.analysis import information_rate, rate_from_counts, seed_study, write_csv
from hybridlinks.bitmat import BitMatrix
from hybridlinks.crypt import LinkFrame, frame_decrypt, keygen
from hybridlinks.errors import (CodewordError, ConfigError, DecryptionError, DeskScaleError, DimensionError,
                                FrameFormatError, VerificationError)
from hybridlinks.is_codec import generate_codebook
from hybridlinks.pipeline import run_pipeline, simulate_reliability
from hybridlinks.polar import entropy_profile
from hybridlinks.source_codec import SeedMatrix, source_decode_matrix

DEFAULT_OUTPUTS = {
    "profile": "profile.json",
    "pipeline": "pipeline_report.json",
    "leak": "leak_report.json",
    "game": "game_report.json",
    "rate": "rate_grid.csv",
    "seed": "seed_study.csv",
}
EXIT_ERROR, EXIT_CONFIG, EXIT_DESK_SCALE, EXIT_VERIFICATION = 1, 2, 3, 4


def setup_logging(verbose: bool):
    """Configure logging level and format."""
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )


def parse_args(argv=None):
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--verbose', '-v', action='store_true', help='Enable verbose logging')
    common.add_argument('--config', type=str, help='Path to a JSON experiment configuration')
    common.add_argument('--seed', type=int, help='Seed for every random choice of the run')
    common.add_argument('--threads', type=int, help='Maximum number of worker threads')
    common.add_argument('--strict', action='store_true', default=None, help='Exit with code 4 when a check fails')
    common.add_argument('--out', type=str, help='Report output path')
    common.add_argument('--db', type=str, help='Record reports in this SQLite store (default: $HYBRIDLINKS_DB)')
    common.add_argument('--trials', type=int, help='Number of Monte-Carlo trials')

    parser = argparse.ArgumentParser(description='Experiments for seeded polar compression with partial encryption over multiple links')
    commands = parser.add_subparsers(dest='command', required=True)
    commands.add_parser('profile', parents=[common], help='Compute the entropy profile of the source code')
    pipeline = commands.add_parser('pipeline', parents=[common], help='Encode, encrypt, decrypt and decode end to end')
    pipeline.add_argument('--input', type=str, help='Source matrix file (ell x n bit matrix)')
    pipeline.add_argument('--frame', type=str, help='Frame file written by the run (default: frame.nuh2)')
    pipeline.add_argument('--replay', action='store_true', help='Decode an existing frame file instead of writing one')
    commands.add_parser('leak', parents=[common], help='Exact leakage to an eavesdropper on w links')
    commands.add_parser('game', parents=[common], help='Distinguishing game against the partially encrypted frame')
    commands.add_parser('rate', parents=[common], help='Information rate over a parameter grid')
    commands.add_parser('seed', parents=[common], help='Seed length study over blocklengths')
    return parser.parse_args(argv)


def load_config(args) -> ExperimentConfig:
    """Configuration file (or defaults) with command-line overrides applied."""
    config = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    return config.with_overrides(
        seed=args.seed,
        threads=args.threads,
        strict=args.strict,
        trials=args.trials,
        input=getattr(args, 'input', None),
        frame=getattr(args, 'frame', None),
        replay=getattr(args, 'replay', False) or None,
    )


def write_report(command: str, config: ExperimentConfig, result: dict, out: Path) -> dict:
    """Write the JSON report, echoing the full configuration."""
    report = {"command": command, "config": config.model_dump(), "result": result}
    out.write_text(json.dumps(report, indent=2, sort_keys=True))
    logging.info(f"Wrote {command} report to {out}")
    return report


def cmd_profile(config: ExperimentConfig, out: Path):
    params = config.system_params()
    profile = entropy_profile(params.polar_params(), method=config.method, samples=config.samples,
                              seed=config.estimator_seed, threads=config.threads)
    data = profile.to_dict()
    data["config"] = config.model_dump()
    out.write_text(json.dumps(data, indent=2, sort_keys=True))
    logging.info(f"Wrote profile {profile.profile_id} to {out}")
    return profile.to_dict(), True


def _source_matrix(config: ExperimentConfig, n: int) -> BitMatrix:
    if config.input:
        v = BitMatrix.load(config.input)
        if v.shape != (config.ell, n):
            raise DimensionError(f"Input matrix is {v.rows}x{v.cols}, expected {config.ell}x{n}")
        return v
    rng = np.random.default_rng(config.seed)
    return BitMatrix.from_bits((rng.random((config.ell, n)) < config.p).astype(np.uint8))


def cmd_pipeline(config: ExperimentConfig, out: Path):
    params = config.system_params()
    profile = entropy_profile(params.polar_params(), method=config.method, samples=config.samples,
                              seed=config.estimator_seed, threads=config.threads)
    codebook = generate_codebook(params.code_params(config.check_security))
    crypto = params.crypto_params(profile.seed_len)
    keypair = keygen(params.c, params.r, params.scheme, seed=config.seed)
    frame_path = Path(config.frame or "frame.nuh2")
    v = _source_matrix(config, profile.n)

    if config.replay:
        logging.info(f"Replaying frame {frame_path}...")
        # A malformed file is an input error; a frame that fails to decode is a failed check
        frame = LinkFrame.load(frame_path)
        result = {"success": False, "failure": None, "frame_bits": frame.total_bits, "n_tilde": frame.n_tilde,
                  "seed_len": frame.seed_len, "gamma": frame.gamma}
        try:
            compressed, seeds = frame_decrypt(frame, codebook, crypto, keypair.secret_key, profile.profile_id,
                                              threads=config.threads)
        except DecryptionError as e:
            logging.warning(f"Replay of {frame_path} failed to decrypt: {str(e)}")
            result["failure"] = "decryption"
            return result, False
        except CodewordError as e:
            logging.warning(f"Replay of {frame_path} failed to channel-decode: {str(e)}")
            result["failure"] = "channel"
            return result, False
        success = source_decode_matrix(compressed, seeds, profile) == v
        result.update(success=success, failure=None if success else "source")
        return result, success

    rng = np.random.default_rng(config.seed)
    seeds = SeedMatrix.random(params.ell, profile.seed_len, rng)
    outcome = run_pipeline(v, profile, codebook, crypto, keypair, seeds, rng=rng, threads=config.threads)
    outcome.frame.save(frame_path)
    logging.info(f"Wrote frame of {outcome.frame_bits} bits to {frame_path}")
    reliability = simulate_reliability(params, config.trials, seed=config.seed, threads=config.threads,
                                       profile=profile, codebook=codebook, keypair=keypair)
    result = outcome.to_dict()
    result["reliability"] = reliability.to_dict()
    return result, outcome.success


def cmd_leak(config: ExperimentConfig, out: Path):
    params = config.system_params()
    codebook = generate_codebook(params.code_params(config.check_security))
    report = exact_leakage(params, ks_set=config.ks_set, wset=config.wset, codebook=codebook)
    return report.to_dict(), report.max_distance <= report.bound


def cmd_game(config: ExperimentConfig, out: Path):
    params = config.system_params()
    codebook = generate_codebook(params.code_params(config.check_security))
    game = GameConfig(i_star=config.i_star, m1=config.m1, m2=config.m2, trials=config.trials, d=config.d,
                      reveal_ks_minus_one=config.reveal_ks_minus_one, column=config.game_column)
    report = run_distinguishing_game(params, game, codebook=codebook, seed=config.seed, threads=config.threads)
    return report.to_dict(), report.within_bound


def cmd_rate(config: ExperimentConfig, out: Path):
    rows = []
    for n, ell, c, r, dj in product(config.rate_n, config.rate_ell, config.rate_c, config.rate_r, config.rate_dj):
        if c >= ell or dj > n // 2:
            continue
        rows.append(rate_from_counts(n, n // 2, dj, ell, c, r).to_dict())
    write_csv(rows, out)
    consistent = all(row["exact"] for row in rows if row["pad"] == 0)

    params = config.system_params()
    profile = entropy_profile(params.polar_params(), method=config.method, samples=config.samples,
                              seed=config.estimator_seed, threads=config.threads)
    configured = information_rate(profile, params.ell, params.c, params.r).to_dict()
    logging.info(f"Rate grid complete: {len(rows)} points, identity {'holds' if consistent else 'FAILS'}; "
                 f"configured system rate {configured['rate']:.5f}")
    return {"grid_points": len(rows), "identity_holds": consistent, "configured": configured, "grid": rows}, consistent


def cmd_seed(config: ExperimentConfig, out: Path):
    points = seed_study(config.n_list, config.p, config.beta, method=config.method, samples=config.samples,
                        seed=config.estimator_seed, threads=config.threads)
    rows = [point.to_dict() for point in points]
    write_csv(rows, out)
    return {"points": rows}, True


HANDLERS = {
    "profile": cmd_profile,
    "pipeline": cmd_pipeline,
    "leak": cmd_leak,
    "game": cmd_game,
    "rate": cmd_rate,
    "seed": cmd_seed,
}


def run_command(args):
    """Run one command; returns the report dict."""
    config = load_config(args)
    logging.info(f"Running {args.command} (seed {config.seed}, {config.threads} threads)...")
    out = Path(args.out or DEFAULT_OUTPUTS[args.command])
    result, verified = HANDLERS[args.command](config, out)

    if args.command in ("profile",):
        report = {"command": args.command, "config": config.model_dump(), "result": result}
    elif out.suffix == ".csv":
        report = write_report(args.command, config, result, out.with_suffix(".json"))
    else:
        report = write_report(args.command, config, result, out)

    db_path = args.db or (DatabaseConfig().db_path if 'HYBRIDLINKS_DB' in os.environ else None)
    if db_path:
        status = ReportStore(db_path).save_report(args.command, config.model_dump(), result)
        logging.info(f"Report store status: {status}")
        if status == "mismatch" and config.strict:
            raise VerificationError("Report differs from the stored run of the same configuration")

    if not verified:
        if config.strict:
            raise VerificationError(f"{args.command} check failed")
        logging.warning(f"{args.command} check failed (run with --strict to fail the exit code)")
    return report


def main(argv=None):
    load_dotenv()
    args = parse_args(argv)
    setup_logging(args.verbose)

    try:
        run_command(args)
    except DeskScaleError as e:
        logging.error(f"Refusing desk-scale limit: {str(e)}")
        sys.exit(EXIT_DESK_SCALE)
    except VerificationError as e:
        logging.error(f"Verification failed: {str(e)}")
        sys.exit(EXIT_VERIFICATION)
    except (ValidationError, ConfigError, FileNotFoundError, FrameFormatError, ValueError) as e:
        logging.error(f"Configuration error: {str(e)}")
        sys.exit(EXIT_CONFIG)
    except Exception as e:
        logging.error(f"Unexpected error: {str(e)}")
        sys.exit(EXIT_ERROR)


if __name__ == "__main__":
    main()
