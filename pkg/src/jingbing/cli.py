"""Operator-facing command line.

Subcommands:

* ``ca init`` / ``ca issue``: run the mini certificate authority.
* ``gendata``: synthetic client/server datasets plus an expected-results
  file computed by the plaintext oracle.
* ``server``: long-lived protocol service over one dataset.
* ``client``: one protocol run; prints ``key=value`` result lines.

All file arguments are loaded and checked before any network activity.
Errors print a single ``error: <reason>`` line to stderr and exit
non-zero: 2 validation, 3 handshake or certificate, 4 protocol, 5 I/O.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import dataio, paillier, pki, protocol, transport
from .errors import (
    JingBingError,
    PkiError,
    ValidationError,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_HANDSHAKE = 3
EXIT_PROTOCOL = 4
EXIT_IO = 5

_LIMIT_PROFILES = {
    "default": protocol.DEFAULT_LIMITS,
    "paper": protocol.PAPER_LIMITS,
}


def _op_entry(text: str) -> tuple[int, protocol.Operator]:
    """Parse one --op flag: <col>:<sum|sumsq>."""
    col_text, sep, op_text = text.partition(":")
    if not sep or not col_text.isdigit():
        raise argparse.ArgumentTypeError(
            f"{text!r} is not of the form <col>:<sum|sumsq>"
        )
    try:
        op = protocol.Operator.from_token(op_text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return int(col_text), op


def _add_identity_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cert", required=True, help="own certificate file")
    p.add_argument("--key", required=True, help="own secret key file")
    p.add_argument("--root", required=True, help="root CA certificate file")


def _add_limit_args(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--limits", choices=sorted(_LIMIT_PROFILES), default="default",
        help="limits profile (paper: 20 records, values <= 31)",
    )
    p.add_argument(
        "--bound", type=int, default=None,
        help="declared per-value bound (default: the profile's maximum)",
    )


def _resolve_limits(args) -> tuple[protocol.Limits, int]:
    limits = _LIMIT_PROFILES[args.limits]
    bound = args.bound if args.bound is not None else limits.max_bound
    return limits, bound


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jingbing",
        description="private join with per-column aggregates",
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="log at INFO level"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ca = sub.add_parser("ca", help="certificate authority")
    ca_sub = ca.add_subparsers(dest="ca_command", required=True)

    ca_init = ca_sub.add_parser("init", help="create a root CA")
    ca_init.add_argument("--dir", required=True, help="directory for root key and cert")
    ca_init.add_argument("--days", type=int, default=3650)
    ca_init.set_defaults(func=cmd_ca_init)

    ca_issue = ca_sub.add_parser("issue", help="issue a leaf certificate")
    ca_issue.add_argument("--dir", required=True, help="CA directory from `ca init`")
    ca_issue.add_argument("--subject", required=True, help="2..32 capital letters")
    ca_issue.add_argument("--days", type=int, default=365)
    ca_issue.add_argument("--out-dir", default=".")
    ca_issue.set_defaults(func=cmd_ca_issue)

    gen = sub.add_parser("gendata", help="generate matched synthetic datasets")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--size-a", type=int, required=True, help="client set size")
    gen.add_argument("--size-b", type=int, required=True, help="server set size")
    gen.add_argument("--intersection", type=int, required=True)
    gen.add_argument("--columns", type=int, default=1)
    gen.add_argument("--bound", type=int, default=31)
    gen.add_argument("--out-dir", default=".")
    gen.set_defaults(func=cmd_gendata)

    server = sub.add_parser("server", help="serve protocol sessions")
    _add_identity_args(server)
    server.add_argument("--data", required=True, help="server dataset CSV")
    server.add_argument("--listen", default="0.0.0.0")
    server.add_argument("--port", type=int, default=transport.DEFAULT_PORT)
    _add_limit_args(server)
    server.add_argument("--transcript-dir", default=".")
    server.add_argument(
        "--max-sessions", type=int, default=None,
        help="stop after this many connections (default: run until ^C)",
    )
    server.set_defaults(func=cmd_server)

    client = sub.add_parser("client", help="run the protocol once")
    _add_identity_args(client)
    client.add_argument("--data", required=True, help="client dataset CSV")
    client.add_argument("--server", required=True, help="server host")
    client.add_argument("--port", type=int, default=transport.DEFAULT_PORT)
    client.add_argument(
        "--op", dest="ops", type=_op_entry, action="append", required=True,
        metavar="COL:OP", help="aggregate to request, e.g. 0:sum or 1:sumsq",
    )
    _add_limit_args(client)
    client.add_argument("--transcript-dir", default=None)
    client.add_argument(
        "--paillier-bits", type=int, default=paillier.DEFAULT_KEY_BITS,
        choices=sorted(paillier.KEY_SIZES),
    )
    client.set_defaults(func=cmd_client)

    return parser


def cmd_ca_init(args) -> int:
    ca_dir = Path(args.dir)
    ca_dir.mkdir(parents=True, exist_ok=True)
    key, root = pki.ca_init(validity_days=args.days)
    key_path = ca_dir / "root.key"
    cert_path = ca_dir / "root.cert"
    pki.save_secret(key_path, key)
    pki.save_cert(cert_path, root)
    print(f"subject={root.subject}")
    print(f"cert={cert_path}")
    print(f"key={key_path}")
    return EXIT_OK


def cmd_ca_issue(args) -> int:
    ca_dir = Path(args.dir)
    ca_key = pki.load_secret(ca_dir / "root.key")
    key, pub = pki.gen_keypair()
    now = int(time.time())
    cert = pki.issue_cert(
        ca_key, args.subject, pub, now - 300, now + args.days * 86400
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cert_path = out_dir / f"{args.subject.lower()}.cert"
    key_path = out_dir / f"{args.subject.lower()}.key"
    pki.save_cert(cert_path, cert)
    pki.save_secret(key_path, key)
    print(f"subject={cert.subject}")
    print(f"serial={cert.serial.hex()}")
    print(f"cert={cert_path}")
    print(f"key={key_path}")
    return EXIT_OK


def cmd_gendata(args) -> int:
    client_csv, server_csv, expected = dataio.gen_data(
        args.seed, args.size_a, args.size_b,
        args.intersection, args.columns, args.bound,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "client": out_dir / "client.csv",
        "server": out_dir / "server.csv",
        "expected": out_dir / "expected.txt",
    }
    paths["client"].write_text(client_csv, encoding="utf-8")
    paths["server"].write_text(server_csv, encoding="utf-8")
    paths["expected"].write_text(expected, encoding="utf-8")
    for name, path in paths.items():
        print(f"{name}={path}")
    return EXIT_OK


def _load_identity(args):
    cert = pki.load_cert(args.cert)
    key = pki.load_secret(args.key)
    root = pki.load_cert(args.root)
    return cert, key, root


def cmd_server(args) -> int:
    cert, key, root = _load_identity(args)
    limits, bound = _resolve_limits(args)
    dataset = dataio.load_dataset(args.data, bound)
    config = transport.ServerConfig(
        cert=cert, secret=key, root=root, dataset=dataset, limits=limits,
        transcript_dir=args.transcript_dir, max_sessions=args.max_sessions,
    )
    try:
        served = transport.serve((args.listen, args.port), config)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_OK
    print(f"sessions={served}")
    return EXIT_OK


def cmd_client(args) -> int:
    cert, key, root = _load_identity(args)
    limits, bound = _resolve_limits(args)
    dataset = dataio.load_dataset(args.data, bound)
    spec = protocol.AggregationSpec(tuple(args.ops))
    config = transport.ClientConfig(
        cert=cert, secret=key, root=root, dataset=dataset, spec=spec,
        limits=limits, paillier_bits=args.paillier_bits,
        transcript_dir=args.transcript_dir,
    )
    output = transport.run_client((args.server, args.port), config)
    print(f"cardinality={output.cardinality}")
    for col, op in spec.entries:
        print(f"{op.token}_col{col}={output.aggregates[(col, op)]}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ValidationError as exc:
        return _fail(EXIT_VALIDATION, exc)
    except PkiError as exc:
        return _fail(EXIT_HANDSHAKE, exc)
    except JingBingError as exc:
        return _fail(EXIT_PROTOCOL, exc)
    except ConnectionError as exc:
        return _fail(EXIT_IO, exc)
    except OSError as exc:
        return _fail(EXIT_IO, exc)


def _fail(code: int, exc: Exception) -> int:
    print(f"error: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
