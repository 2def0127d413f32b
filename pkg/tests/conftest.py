"""Shared fixtures: seeded randomness, a tiny CA, reusable keys.

Expensive key material (512-bit additive keys, RLWE keys) is generated
once per test session from fixed seeds; tests that need fresh keys make
their own.
"""

import json
import random
import threading
import time
from pathlib import Path

import pytest

from jingbing import bfv, paillier, pki, protocol, transport

VECTOR_DIR = Path(__file__).parent / "vectors"


def load_vectors(name):
    with open(VECTOR_DIR / f"{name}.json") as f:
        return json.load(f)


@pytest.fixture
def rng():
    return random.Random(0x5EED)


@pytest.fixture(scope="session")
def paillier_512():
    return paillier.keygen(512, random.Random(1201))


@pytest.fixture(scope="session")
def bfv_keys():
    return bfv.keygen(bfv.params_default(), random.Random(1202))


class Identity:
    def __init__(self, cert, secret):
        self.cert = cert
        self.secret = secret


class TestCa:
    __test__ = False  # not a test class

    def __init__(self, seed=77):
        r = random.Random(seed)
        now = int(time.time())
        self.key, self.root = pki.ca_init(r)
        self.alpha = self._issue(r, "ALPHA", now - 60, now + 86400)
        self.bravo = self._issue(r, "BRAVO", now - 60, now + 86400)

    def _issue(self, r, subject, not_before, not_after):
        key, pub = pki.gen_keypair(r)
        cert = pki.issue_cert(self.key, subject, pub, not_before, not_after, r)
        return Identity(cert, key)

    def issue(self, subject, not_before, not_after, seed=99):
        return self._issue(random.Random(seed), subject, not_before, not_after)


@pytest.fixture(scope="session")
def ca():
    return TestCa()


@pytest.fixture(scope="session")
def foreign_ca():
    return TestCa(seed=78)


def make_dataset(ids_values, columns, bound=31):
    records = tuple(
        protocol.Record(i.encode() if isinstance(i, str) else i, tuple(vs))
        for i, vs in ids_values
    )
    return protocol.Dataset(records, columns, bound)


def id_only_dataset(ids, bound=31):
    records = tuple(
        protocol.Record(i.encode() if isinstance(i, str) else i, ())
        for i in ids
    )
    return protocol.Dataset(records, 0, bound)


class ServerHarness:
    """A transport server on an ephemeral loopback port, in a thread."""

    def __init__(self, config: transport.ServerConfig):
        self.config = config
        self.thread = threading.Thread(
            target=transport.serve, args=(("127.0.0.1", 0), config), daemon=True
        )

    def __enter__(self):
        self.thread.start()
        assert self.config.ready.wait(10), "server did not come up"
        self.addr = ("127.0.0.1", self.config.bound_port)
        return self

    def __exit__(self, *exc):
        self.config.shutdown.set()
        self.thread.join(30)
        assert not self.thread.is_alive(), "server thread did not stop"


class RecordingChannel(transport.FramedChannel):
    """FramedChannel that keeps (direction, type, raw) for every frame."""

    def __init__(self, sock):
        super().__init__(sock)
        self.frames = []

    def send_frame(self, msg_type, payload):
        raw = super().send_frame(msg_type, payload)
        self.frames.append(("sent", msg_type, raw))
        return raw

    def recv_frame(self):
        msg_type, payload, raw = super().recv_frame()
        self.frames.append(("recv", msg_type, raw))
        return msg_type, payload, raw

    @property
    def types(self):
        return [t for _, t, _ in self.frames]
