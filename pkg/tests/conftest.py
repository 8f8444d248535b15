import numpy as np
import pytest


def _field(value, width):
    text = str(value).encode("ascii")
    assert len(text) <= width, (value, width)
    return text.ljust(width, b" ")


def make_edf(path, signals, n_records, record_duration=1.0, version=b"0       "):
    """Write a plain EDF file byte by byte.

    ``signals`` is a list of dicts with keys label, spr (samples per record),
    pmin, pmax, dmin, dmax and digital (int array of length n_records * spr).
    """
    ns = len(signals)
    head = bytearray()
    head += version
    head += _field("X X X X", 80)
    head += _field("Startdate 01-JAN-2020 X X X", 80)
    head += _field("01.01.20", 8)
    head += _field("00.00.00", 8)
    head += _field(256 * (ns + 1), 8)
    head += _field("", 44)
    head += _field(n_records, 8)
    head += _field(record_duration, 8)
    head += _field(ns, 4)
    for key, width in (("label", 16), ("transducer", 80), ("units", 8), ("pmin", 8),
                       ("pmax", 8), ("dmin", 8), ("dmax", 8), ("prefilter", 80),
                       ("spr", 8), ("reserved", 32)):
        for s in signals:
            default = {"transducer": "", "units": "uV", "prefilter": "", "reserved": ""}
            head += _field(s.get(key, default.get(key, "")), width)
    assert len(head) == 256 * (ns + 1)
    body = bytearray()
    for r in range(n_records):
        for s in signals:
            chunk = np.asarray(s["digital"][r * s["spr"]:(r + 1) * s["spr"]], dtype="<i2")
            body += chunk.tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(head) + bytes(body))
    return path


@pytest.fixture
def edf_writer():
    return make_edf


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
