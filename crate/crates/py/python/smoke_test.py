"""Smoke test for the edgeframe Python bindings.

Build and install first:
    pip install --no-build-isolation -e crates/py
then run:
    python crates/py/python/smoke_test.py
"""

import os
import struct
import tempfile
import zlib

import edgeframe


def check_wire():
    env = edgeframe.Envelope("HEARTBEAT", 7, 3, b"")
    raw = env.encode()
    assert len(raw) == edgeframe.HEADER_LEN + edgeframe.TRAILER_LEN == env.wire_len()
    magic, version, code, reserved, session, seq, length = struct.unpack(">2sBBHIII", raw[:18])
    assert (magic, version, reserved, session, seq, length) == (b"\xed\x9e", 1, 0, 7, 3, 0)
    assert code == 6
    assert struct.unpack(">I", raw[-4:])[0] == zlib.crc32(raw[:-4])

    frame = edgeframe.Envelope("FRAME", 1, 2, bytes(range(40)))
    stream = frame.encode() + env.encode()
    first, used = edgeframe.decode(stream)
    assert first == frame and first.msg_type == "FRAME"
    second, _ = edgeframe.decode(stream[used:])
    assert second == env
    assert edgeframe.decode(stream[:10]) is None

    broken = bytearray(raw)
    broken[10] ^= 0xFF
    try:
        edgeframe.decode(bytes(broken))
    except ValueError:
        pass
    else:
        raise AssertionError("corrupted frame decoded")


def check_faces():
    model = edgeframe.FaceModel.standard()
    assert (model.width, model.height, model.k) == (32, 32, 10)
    assert model.eigenvalues == sorted(model.eigenvalues, reverse=True)
    gallery = edgeframe.generate_gallery()
    assert len(gallery) == 50
    label, w, h, pixels = gallery[0]
    got, distance = model.classify(w, h, pixels)
    assert got == label, (got, label)

    small = edgeframe.FaceModel.train([(l, w, h, bytes(p)) for l, w, h, p in gallery[:15]], 5)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "faces.model")
        small.save(path)
        again = edgeframe.FaceModel.load(path)
        assert again.eigenvalues == small.eigenvalues

    # paste two different identities onto a flat 128x80 frame
    other = next(g for g in gallery if g[0] != label)
    width, height = 128, 80
    frame = bytearray([128] * (width * height))
    for (_, fw, fh, face), (x0, y0) in [(gallery[0], (16, 16)), (other, (80, 32))]:
        for row in range(fh):
            frame[(y0 + row) * width + x0:(y0 + row) * width + x0 + fw] = face[row * fw:(row + 1) * fw]
    boxes = model.recognize(width, height, bytes(frame))
    assert sorted(b["label"] for b in boxes) == sorted([label, other[0]]), boxes


def check_navigation():
    graph = edgeframe.NavGraph.demo()
    assert graph.node_count == 24
    dests = dict(graph.destinations())
    assert 23 in dests
    waypoints, cost = graph.shortest_path(0, 23)
    assert waypoints[0] == 0 and waypoints[-1] == 23 and cost > 0


def check_scenario_and_bench():
    script = "t=0 zone=gate\nt=100 dest=23\nassert received NAV_DEST_INFO\n"
    run = edgeframe.run_scenario(script, seed=1)
    assert run["passed"], run["failure"]
    again = edgeframe.run_scenario(script, seed=1)
    assert again["transcript"] == run["transcript"]
    failing = edgeframe.run_scenario("t=0 zone=gate\nassert activated facerec\n")
    assert not failing["passed"] and "facerec" in failing["failure"]

    edge, cloud = edgeframe.NetProfile.edge(), edgeframe.NetProfile.cloud()
    edge_rtt = edgeframe.bench_latency(edge, n=20)
    cloud_rtt = edgeframe.bench_latency(cloud, n=20)
    assert sum(edge_rtt) < sum(cloud_rtt)
    assert all(abs(r - edge.predicted_rtt_ms(64, 64)) < 1.0 for r in edge_rtt)
    assert edgeframe.bench_throughput(edge) > edgeframe.bench_throughput(cloud)


if __name__ == "__main__":
    check_wire()
    check_faces()
    check_navigation()
    check_scenario_and_bench()
    print("edgeframe python smoke test: ok")
