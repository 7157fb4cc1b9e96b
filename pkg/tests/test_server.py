import json
import socket

import numpy as np
import pytest

from domino.dynamics import BathParams
from domino.env import EpisodeConfig, OscillatorEnv
from domino.rewards import RewardSpec
from domino.server import EnvClient, EnvServer


@pytest.fixture()
def server():
    cfg = EpisodeConfig.independent(
        2, eta=0.4, bath=BathParams(gamma=1e-4, n_th=10.0, sigma_m=0.1),
        horizon=5, reward=RewardSpec(kind="gaussian"))
    srv = EnvServer(cfg, port=0, seed=0)
    srv.serve_background()
    yield srv
    srv.shutdown()
    srv.server_close()


def client(server):
    host, port = server.address
    return EnvClient(host, port)


def test_spec_payload(server):
    c = client(server)
    reply = c.spec()
    assert reply["ok"]
    p = reply["payload"]
    assert p["obs_len"] == 4
    assert p["action_len"] == 2
    assert p["leaves"] == [1, 2]
    assert p["horizon"] == 5
    assert p["action_low"] == -1.0 and p["action_high"] == 1.0
    c.close()


def test_reset_step_round_trip(server):
    c = client(server)
    obs = c.reset(seed=7)["payload"]["obs"]
    assert len(obs) == 4
    r = c.step([0.1, -0.2])
    assert r["ok"]
    p = r["payload"]
    assert len(p["obs"]) == 4
    assert isinstance(p["reward"], float)
    assert p["terminated"] is False
    assert len(p["info"]["energies"]) == 2
    c.close()


def test_truncation_at_horizon(server):
    c = client(server)
    c.reset(seed=1)
    replies = [c.step([0.0, 0.0]) for _ in range(5)]
    assert [r["payload"]["truncated"] for r in replies] == [False] * 4 + [True]
    after = c.step([0.0, 0.0])
    assert after["error"] and after["code"] == "no_episode"
    # session still alive
    assert c.reset(seed=2)["ok"]
    c.close()


def test_step_before_reset(server):
    c = client(server)
    r = c.step([0.0, 0.0])
    assert r["error"] and r["code"] == "no_episode"
    assert c.spec()["ok"]  # session continues
    c.close()


def test_malformed_json_keeps_session(server):
    host, port = server.address
    sock = socket.create_connection((host, port), timeout=10)
    f = sock.makefile("rb")
    sock.sendall(b"this is not json\n")
    reply = json.loads(f.readline())
    assert reply["error"] and reply["code"] == "bad_request"
    sock.sendall(json.dumps({"request": "spec"}).encode() + b"\n")
    assert json.loads(f.readline())["ok"]
    sock.close()


def test_bad_action_shape(server):
    c = client(server)
    c.reset(seed=0)
    r = c.step([0.1])
    assert r["error"] and r["code"] == "bad_action"
    r2 = c.request({"request": "step", "action": "nope"})
    assert r2["error"] and r2["code"] == "bad_action"
    # episode state preserved after the bad action
    assert c.step([0.0, 0.0])["ok"]
    c.close()


def test_unknown_request(server):
    c = client(server)
    r = c.request({"request": "dance"})
    assert r["error"] and r["code"] == "bad_request"
    c.close()


def test_concurrent_sessions_independent(server):
    c1 = client(server)
    c2 = client(server)
    o1 = c1.reset(seed=5)["payload"]["obs"]
    o2 = c2.reset(seed=6)["payload"]["obs"]
    assert o1 != o2
    # interleaved stepping: each connection advances only its own episode
    r1 = c1.step([0.0, 0.0])["payload"]
    o2b = c2.reset(seed=6)["payload"]["obs"]
    assert o2b == o2  # c1 activity never touches c2's stream
    r2 = c2.step([0.0, 0.0])["payload"]
    c1.close()
    c2.close()
    assert r1["info"]["time"] == r2["info"]["time"]


def test_protocol_equivalence_with_in_process_env(server):
    # scripted 5-step session over TCP vs the same episode in process;
    # JSON round-trips doubles exactly, so equality is exact
    cfg = server.episode_config
    rng = np.random.default_rng(3)
    actions = rng.uniform(-1, 1, size=(5, 2))

    c = client(server)
    wire_obs = [c.reset(seed=11)["payload"]["obs"]]
    wire_rewards = []
    for a in actions:
        p = c.step(list(a))["payload"]
        wire_obs.append(p["obs"])
        wire_rewards.append(p["reward"])
    c.close()

    env = OscillatorEnv(cfg, seed=0)
    local_obs = [env.reset(seed=11).tolist()]
    local_rewards = []
    for a in actions:
        r = env.step(a)
        local_obs.append(r.obs.tolist())
        local_rewards.append(r.reward)

    assert wire_obs == local_obs
    assert wire_rewards == local_rewards


def test_oversized_message_rejected(server):
    host, port = server.address
    sock = socket.create_connection((host, port), timeout=10)
    f = sock.makefile("rb")
    sock.sendall(b'{"request": "spec", "pad": "' + b"x" * (1 << 20)
                 + b'"}\n')
    reply = json.loads(f.readline())
    assert reply["error"] and reply["code"] == "bad_request"
    sock.sendall(json.dumps({"request": "spec"}).encode() + b"\n")
    assert json.loads(f.readline())["ok"]
    sock.close()
