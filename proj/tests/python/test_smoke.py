import math

import pytest

import nvbleed


def test_schedule_matches_packet_arithmetic():
    s = nvbleed.schedule_transfer(300, 3)
    assert s["packets"] == 2
    assert s["payload_flits"] == [16, 4, 0]
    assert s["wire_bytes"] == 320 + 64


def test_levenshtein():
    assert nvbleed.levenshtein("kitten", "sitting") == 3
    assert nvbleed.levenshtein("", "0101") == 4


def test_window_stats_against_python():
    x = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0]
    s = nvbleed.window_stats(x)
    mean = sum(x) / len(x)
    assert s["mean"] == pytest.approx(mean)
    assert s["var"] == pytest.approx(sum((v - mean) ** 2 for v in x) / len(x))
    assert s["count_am"] == sum(1 for v in x if v > mean)


def test_profiles():
    gcp = nvbleed.load_profile("gcp")
    assert gcp.slots_per_peer_link == 3
    assert "probe_overhead" in str(gcp)
    with pytest.raises(nvbleed.NvbleedError):
        nvbleed.load_profile("no-such-profile")


def test_covert_channel_is_deterministic():
    a = nvbleed.covert_run(bits=1000, trials=1, seed=3)
    b = nvbleed.covert_run(bits=1000, trials=1, seed=3)
    assert a == b
    assert a["error_rate"] < 0.1
    assert math.isclose(a["bandwidth_bps"], 70590, rel_tol=0.2)


def test_fingerprint_small():
    r = nvbleed.fingerprint(classes=3, traces_per_class=5, samples=300)
    assert r["scenario"] == "apps18"
    assert 0.0 <= r["f1"] <= 1.0


def test_cnn1_candidates_and_extraction():
    conv = nvbleed.conv_candidates(28, 1, 28 * 28 * 64 * 4)
    assert any(c["F"] == 5 and c["S"] == 1 and c["P"] == 2 for c in conv)
    csv = nvbleed.record_model_trace("MLP", iterations=20)
    rep = nvbleed.extract(csv, truth="MLP")
    assert rep["all_contain_truth"] is True
    assert rep["fc_widths"] == [512, 256, 10]


def test_errors_carry_their_code():
    with pytest.raises(nvbleed.NvbleedError, match="invalid_argument"):
        nvbleed.parse_model("NoSuchNet")
    with pytest.raises(nvbleed.NvbleedError, match="not_found"):
        nvbleed.pool_candidates(8, 3, 7 * 64 * 4)
