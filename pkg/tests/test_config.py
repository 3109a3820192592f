"""Config file parsing, validation, and malicious-count rounding."""
import dataclasses

import pytest
from hypothesis import given, strategies as st

from chainsim.config import (
    DuplicateKey,
    MalformedLine,
    MissingKey,
    SimulationConfig,
    UnknownKey,
    ValueOutOfRange,
    malicious_count,
    parse_config,
    to_config_text,
)
from conftest import SAMPLE_CONFIG_TEXT, SAMPLE_CONFIG_VALUES, make_cfg


def test_sample_file_parses_to_published_values():
    cfg = parse_config(SAMPLE_CONFIG_TEXT)
    assert dataclasses.asdict(cfg) == SAMPLE_CONFIG_VALUES


def test_zero_malicious_fraction_accepted():
    text = SAMPLE_CONFIG_TEXT.replace("MALICIOUS = 0.16", "MALICIOUS = 0.0")
    assert parse_config(text).malicious_fraction == 0.0


def test_missing_nodes_line_rejected():
    text = "\n".join(
        line for line in SAMPLE_CONFIG_TEXT.splitlines()
        if not line.startswith("NODES")
    )
    with pytest.raises(MissingKey) as exc:
        parse_config(text)
    assert exc.value.name == "NODES"


def test_duplicate_key_rejected():
    with pytest.raises(DuplicateKey):
        parse_config(SAMPLE_CONFIG_TEXT + "NODES = 8\n")


def test_unknown_key_rejected():
    with pytest.raises(UnknownKey):
        parse_config(SAMPLE_CONFIG_TEXT + "EXTRA = 1\n")


def test_keys_are_case_sensitive():
    with pytest.raises(UnknownKey):
        parse_config(SAMPLE_CONFIG_TEXT.replace("NODES =", "nodes ="))


def test_malformed_lines_rejected():
    with pytest.raises(MalformedLine):
        parse_config(SAMPLE_CONFIG_TEXT + "garbage line\n")
    with pytest.raises(MalformedLine):
        parse_config(SAMPLE_CONFIG_TEXT.replace("NODES = 120", "NODES = abc"))
    with pytest.raises(MalformedLine):
        parse_config(SAMPLE_CONFIG_TEXT.replace("NODES = 120", "NODES ="))


def test_comments_and_blank_lines_ignored():
    text = "// leading comment\n\n" + SAMPLE_CONFIG_TEXT + "\n  // trailing\n"
    assert parse_config(text) == parse_config(SAMPLE_CONFIG_TEXT)


@pytest.mark.parametrize("key,value", [
    ("NODES", "1"),
    ("TRANSACTIONS", "0"),
    ("DELAY", "-1"),
    ("BLK_SIZE", "0"),
    ("MALICIOUS", "1.0"),
    ("MALICIOUS", "-0.1"),
    ("SIG_THR", "13"),       # above VALID_THR = 12
    ("SIG_THR", "0"),
    ("VALID_FEE", "-2"),
    ("REWARD", "-1"),
])
def test_out_of_range_values_rejected(key, value):
    lines = []
    for line in SAMPLE_CONFIG_TEXT.splitlines():
        if line.startswith(key + " "):
            lines.append(f"{key} = {value}")
        else:
            lines.append(line)
    with pytest.raises(ValueOutOfRange):
        parse_config("\n".join(lines))


def test_validators_bounded_by_nodes():
    with pytest.raises(ValueOutOfRange):
        make_cfg(nodes=4, validators_per_entity=4, signature_threshold=2).validate()


def test_round_trip_through_config_text():
    cfg = parse_config(SAMPLE_CONFIG_TEXT)
    assert parse_config(to_config_text(cfg)) == cfg


def test_malicious_count_examples():
    assert malicious_count(make_cfg(nodes=120, malicious_fraction=0.16,
                                    validators_per_entity=4)) == 19
    assert malicious_count(make_cfg(nodes=120, malicious_fraction=0.0,
                                    validators_per_entity=4)) == 0
    assert malicious_count(make_cfg(nodes=50, malicious_fraction=0.5,
                                    validators_per_entity=4)) == 25


@given(nodes=st.integers(min_value=2, max_value=10000),
       fraction=st.floats(min_value=0.0, max_value=0.999))
def test_malicious_count_within_half_node(nodes, fraction):
    cfg = SimulationConfig(**{**dataclasses.asdict(make_cfg()),
                              "nodes": nodes, "malicious_fraction": fraction})
    count = malicious_count(cfg)
    assert 0 <= count <= nodes
    assert abs(count / nodes - fraction) <= 0.5 / nodes + 1e-9
