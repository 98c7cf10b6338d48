import json

import numpy as np
import pytest
import requests

from tabkit.data import RaggedRowsError
from tabkit.llmgen import (
    CARBON_EMISSIONS_TABLE,
    HAPPINESS_TABLE,
    ChatMessage,
    ConnectionFailedError,
    CountMismatchError,
    GenSpec,
    HttpStatusError,
    HttpTransport,
    MalformedResponseError,
    MockTransport,
    RetryableStatusError,
    TableParseError,
    build_prompt,
    chat_loop,
    get_completion,
    llm_generate_dataset,
    parse_table,
    render_table,
)
from utils import UsageError


def _column(ds, name):
    return ds.X[:, ds.feature_names.index(name)]


# ─── REQUEST TYPES ─────────────────────────────────────────────────
def test_genspec_validation():
    with pytest.raises(UsageError):
        GenSpec('weather', 0, 3)
    with pytest.raises(UsageError):
        GenSpec('weather', 5, 3, temperature=-0.1)
    spec = GenSpec('weather', 5, 3, column_hints=['city', 'temp', 'rain'])
    assert spec.column_hints == ('city', 'temp', 'rain')
    assert spec.to_dict()['column_hints'] == ['city', 'temp', 'rain']


def test_message_roles():
    with pytest.raises(UsageError):
        ChatMessage('robot', 'hi')


def test_prompt_is_deterministic():
    spec = GenSpec('carbon emissions', 10, 4, column_hints=['Country', 'Year'])
    prompt = build_prompt(spec)
    assert prompt == build_prompt(spec)
    assert 'carbon emissions' in prompt
    assert '4 columns and 10 rows' in prompt
    assert 'Country, Year' in prompt

# ─── COMPLETIONS ───────────────────────────────────────────────────
def test_payload_shape(no_sleep):
    transport = MockTransport(['hello'])
    assert get_completion('say hello', transport=transport, sleep=no_sleep) == 'hello'
    payload = transport.call_log[0]
    assert payload['messages'] == [{'role': 'user', 'content': 'say hello'}]
    assert payload['model'] == 'gpt-3.5-turbo'
    assert payload['temperature'] == 0


def test_server_errors_are_retried_then_raised():
    delays = []
    transport = MockTransport(['unused'], statuses=[500, 500, 500])
    with pytest.raises(RetryableStatusError) as excinfo:
        get_completion('hi', transport=transport, sleep=delays.append)
    assert len(transport.call_log) == 3
    assert delays == [1.0, 2.0]
    assert excinfo.value.details['status'] == 500
    assert excinfo.value.exit_code == 5


def test_transient_error_recovers(no_sleep):
    transport = MockTransport(['ok'], statuses=[429, 200])
    assert get_completion('hi', transport=transport, sleep=no_sleep) == 'ok'
    assert len(transport.call_log) == 2


def test_client_errors_are_not_retried(no_sleep):
    transport = MockTransport(['unused'], statuses=[401])
    with pytest.raises(HttpStatusError) as excinfo:
        get_completion('hi', transport=transport, sleep=no_sleep)
    assert not isinstance(excinfo.value, RetryableStatusError)
    assert len(transport.call_log) == 1


def test_malformed_reply(no_sleep):
    class EmptyChoices:
        def send(self, payload):
            return 200, {'choices': []}

    with pytest.raises(MalformedResponseError):
        get_completion('hi', transport=EmptyChoices(), sleep=no_sleep)


def test_missing_transport(no_sleep):
    with pytest.raises(UsageError):
        get_completion('hi', transport=None, sleep=no_sleep)


def test_http_transport_connection_failure(monkeypatch, no_sleep):
    calls = []

    def refuse(*args, **kwargs):
        calls.append(kwargs['headers']['Authorization'])
        raise requests.ConnectionError('refused')

    monkeypatch.setattr(requests, 'post', refuse)
    transport = HttpTransport(endpoint='http://localhost:9/v1/chat', api_key='k')
    with pytest.raises(ConnectionFailedError):
        get_completion('hi', transport=transport, sleep=no_sleep)
    assert calls == ['Bearer k'] * 3

# ─── TABLE PARSING ─────────────────────────────────────────────────
def test_pipe_sample_table():
    ds = parse_table(CARBON_EMISSIONS_TABLE)
    assert (ds.n_rows, ds.n_features) == (10, 4)
    assert _column(ds, 'CO2 Emissions (kt)')[0] == 5395532
    assert _column(ds, 'CO2 Emissions per capita (metric tons)')[0] == pytest.approx(17.6)
    assert ds.columns[0].kind == 'categorical'


def test_latex_sample_table():
    ds = parse_table(HAPPINESS_TABLE)
    assert (ds.n_rows, ds.n_features) == (10, 4)
    assert ds.feature_names == ['Country', 'Happiness Rank', 'Happiness Score', 'GDP per Capita']
    assert _column(ds, 'Happiness Score')[0] == pytest.approx(7.537)
    assert ds.columns[0].categories[int(ds.X[0, 0])] == 'Norway'


@pytest.mark.parametrize('text', [
    "a\tb\tc\n1\t2\t3\n4\t5\t6\n",
    "a  b  c\n1  2  3\n4  5  6\n",
    "a,b,c\n1,2,3\n4,5,6\n",
    "Here you go:\n```\n| a | b | c |\n|---|---|---|\n| 1 | 2 | 3 |\n| 4 | 5 | 6 |\n```\nEnjoy!",
])
def test_other_delimiters(text):
    ds = parse_table(text)
    assert ds.feature_names == ['a', 'b', 'c']
    assert np.array_equal(ds.X, [[1, 2, 3], [4, 5, 6]])


def test_parse_with_target():
    ds = parse_table("| x | label |\n|---|---|\n| 1 | no |\n| 2 | yes |\n| 3 | no |\n", target_column='label')
    assert ds.class_names == ['no', 'yes']
    assert ds.y.tolist() == [0, 1, 0]


def test_parse_failures():
    with pytest.raises(TableParseError):
        parse_table("I could not produce that table.")
    with pytest.raises(TableParseError):
        parse_table("")
    with pytest.raises(TableParseError):
        parse_table("| a | b |\n|---|---|\n")
    with pytest.raises(RaggedRowsError):
        parse_table("| a | b |\n| 1 | 2 |\n| 3 |\n")


def test_count_mismatch():
    with pytest.raises(CountMismatchError) as excinfo:
        parse_table(CARBON_EMISSIONS_TABLE, GenSpec('carbon', 5, 4))
    assert excinfo.value.details['got'] == [10, 4]


def test_render_then_parse(three_class_ds):
    back = parse_table(render_table(three_class_ds), target_column='target')
    assert np.allclose(back.X, three_class_ds.X, rtol=1e-12, atol=0)
    assert np.array_equal(back.y, three_class_ds.y)
    assert back.class_names == ['a', 'b', 'c']

# ─── GENERATION & CONVERSATION ─────────────────────────────────────
def test_generate_dataset_writes_transcript(mock_transport, no_sleep, tmp_path):
    spec = GenSpec('carbon emissions by country', 10, 4)
    path = tmp_path / 'llm' / 'transcript.json'
    ds, transcript = llm_generate_dataset(spec, mock_transport, path, sleep=no_sleep)
    assert (ds.n_rows, ds.n_features) == (10, 4)
    saved = json.loads(path.read_text(encoding='utf-8'))
    assert saved == transcript
    assert saved['parse_status'] == 'ok'
    assert saved['raw_reply'] == CARBON_EMISSIONS_TABLE
    assert saved['prompt'] == build_prompt(spec)


def test_generate_routes_by_topic(mock_transport, no_sleep):
    ds, _ = llm_generate_dataset(GenSpec('world happiness', 10, 4), mock_transport, sleep=no_sleep)
    assert 'Happiness Score' in ds.feature_names


def test_failed_parse_keeps_transcript(mock_transport, no_sleep, tmp_path):
    path = tmp_path / 'transcript.json'
    with pytest.raises(CountMismatchError) as excinfo:
        llm_generate_dataset(GenSpec('carbon emissions', 5, 4), mock_transport, path, sleep=no_sleep)
    assert excinfo.value.details['raw_reply'] == CARBON_EMISSIONS_TABLE
    saved = json.loads(path.read_text(encoding='utf-8'))
    assert saved['parse_status'].startswith('CountMismatchError')


def test_chat_loop_resends_history(no_sleep):
    transport = MockTransport(['first', 'second'])
    lines = iter(['hello', '   ', 'and again', 'exit', 'never read'])
    printed = []
    history = chat_loop(transport, lambda _: next(lines), printed.append,
                        system_prompt='be brief', sleep=no_sleep)
    assert printed == ['first', 'second']
    assert [m.role for m in history] == ['system', 'user', 'assistant', 'user', 'assistant']
    second = transport.call_log[1]['messages']
    assert [m['content'] for m in second] == ['be brief', 'hello', 'first', 'and again']


def test_chat_loop_stops_on_eof_and_turn_limit(no_sleep):
    def eof(_):
        raise EOFError

    assert chat_loop(MockTransport(['x']), eof, print, sleep=no_sleep) == []
    history = chat_loop(MockTransport(['x']), lambda _: 'again', lambda _: None, max_turns=2, sleep=no_sleep)
    assert len(history) == 4
