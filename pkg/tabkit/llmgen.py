# tabkit/llmgen.py - LLM-backed synthetic table generation over a chat-completions API

from __future__ import annotations

import io
import json
import logging
import os
import re
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Protocol, Sequence, Tuple

import numpy as np
import pandas as pd
import requests

from config import LLM_CONFIG, get_llm_endpoint
from utils import DataError, TransportError, UsageError, retry_with_backoff, safe_write_file
from tabkit.data import CATEGORICAL, Dataset, RaggedRowsError, from_frame

logger = logging.getLogger(__name__)

ROLES = ('system', 'user', 'assistant')


class ConnectionFailedError(TransportError):
    pass


class HttpStatusError(TransportError):
    pass


class RetryableStatusError(HttpStatusError):
    """5xx and 429 replies"""


class MalformedResponseError(TransportError):
    pass


class TableParseError(DataError):
    pass


class CountMismatchError(DataError):
    pass

# ─── REQUEST TYPES ─────────────────────────────────────────────────
@dataclass(frozen=True)
class GenSpec:
    topic: str
    n_rows: int
    n_cols: int
    column_hints: Tuple[str, ...] = ()
    model_id: str = LLM_CONFIG['model_id']
    temperature: float = LLM_CONFIG['temperature']

    def __post_init__(self):
        if self.n_rows < 1 or self.n_cols < 1:
            raise UsageError(f"n_rows and n_cols must be >= 1 (got {self.n_rows}, {self.n_cols})")
        if self.temperature < 0:
            raise UsageError(f"temperature must be >= 0, got {self.temperature}")
        object.__setattr__(self, 'column_hints', tuple(self.column_hints or ()))

    def to_dict(self):
        doc = asdict(self)
        doc['column_hints'] = list(self.column_hints)
        return doc


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise UsageError(f"Message role must be one of {ROLES}, got {self.role!r}")

    def to_dict(self):
        return {'role': self.role, 'content': self.content}


def build_prompt(spec: GenSpec) -> str:
    """Deterministic instruction asking for one delimited table with a header"""
    lines = [
        f"Generate a synthetic dataset about {spec.topic} with exactly "
        f"{spec.n_cols} columns and {spec.n_rows} rows.",
    ]
    if spec.column_hints:
        lines.append("Use these column names: " + ", ".join(spec.column_hints) + ".")
    lines.append("Return only the table in pipe-delimited form: a header row first, then one "
                 "data row per line, with no commentary before or after it.")
    return "\n".join(lines)

# ─── TRANSPORTS ────────────────────────────────────────────────────
class Transport(Protocol):
    def send(self, payload: dict) -> Tuple[int, object]:
        ...


class HttpTransport:
    """POSTs chat-completions payloads with a bearer token"""

    def __init__(self, endpoint: Optional[str] = None, api_key: Optional[str] = None,
                 timeout: Optional[float] = None):
        self.endpoint = endpoint or get_llm_endpoint()
        self.api_key = api_key if api_key is not None else os.environ.get(LLM_CONFIG['api_key_env'], '')
        self.timeout = timeout or LLM_CONFIG['timeout']
        if not self.api_key:
            logger.warning(f"{LLM_CONFIG['api_key_env']} is not set; requests will likely be rejected")

    def send(self, payload: dict):
        headers = {
            'Authorization': f'Bearer {self.api_key}',
            'Content-Type': 'application/json',
        }
        try:
            response = requests.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)
        except requests.RequestException as e:
            raise ConnectionFailedError(f"Request to {self.endpoint} failed: {e}")
        try:
            body = response.json()
        except ValueError:
            body = response.text
        return response.status_code, body


def completion_body(text: str) -> dict:
    return {'choices': [{'index': 0, 'message': {'role': 'assistant', 'content': text}}]}


CARBON_EMISSIONS_TABLE = """\
| Country | Year | CO2 Emissions (kt) | CO2 Emissions per capita (metric tons) |
|---------|------|--------------------|----------------------------------------|
| USA     | 2010 | 5,395,532          | 17.6                                   |
| China   | 2010 | 8,286,892          | 6.2                                    |
| India   | 2010 | 1,708,505          | 1.4                                    |
| Russia  | 2010 | 1,677,115          | 11.8                                   |
| Japan   | 2010 | 1,155,554          | 9.1                                    |
| Germany | 2010 | 798,565            | 9.9                                    |
| Canada  | 2010 | 541,020            | 15.9                                   |
| UK      | 2010 | 491,324            | 7.9                                    |
| Brazil  | 2010 | 422,598            | 2.2                                    |
| France  | 2010 | 365,666            | 5.6                                    |
"""

HAPPINESS_TABLE = """\
Country & Happiness Rank & Happiness Score & GDP per Capita \\\\
\\midrule
Norway & 1 & 7.537 & 1.616463 \\\\
Denmark & 2 & 7.522 & 1.482383 \\\\
Iceland & 3 & 7.504 & 1.480633 \\\\
Switzerland & 4 & 7.494 & 1.56498 \\\\
Finland & 5 & 7.469 & 1.443572 \\\\
Netherlands & 6 & 7.377 & 1.503945 \\\\
Canada & 7 & 7.316 & 1.479204 \\\\
New Zealand & 8 & 7.314 & 1.405706 \\\\
Sweden & 9 & 7.284 & 1.494387 \\\\
Australia & 10 & 7.284 & 1.484415 \\\\
"""


class MockTransport:
    """Offline transport: records every payload and serves canned replies.

    ``replies`` is a list of texts (served in order, the last one repeating)
    or a callable ``payload -> text``. ``statuses`` optionally fixes the HTTP
    status of successive calls.
    """

    def __init__(self, replies=None, statuses: Optional[Sequence[int]] = None):
        self.replies = replies if replies is not None else [""]
        self.statuses = list(statuses or [])
        self.call_log: List[dict] = []

    @classmethod
    def with_samples(cls) -> "MockTransport":
        def pick(payload):
            prompt = " ".join(m['content'] for m in payload['messages']).lower()
            return HAPPINESS_TABLE if ('happiness' in prompt or 'gdp' in prompt) else CARBON_EMISSIONS_TABLE
        return cls(pick)

    def send(self, payload: dict):
        self.call_log.append(json.loads(json.dumps(payload)))
        i = len(self.call_log) - 1
        status = self.statuses[min(i, len(self.statuses) - 1)] if self.statuses else 200
        if status >= 400:
            return status, {'error': {'message': f'mock status {status}'}}
        if callable(self.replies):
            text = self.replies(payload)
        else:
            text = self.replies[min(i, len(self.replies) - 1)]
        return status, completion_body(text)

# ─── COMPLETIONS ───────────────────────────────────────────────────
def _extract_content(body) -> str:
    try:
        content = body['choices'][0]['message']['content']
    except (KeyError, IndexError, TypeError):
        raise MalformedResponseError("Reply has no choices[0].message.content", body=str(body)[:500])
    if not isinstance(content, str):
        raise MalformedResponseError("Reply content is not text", body=str(body)[:500])
    return content


def get_completion_from_messages(messages: Sequence, model_id: Optional[str] = None,
                                 temperature: Optional[float] = None, transport: Transport = None,
                                 sleep: Callable[[float], None] = time.sleep) -> str:
    """Send the whole message history; retry connection failures and 5xx/429 replies"""
    if not messages:
        raise UsageError("messages must contain at least one message")
    if transport is None:
        raise UsageError("A transport is required (HttpTransport or MockTransport)")
    history = [m if isinstance(m, ChatMessage) else ChatMessage(m['role'], m['content']) for m in messages]
    payload = {
        'model': model_id or LLM_CONFIG['model_id'],
        'messages': [m.to_dict() for m in history],
        'temperature': LLM_CONFIG['temperature'] if temperature is None else temperature,
    }

    def attempt():
        status, body = transport.send(payload)
        if status == 429 or status >= 500:
            raise RetryableStatusError(f"Endpoint replied {status}", status=status)
        if not 200 <= status < 300:
            raise HttpStatusError(f"Endpoint replied {status}", status=status)
        return _extract_content(body)

    send = retry_with_backoff(
        attempt,
        max_retries=LLM_CONFIG['max_attempts'],
        base_delay=LLM_CONFIG['backoff_base'],
        retry_on=(ConnectionFailedError, RetryableStatusError),
        sleep=sleep,
    )
    return send()


def get_completion(prompt: str, model_id: Optional[str] = None, temperature: Optional[float] = None,
                   transport: Transport = None, sleep: Callable[[float], None] = time.sleep) -> str:
    """Single user message in, assistant text out"""
    return get_completion_from_messages([ChatMessage('user', prompt)], model_id, temperature,
                                        transport, sleep)

# ─── TABLE PARSING ─────────────────────────────────────────────────
_THOUSANDS = re.compile(r'^[-+]?\d{1,3}(,\d{3})+(\.\d+)?$')
_PIPE_RULE = re.compile(r'^[\s|:\-+]+$')
_LATEX_COMMAND = re.compile(r'^\\[a-zA-Z]+(\{.*\})?$')


def _strip_fences(text: str) -> List[str]:
    return [line.rstrip() for line in text.splitlines()
            if line.strip() and not line.strip().startswith('```')]


def _pipe_rows(lines):
    rows = []
    for line in lines:
        if '|' not in line or _PIPE_RULE.match(line):
            continue
        body = line.strip()
        if body.startswith('|'):
            body = body[1:]
        if body.endswith('|'):
            body = body[:-1]
        rows.append([cell.strip() for cell in body.split('|')])
    return rows


def _latex_rows(lines):
    rows = []
    for line in lines:
        body = line.strip()
        if '&' not in body or _LATEX_COMMAND.match(body):
            continue
        body = re.sub(r'\\\\\s*$', '', body).strip()
        rows.append([cell.strip() for cell in body.split('&')])
    return rows


def _largest_block(rows):
    """Longest run of consecutive rows sharing a cell count of at least 2"""
    best, start = (0, 0), 0
    for i in range(1, len(rows) + 1):
        if i == len(rows) or len(rows[i]) != len(rows[start]):
            if len(rows[start]) >= 2 and i - start > best[1] - best[0]:
                best = (start, i)
            start = i
    return rows[best[0]:best[1]]


def _split_rows(lines):
    if sum('|' in line for line in lines) >= 2:
        return _pipe_rows(lines), 'pipe'
    if sum('&' in line for line in lines) >= 2:
        return _latex_rows(lines), 'latex'
    if sum('\t' in line for line in lines) >= 2:
        return _largest_block([line.split('\t') for line in lines]), 'tab'
    aligned = [re.split(r'\s{2,}', line.strip()) for line in lines]
    block = _largest_block(aligned)
    if len(block) >= 2:
        return block, 'aligned'
    comma = [next(iter(pd.read_csv(io.StringIO(line), header=None, dtype=str,
                                   keep_default_na=False).itertuples(index=False)))
             for line in lines if ',' in line]
    return _largest_block([list(r) for r in comma]), 'comma'


def _clean_cell(cell: str) -> str:
    cell = cell.strip()
    return cell.replace(',', '') if _THOUSANDS.match(cell) else cell


def parse_table(text: str, spec: Optional[GenSpec] = None, target_column: Optional[str] = None) -> Dataset:
    """Header plus data rows in pipe, LaTeX, tab, aligned or comma form to a Dataset"""
    lines = _strip_fences(text or "")
    rows, style = _split_rows(lines) if lines else ([], 'none')
    if not rows:
        raise TableParseError("No table found in the reply")
    header, data = rows[0], rows[1:]
    if not data:
        raise TableParseError("Table has a header but no data rows")
    for i, row in enumerate(data):
        if len(row) != len(header):
            raise RaggedRowsError(f"Row {i + 1} has {len(row)} cells, header has {len(header)}",
                                  row=i + 1)
    if spec is not None and (len(data) != spec.n_rows or len(header) != spec.n_cols):
        raise CountMismatchError(
            f"Expected {spec.n_rows} rows x {spec.n_cols} columns, got {len(data)} x {len(header)}",
            expected=[spec.n_rows, spec.n_cols], got=[len(data), len(header)])

    frame = pd.DataFrame([[_clean_cell(c) for c in row] for row in data], columns=header, dtype=str)
    logger.info(f"Parsed {style} table: {len(data)} rows x {len(header)} columns")
    return from_frame(frame, target_column)


def _render_value(value: float) -> str:
    if np.isnan(value):
        return ""
    return str(int(value)) if float(value).is_integer() and abs(value) < 2 ** 53 else repr(float(value))


def render_table(ds: Dataset) -> str:
    """Pipe table of the decoded dataset (target last); parse_table reads it back"""
    names = ds.feature_names + ([ds.target_name or 'target'] if ds.y is not None else [])
    rows = []
    for i in range(ds.n_rows):
        cells = []
        for j, col in enumerate(ds.columns):
            v = ds.X[i, j]
            if col.kind == CATEGORICAL and not np.isnan(v):
                cells.append(col.categories[int(v)])
            else:
                cells.append(_render_value(v))
        if ds.y is not None:
            if ds.task == 'classification' and ds.class_names is not None:
                cells.append(ds.class_names[int(ds.y[i])])
            else:
                cells.append(_render_value(float(ds.y[i])))
        rows.append(cells)
    lines = ["| " + " | ".join(names) + " |", "|" + "|".join("---" for _ in names) + "|"]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return "\n".join(lines) + "\n"

# ─── GENERATION & CONVERSATION ─────────────────────────────────────
def llm_generate_dataset(spec: GenSpec, transport: Transport, transcript_path=None,
                         sleep: Callable[[float], None] = time.sleep):
    """Prompt, complete and parse; returns ``(dataset, transcript)``"""
    prompt = build_prompt(spec)
    raw = get_completion(prompt, spec.model_id, spec.temperature, transport, sleep)
    transcript = {'spec': spec.to_dict(), 'prompt': prompt, 'raw_reply': raw, 'parse_status': 'ok'}
    try:
        ds = parse_table(raw, spec)
    except DataError as e:
        transcript['parse_status'] = f"{type(e).__name__}: {e.message}"
        e.details['raw_reply'] = raw
        raise
    finally:
        if transcript_path is not None:
            safe_write_file(transcript_path, json.dumps(transcript, indent=2, sort_keys=True) + "\n")
    logger.info(f"✓ LLM dataset on '{spec.topic}': {ds.n_rows} rows x {ds.n_features} columns")
    return ds, transcript


def chat_loop(transport: Transport, input_fn: Callable[[str], str] = input,
              output_fn: Callable[[str], None] = print, model_id: Optional[str] = None,
              temperature: Optional[float] = None, system_prompt: Optional[str] = None,
              max_turns: Optional[int] = None, sleep: Callable[[float], None] = time.sleep) -> List[ChatMessage]:
    """Terminal conversation: every turn resends the full history"""
    history: List[ChatMessage] = []
    if system_prompt:
        history.append(ChatMessage('system', system_prompt))
    turns = 0
    while max_turns is None or turns < max_turns:
        try:
            line = input_fn("you> ")
        except EOFError:
            break
        if line is None or line.strip().lower() in ('exit', 'quit'):
            break
        if not line.strip():
            continue
        history.append(ChatMessage('user', line))
        reply = get_completion_from_messages(history, model_id, temperature, transport, sleep)
        history.append(ChatMessage('assistant', reply))
        output_fn(reply)
        turns += 1
    return history
