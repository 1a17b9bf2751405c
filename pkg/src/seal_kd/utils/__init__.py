"""Output helpers and seeded random streams."""

from .io_utils import OutputTransaction, dumps, read_json, read_jsonl, write_json, write_jsonl
from .seeding import stream

__all__ = ['OutputTransaction', 'dumps', 'read_json', 'read_jsonl', 'write_json', 'write_jsonl', 'stream']
