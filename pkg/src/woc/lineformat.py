"""Escaping for semicolon-delimited text lines.

String keys and values (author ids, file names, project names, module
names) may contain the delimiters of the dump format, so ``;`` and ``%``
are percent-encoded, along with newlines. Object ids are always hex and
never escaped.
"""

import re

_DECODE_RE = re.compile(r"%(25|3B|0A|0D)")
_DECODE_TABLE = {"25": "%", "3B": ";", "0A": "\n", "0D": "\r"}


def encode_field(text: str) -> str:
    return (text.replace("%", "%25").replace(";", "%3B")
            .replace("\n", "%0A").replace("\r", "%0D"))


def decode_field(text: str) -> str:
    return _DECODE_RE.sub(lambda m: _DECODE_TABLE[m.group(1)], text)
