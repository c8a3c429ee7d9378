import pytest
from hypothesis import given, strategies as st

from sentinel.errors import InvalidSpan
from sentinel.trace import LabelSpan, SyscallEvent, SyscallVocabulary, build_vocabulary

PAPER_CALLS = "futex,futex,open,write,close,open,read,close".split(",")


def _events(names, session=0):
    return [SyscallEvent(session, 1000 * i, n) for i, n in enumerate(names)]


def test_vocabulary_dedup_and_sort():
    vocab = build_vocabulary(_events(["open", "close", "open"]))
    assert vocab.names == ("close", "open")
    assert vocab.dim == 3
    assert vocab.oov_index == 2


def test_empty_vocabulary_is_oov_only():
    vocab = build_vocabulary([])
    assert vocab.names == ()
    assert vocab.dim == 1
    assert vocab.lookup("anything") == 0


def test_vocabulary_from_worked_example():
    vocab = build_vocabulary(_events(PAPER_CALLS))
    assert vocab.names == ("close", "futex", "open", "read", "write")
    assert vocab.dim == 6


def test_unknown_names_map_to_oov():
    vocab = SyscallVocabulary(["close", "open"])
    assert vocab.lookup("execve") == vocab.oov_index
    assert vocab.lookup("open") == 1
    assert "execve" not in vocab


def test_duplicate_names_rejected():
    with pytest.raises(ValueError):
        SyscallVocabulary(["a", "a"])


def test_digest_depends_on_order():
    assert SyscallVocabulary(["a", "b"]).digest() != SyscallVocabulary(["b", "a"]).digest()
    assert SyscallVocabulary(["a", "b"]).digest() == SyscallVocabulary(["a", "b"]).digest()


def test_label_span_requires_positive_length():
    with pytest.raises(InvalidSpan):
        LabelSpan(0, 5, 5, "env")
    span = LabelSpan(0, 5, 9, "env")
    assert span.overlaps(8, 20) and not span.overlaps(9, 20) and not span.overlaps(0, 5)


names = st.text(alphabet="abcdefg_", min_size=1, max_size=4)


@given(st.lists(names, max_size=30), st.randoms())
def test_vocabulary_ignores_event_order(calls, random):
    shuffled = list(calls)
    random.shuffle(shuffled)
    assert build_vocabulary(_events(calls)) == build_vocabulary(_events(shuffled))


@given(st.lists(names, max_size=20), names)
def test_every_lookup_lands_in_range(calls, probe):
    vocab = build_vocabulary(_events(calls))
    assert 0 <= vocab.lookup(probe) < vocab.dim
