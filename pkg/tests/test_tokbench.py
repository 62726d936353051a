import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curatekit.corpus import documents_from_texts
from curatekit.tokbench import (
    BYTE_TOKENS,
    BpeTokenizer,
    EncodingError,
    FormatError,
    compression_report,
    encode_corpus,
    load_bpe,
    read_external_counts,
)


def mini():
    vocab = {t: i for i, t in enumerate(["<unk>", "</s>", "a", "b", "c", "ab", "abc", "bc"])}
    return BpeTokenizer(vocab, [("a", "b"), ("ab", "c"), ("b", "c")], unk_id=0)


# merges applied by hand, lowest rank first:
#   abcbc: a b c b c -> ab c b c -> abc b c -> abc bc
#   bca:   b c a -> bc a
#   aab:   a a b -> a ab
#   cab:   c a b -> c ab
@pytest.mark.parametrize(("word", "tokens"), [
    ("abcbc", ["abc", "bc"]),
    ("bca", ["bc", "a"]),
    ("aab", ["a", "ab"]),
    ("cab", ["c", "ab"]),
    ("abab", ["ab", "ab"]),
    ("a", ["a"]),
])
def test_golden_merges(word, tokens):
    assert mini().tokenize_word(word) == tokens


def test_rank_beats_position():
    # (b, c) outranks (a, b): "abc" -> a bc, not ab c
    vocab = {t: i for i, t in enumerate(["a", "b", "c", "bc", "ab"])}
    tok = BpeTokenizer(vocab, [("b", "c"), ("a", "b")])
    assert tok.tokenize_word("abc") == ["a", "bc"]


def test_encode_ids_and_unk():
    tok = mini()
    assert tok.encode("abcbc  bca") == [6, 7, 7, 2]
    assert tok.encode("abx") == [5, 0]


def test_missing_symbol_without_unk_raises():
    vocab = {"a": 0}
    with pytest.raises(EncodingError):
        BpeTokenizer(vocab, []).encode("ab")


def test_byte_fallback():
    vocab = {t: i for i, t in enumerate(["</s>", "o", *BYTE_TOKENS])}
    tok = BpeTokenizer(vocab, [], byte_fallback=True)
    assert tok.tokenize_word("oé") == ["o", "<0xC3>", "<0xA9>"]
    assert tok.decode_word(tok.encode("oé")) == "oé"


def test_invalid_tokenizers():
    with pytest.raises(FormatError):
        BpeTokenizer({"a": 0, "b": 2}, [])
    with pytest.raises(FormatError):
        BpeTokenizer({"a": 0, "b": 1}, [("a", "b")])
    with pytest.raises(FormatError):
        BpeTokenizer({"a": 0}, [], byte_fallback=True)


def test_save_load_byte_round_trip(tmp_path):
    tok = mini()
    tok.save(tmp_path / "v.json", tmp_path / "m.txt")
    back = load_bpe(tmp_path / "v.json", tmp_path / "m.txt")
    assert back.vocab == tok.vocab and back.merges == tok.merges and back.unk_id == 0
    back.save(tmp_path / "v2.json", tmp_path / "m2.txt")
    assert (tmp_path / "v2.json").read_bytes() == (tmp_path / "v.json").read_bytes()
    assert (tmp_path / "m2.txt").read_bytes() == (tmp_path / "m.txt").read_bytes()


def test_load_skips_version_header_and_detects_fallback(tmp_path):
    vocab = {t: i for i, t in enumerate(["</s>", *BYTE_TOKENS, "a", "b", "ab"])}
    (tmp_path / "v.json").write_text(json.dumps(vocab))
    (tmp_path / "m.txt").write_text("#version: 0.2\na b\n")
    tok = load_bpe(tmp_path / "v.json", tmp_path / "m.txt")
    assert tok.byte_fallback and tok.unk_id is None
    assert tok.merges == [("a", "b")]


def test_load_rejects_bad_merge_line(tmp_path):
    (tmp_path / "v.json").write_text(json.dumps({"a": 0}))
    (tmp_path / "m.txt").write_text("a\n")
    with pytest.raises(FormatError, match="m.txt:1"):
        load_bpe(tmp_path / "v.json", tmp_path / "m.txt")


def test_corpus_adds_one_separator_per_document():
    tok = mini()
    texts = ["abcbc", "bca aab", "", "c"]
    assert encode_corpus(tok, documents_from_texts(texts)) == sum(len(tok.encode(t)) for t in texts) + 4
    assert encode_corpus(tok, texts, threads=3) == encode_corpus(tok, texts)


def test_corpus_needs_eos():
    tok = BpeTokenizer({"a": 0}, [])
    with pytest.raises(EncodingError):
        encode_corpus(tok, ["a"])


def test_compression_report(tmp_path):
    base = mini()
    chars = BpeTokenizer({t: i for i, t in enumerate(["<unk>", "</s>", "a", "b", "c"])}, [], unk_id=0)
    broken = BpeTokenizer({"a": 0}, [])
    rep = compression_report({"chars": chars, "bpe": base, "broken": broken}, "abcbc abab",
                             external_counts={"spm": (3, 100)})
    assert rep.to_dict()["word_count"] == 2
    names = [r.tokenizer_name for r in rep.rows]
    assert names == ["spm", "bpe", "chars", "broken"]
    assert rep.rows[1].token_count == 4 and rep.rows[1].tokens_per_word == 2.0
    assert rep.rows[-1].failed
    assert rep.to_csv().splitlines()[0].startswith("tokenizer")
    p = tmp_path / "ext.csv"
    p.write_text("name,token_count,vocab_size\nspm,3,100\nx,5,\n")
    assert read_external_counts(p) == {"spm": (3, 100), "x": (5, None)}


def _random_tokenizer(data):
    alphabet = "abcd"
    vocab = {t: i for i, t in enumerate(["<unk>", "</s>", *alphabet])}
    merges = []
    for _ in range(data.draw(st.integers(0, 8))):
        syms = list(vocab)[2:]
        a, b = data.draw(st.sampled_from(syms)), data.draw(st.sampled_from(syms))
        vocab.setdefault(a + b, len(vocab))
        merges.append((a, b))
    return BpeTokenizer(vocab, merges, unk_id=0), list(vocab)[2:]


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_adding_a_merge_never_increases_token_count(data):
    tok, syms = _random_tokenizer(data)
    text = data.draw(st.text(alphabet="abcde ", max_size=30))
    a, b = data.draw(st.sampled_from(syms)), data.draw(st.sampled_from(syms))
    assert len(tok.with_merge(a, b).encode(text)) <= len(tok.encode(text))
