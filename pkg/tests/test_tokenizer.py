import pytest
from hypothesis import given, settings, strategies as st

from adaptpaste.tokenizer import (BOS, EOS, PAD, TokenizerError, Vocabulary, special_tokens, train_bpe)

CORPUS = [
    "def train(model, data):\n    loss = model(data)\n    return loss\n",
    "for ___v12 in range(10):\n    total += ___v12\n",
    "x = CLASS_3()\ny = FUNC_0(x) | VAR_17 ... [MASK]\n",
    "naïve = 'ünïcödé'  # 日本語\n",
]


@pytest.fixture(scope="module")
def vocab():
    return train_bpe(CORPUS * 3, vocab_size=len(special_tokens()) + 256 + 120)


def test_first_merge_is_hand_computed_pair():
    # pretokens "aaaa" twice and " " once: (a, a) occurs 6 times, nothing else pairs
    v = train_bpe(["aaaa aaaa"], vocab_size=260, specials=[])
    assert v.merges[0] == (97, 97)
    assert v.tokens[256] == b"aa"
    assert v.tokens[257] == b"aaaa"
    assert v.encode("aaaa aaaa") == [257, 32, 257]


def test_special_ids_are_reserved_and_dense(vocab):
    specials = special_tokens()
    assert specials[:3] == [PAD, BOS, EOS]
    assert vocab.pad_id == 0
    for i, s in enumerate(specials):
        assert vocab.id_of(s) == i
    assert len(vocab.tokens) == vocab.size
    assert len(specials) == 6 + 1000 + 3 * 256


def test_mask_is_one_token(vocab):
    assert vocab.encode("___v122") == [vocab.id_of("___v122")]
    assert vocab.encode("CLASS_255") == [vocab.id_of("CLASS_255")]
    ids = vocab.encode("a=___v7+[MASK]")
    assert vocab.id_of("___v7") in ids and vocab.id_of("[MASK]") in ids


def test_special_atomicity(vocab):
    text = "foo ___v99 bar|baz ... VAR_3"
    ids = vocab.encode(text)
    specials = set(range(len(special_tokens())))
    assert vocab.id_of("___v99") in ids
    # no special string can arise from regular tokens
    regular = b"".join(vocab.tokens[i] for i in ids if i not in specials)
    assert b"___v99" not in regular and b"VAR_3" not in regular


def test_empty_and_errors(vocab):
    assert vocab.encode("") == []
    assert vocab.decode([]) == ""
    with pytest.raises(TokenizerError):
        vocab.decode([vocab.size])
    with pytest.raises(TokenizerError):
        train_bpe([], 3000)
    with pytest.raises(TokenizerError):
        train_bpe([""], 3000)
    with pytest.raises(TokenizerError):
        train_bpe(CORPUS, 300)


def test_deterministic(vocab):
    again = train_bpe(CORPUS * 3, vocab_size=vocab.size)
    assert again.merges == vocab.merges and again.fingerprint() == vocab.fingerprint()


def test_persistence_roundtrip(vocab, tmp_path):
    vocab.save(tmp_path / "v")
    back = Vocabulary.load(tmp_path / "v")
    assert back.tokens == vocab.tokens and back.merges == vocab.merges
    assert back.fingerprint() == vocab.fingerprint()
    assert (tmp_path / "v" / "vocab.txt").read_text().startswith("#adaptpaste-vocab v1\n")
    (tmp_path / "v" / "merges.txt").write_text("garbage\n")
    with pytest.raises(TokenizerError):
        Vocabulary.load(tmp_path / "v")


def test_identifiers_encode_identically_everywhere(vocab):
    a = vocab.encode("loss")
    assert vocab.encode(" loss")[-len(a):] == a
    assert vocab.encode("(loss)")[1:-1] == a


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=80))
def test_roundtrip_arbitrary_text(vocab, text):
    ids = vocab.encode(text)
    assert vocab.decode(ids) == text
    assert vocab.encode(vocab.decode(ids)) == ids


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["def", " ", "___v3", "x", "\n", "|", "ü", "(", "9", "[MASK]", "FUNC_1"]),
                max_size=30))
def test_roundtrip_token_soup(vocab, parts):
    text = "".join(parts)
    assert vocab.decode(vocab.encode(text)) == text
