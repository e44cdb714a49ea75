import pytest
from hypothesis import given, strategies as st

from claimbench.textops import (TokenOrigin, TokenSequence, build_case_lexicon,
                                levenshtein, normalized_levenshtein, rouge_f1,
                                tokenize_words, truecase, uppercase)


def test_tokenize_words_lowercases_and_splits_on_punctuation():
    assert tokenize_words("Covid-19 is DEADLY!").tokens == ("covid", "19", "is", "deadly")
    assert tokenize_words("snake_case splits").tokens == ("snake", "case", "splits")
    assert tokenize_words("").tokens == ()


def test_levenshtein_character_origin():
    a = TokenSequence.characters("kitten")
    b = TokenSequence.characters("sitting")
    assert levenshtein(a, b) == 3
    assert levenshtein(a, a) == 0
    assert levenshtein(TokenSequence.characters(""), b) == len(b)


def test_levenshtein_word_origin():
    a = tokenize_words("the cat sat on the mat")
    b = tokenize_words("the dog sat on a mat")
    assert levenshtein(a, b) == 2


def test_levenshtein_rejects_origin_mismatch():
    with pytest.raises(ValueError, match="different origins"):
        levenshtein(tokenize_words("abc"), TokenSequence.characters("abc"))


@given(st.text(max_size=30), st.text(max_size=30))
def test_levenshtein_properties(a, b):
    sa, sb = TokenSequence.characters(a), TokenSequence.characters(b)
    d = levenshtein(sa, sb)
    assert d == levenshtein(sb, sa)
    assert d <= max(len(sa), len(sb))
    assert (d == 0) == (a == b)
    nd = normalized_levenshtein(sa, sb)
    assert 0.0 <= nd <= 1.0


def test_normalized_levenshtein_empty_inputs():
    empty = TokenSequence.characters("")
    assert normalized_levenshtein(empty, empty) == 0.0
    assert normalized_levenshtein(empty, TokenSequence.characters("ab")) == 1.0


def test_uppercase():
    assert uppercase("Mixed Case 9") == "MIXED CASE 9"


def test_build_case_lexicon_majority_and_ties():
    lexicon = build_case_lexicon(["NASA said NASA", "nasa", "The the the"])
    assert lexicon["nasa"] == "NASA"
    # tie between "The" (1) and "the" (2): plain majority
    assert lexicon["the"] == "the"
    # exact tie prefers the lowercase surface
    tied = build_case_lexicon(["Apple apple"])
    assert tied["apple"] == "apple"


def test_truecase_restores_corpus_casing():
    lexicon = build_case_lexicon([
        "NASA launched the rocket.", "The rocket NASA built.", "Watch the rocket fly."
    ])
    result = truecase("NASA SAID THE ROCKET FLEW! UNSEEN WORDS STAY.", lexicon)
    assert result == "NASA said the rocket flew! Unseen words stay."


def test_truecase_keeps_non_token_characters():
    assert truecase("HELLO,   WORLD!!", {}) == "Hello,   world!!"


def test_rouge_f1_unigrams():
    # overlap 2, |a|=3, |b|=2 -> 2*2/5
    assert rouge_f1("the cat sat", "the cat", "r1") == pytest.approx(0.8)
    assert rouge_f1("a b", "c d", "r1") == 0.0


def test_rouge_f1_bigrams_clipped():
    value = rouge_f1("a b a b", "a b", "r2")
    # bigrams a: {ab:2, ba:1}, b: {ab:1}; clipped overlap 1 -> 2*1/(3+1)
    assert value == pytest.approx(0.5)


def test_rouge_l_uses_lcs():
    assert rouge_f1("a b c d", "b a d c", "rl") == pytest.approx(0.5)
    assert rouge_f1("same text here", "same text here", "rl") == pytest.approx(1.0)


def test_rouge_is_case_sensitive():
    assert rouge_f1("Hello World", "HELLO WORLD", "r1") == 0.0


def test_rouge_empty_sides_and_bad_variant():
    assert rouge_f1("", "words here", "r1") == 0.0
    assert rouge_f1("one", "one", "r2") == 0.0  # no bigrams on either side
    with pytest.raises(ValueError, match="unknown rouge variant"):
        rouge_f1("a", "b", "r3")


@given(st.text(max_size=40))
def test_rouge_self_overlap_is_one_or_zero(text):
    value = rouge_f1(text, text, "r1")
    if tokenize_words(text).tokens:
        assert value == pytest.approx(1.0)
    else:
        assert value == 0.0
