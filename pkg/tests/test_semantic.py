"""Tests for tokenization, term frequency, PMI scoring, and term tables."""

import json
import math

import pytest

import oracles
from placescope.errors import DegenerateInputError, NoCooccurrence
from placescope.ingest import PlaceQuery
from placescope.semantic import (
    Scope,
    Token,
    TokenKind,
    TokenMode,
    load_stopwords,
    pmi,
    term_table,
    term_table_csv,
    term_table_json,
    tokenize,
    top_terms,
)


def _words(text: str, mode: TokenMode = TokenMode.LATIN) -> list[str]:
    return [tok.surface for tok in tokenize(text, mode)]


def _docs(*texts: str, mode: TokenMode = TokenMode.LATIN):
    return [tokenize(t, mode) for t in texts]


# ---------------------------------------------------------------------------
# tokenize
# ---------------------------------------------------------------------------

def test_tokenize_strips_urls_and_binds_mentions():
    assert _words("Go Aztecs! @SDSU http://t.co/x") == ["go", "aztecs", "@sdsu"]


def test_tokenize_empty_string():
    assert tokenize("") == []


def test_tokenize_hashtags_keep_their_mark():
    tokens = tokenize("#GoAztecs beat #UNLV")
    assert tokens[0] == Token("#goaztecs", TokenKind.HASHTAG)
    assert tokens[1] == Token("beat", TokenKind.WORD)
    assert tokens[2] == Token("#unlv", TokenKind.HASHTAG)


def test_tokenize_mention_kind():
    tokens = tokenize("thanks @chulavistactr!")
    assert tokens[1] == Token("@chulavistactr", TokenKind.MENTION)


def test_tokenize_bare_marks_are_not_tokens():
    assert _words("# @ ! ??") == []


def test_tokenize_strips_www_urls():
    assert _words("see www.example.com/page now") == ["see", "now"]


def test_tokenize_cjk_bigrams():
    assert _words("天安门广场", TokenMode.CJK_BIGRAM) == ["天安", "安门", "门广", "广场"]


def test_tokenize_cjk_lone_ideograph_kept():
    assert _words("好", TokenMode.CJK_BIGRAM) == ["好"]
    kinds = [tok.kind for tok in tokenize("好", TokenMode.CJK_BIGRAM)]
    assert kinds == [TokenKind.CHAR_BIGRAM]


def test_tokenize_cjk_respects_presegmented_input():
    # A space ends the ideograph run, so segment boundaries survive.
    assert _words("天安门 广场", TokenMode.CJK_BIGRAM) == ["天安", "安门", "广场"]


def test_tokenize_cjk_mode_handles_embedded_latin():
    assert _words("在PKU的生活", TokenMode.CJK_BIGRAM) == ["在", "pku", "的生", "生活"]


def test_tokenize_latin_mode_keeps_cjk_as_word_chars():
    # \w matches ideographs, so Latin mode sees one run per word.
    assert _words("天安门广场 upd") == ["天安门广场", "upd"]


def test_tokenize_case_folds():
    assert _words("SDSU Sdsu sdsu") == ["sdsu", "sdsu", "sdsu"]


# ---------------------------------------------------------------------------
# top_terms
# ---------------------------------------------------------------------------

def test_top_terms_counts_documents_not_tokens():
    docs = _docs("a b", "a", "c")
    assert top_terms(docs, set(), 2) == [("a", 2), ("b", 1)]


def test_top_terms_repeated_token_counts_once_per_doc():
    docs = _docs("spam spam spam", "ham")
    assert top_terms(docs, set(), 5) == [("ham", 1), ("spam", 1)]


def test_top_terms_applies_stopwords():
    docs = _docs("a b", "a", "c")
    assert top_terms(docs, {"a"}, 5) == [("b", 1), ("c", 1)]


def test_top_terms_k_larger_than_vocabulary():
    docs = _docs("a b", "a", "c")
    assert top_terms(docs, set(), 99) == [("a", 2), ("b", 1), ("c", 1)]


def test_top_terms_rejects_bad_k():
    with pytest.raises(ValueError):
        top_terms(_docs("a"), set(), 0)


def test_top_terms_matches_oracle_counting():
    texts = [
        "coffee at the beach",
        "beach sunset #beach",
        "morning coffee, more coffee",
        "rain rain go away",
    ]
    docs = _docs(*texts)
    token_sets = [{t.surface for t in d} for d in docs]
    expected = oracles.doc_frequencies(token_sets, {"the", "at"})
    got = dict(top_terms(docs, {"the", "at"}, 100))
    assert got == expected


# ---------------------------------------------------------------------------
# pmi
# ---------------------------------------------------------------------------

def test_pmi_hand_values():
    assert pmi(8, 4, 2, 2) == 1.0
    assert pmi(8, 4, 4, 2) == 0.0


def test_pmi_no_cooccurrence_signal():
    with pytest.raises(NoCooccurrence):
        pmi(8, 4, 2, 0)


def test_pmi_validation():
    with pytest.raises(ValueError):
        pmi(0, 1, 1, 1)
    with pytest.raises(ValueError):
        pmi(8, 0, 2, 1)
    with pytest.raises(ValueError):
        pmi(8, 4, 2, 3)  # n_xy > min(n_x, n_y)
    with pytest.raises(ValueError):
        pmi(8, 4, 2, -1)


def test_pmi_symmetric_in_x_and_y():
    assert pmi(100, 30, 7, 5) == pmi(100, 7, 30, 5)


def test_pmi_upper_bound():
    for n_docs, n_x, n_y in [(50, 10, 4), (12, 3, 3), (100, 99, 2)]:
        bound = math.log2(n_docs / max(n_x, n_y))
        best = pmi(n_docs, n_x, n_y, min(n_x, n_y))
        assert best <= bound + 1e-12
        assert best == pytest.approx(bound)


def test_pmi_invariant_under_corpus_duplication():
    # Doubling every count doubles numerator and denominator by 4 each;
    # the integer products stay exact, so the scores match bitwise.
    for args in [(8, 4, 2, 1), (100, 37, 11, 6), (9, 3, 5, 2)]:
        n, x, y, xy = args
        assert pmi(2 * n, 2 * x, 2 * y, 2 * xy) == pmi(n, x, y, xy)


# ---------------------------------------------------------------------------
# term_table
# ---------------------------------------------------------------------------

def test_term_table_every_post_mentions_place(post_factory):
    # With n_x = n_docs, every term trivially co-occurs (n_xy = n_y) and
    # the score collapses to log2(n_xy * n_docs / (n_x * n_y)) = 0: a
    # place mentioned everywhere carries no association signal.
    corpus = [
        post_factory(post_id="1", text="sdsu game day"),
        post_factory(post_id="2", text="sdsu library"),
        post_factory(post_id="3", text="sdsu game tonight"),
        post_factory(post_id="4", text="sdsu morning"),
    ]
    table = term_table(corpus, PlaceQuery("sdsu"), set(), 10, Scope.FULL)
    by_term = {row.term: row for row in table.rows}
    assert all(row.pmi == 0.0 for row in table.rows)
    assert by_term["game"].frequency == 2
    assert by_term["library"].frequency == 1
    assert "sdsu" not in by_term  # the place name is not a candidate


def test_term_table_partial_mentions_give_log2_scores(post_factory):
    # n_docs 4, n_x 2. "game" appears only in place posts: n_y 2, n_xy 2,
    # score log2(2*4/(2*2)) = 1. "day" appears in one of each: n_y 2,
    # n_xy 1, score log2(1*4/(2*2)) = 0.
    corpus = [
        post_factory(post_id="1", text="sdsu game day"),
        post_factory(post_id="2", text="sdsu game"),
        post_factory(post_id="3", text="quiet day"),
        post_factory(post_id="4", text="rain"),
    ]
    table = term_table(corpus, PlaceQuery("sdsu"), set(), 10, Scope.FULL)
    by_term = {row.term: row for row in table.rows}
    assert by_term["game"].pmi == 1.0
    assert by_term["day"].pmi == 0.0
    assert "rain" not in by_term  # never co-occurs


def test_term_table_k_one(post_factory):
    corpus = [
        post_factory(post_id="1", text="sdsu game"),
        post_factory(post_id="2", text="sdsu game"),
        post_factory(post_id="3", text="lunch downtown"),
    ]
    table = term_table(corpus, PlaceQuery("sdsu"), set(), 1, Scope.FULL)
    assert len(table.rows) == 1
    assert table.rows[0].term == "game"
    assert table.k == 1


def test_term_table_drops_non_cooccurring_terms(post_factory):
    corpus = [
        post_factory(post_id="1", text="sdsu game"),
        post_factory(post_id="2", text="rain rain"),
    ]
    table = term_table(corpus, PlaceQuery("sdsu"), set(), 10, Scope.FULL)
    assert [row.term for row in table.rows] == ["game"]


def test_term_table_excludes_stopwords_and_aliases(post_factory):
    corpus = [
        post_factory(post_id="1", text="the seaworld show"),
        post_factory(post_id="2", text="the sea world show"),
    ]
    query = PlaceQuery("Sea World", aliases=("seaworld",))
    table = term_table(corpus, query, {"the"}, 10, Scope.FULL)
    terms = {row.term for row in table.rows}
    assert terms == {"show"}


def test_term_table_empty_corpus_rejected():
    with pytest.raises(DegenerateInputError):
        term_table([], PlaceQuery("sdsu"), set(), 10, Scope.FULL)


def test_term_table_no_place_mentions_gives_empty_table(post_factory):
    corpus = [post_factory(post_id="1", text="just lunch")]
    table = term_table(corpus, PlaceQuery("sdsu"), set(), 10, Scope.FULL)
    assert table.rows == ()
    assert table.scope is Scope.FULL


def test_term_table_row_ordering(post_factory):
    # game: n_y=2, n_xy=2; beach: n_y=2, n_xy=1; lunch: n_y=1, n_xy=1.
    # pmi(game) = log2(8/2) > pmi(lunch) = log2(8/2)?  No: with n_x=4,
    # pmi = log2(n_xy*8/(4*n_y)): game = 2.0, lunch = 1.0, beach = 0.0.
    corpus = [
        post_factory(post_id="1", text="sdsu game beach"),
        post_factory(post_id="2", text="sdsu game"),
        post_factory(post_id="3", text="sdsu lunch"),
        post_factory(post_id="4", text="sdsu"),
        post_factory(post_id="5", text="beach"),
        post_factory(post_id="6", text="rain"),
        post_factory(post_id="7", text="rain"),
        post_factory(post_id="8", text="rain"),
    ]
    table = term_table(corpus, PlaceQuery("sdsu"), set(), 10, Scope.FULL)
    assert [row.term for row in table.rows][:3] == ["game", "lunch", "beach"]
    scores = [row.pmi for row in table.rows]
    assert scores == sorted(scores, reverse=True)


def test_term_table_matches_oracle(post_factory):
    corpus = [
        post_factory(post_id=str(i), text=t)
        for i, t in enumerate(
            [
                "sdsu game day",
                "sdsu beach trip",
                "game on",
                "beach beach sunset",
                "sdsu sunset walk",
                "lunch at sdsu",
                "rain today",
            ]
        )
    ]
    query = PlaceQuery("sdsu")
    table = term_table(corpus, query, {"at", "on"}, 50, Scope.FULL)
    token_sets = [{t.surface for t in tokenize(p.text)} for p in corpus]
    flags = ["sdsu" in p.text.casefold() for p in corpus]
    counts = oracles.doc_frequencies(token_sets, {"at", "on", "sdsu"})
    expected = oracles.pmi_rows_brute(token_sets, flags, list(counts.items()))
    assert [(r.term, r.pmi, r.frequency) for r in table.rows] == expected


def test_term_table_cjk_mode(post_factory):
    corpus = [
        post_factory(post_id="1", text="天安门广场升旗"),
        post_factory(post_id="2", text="升旗仪式"),
        post_factory(post_id="3", text="天安门晚上"),
    ]
    table = term_table(corpus, PlaceQuery("天安门"), set(), 10, Scope.FULL,
                       mode=TokenMode.CJK_BIGRAM)
    terms = {row.term for row in table.rows}
    # Bigrams of the place name itself are excluded.
    assert "天安" not in terms
    assert "安门" not in terms
    assert "升旗" in terms


# ---------------------------------------------------------------------------
# Stopword files and exports
# ---------------------------------------------------------------------------

def test_load_stopwords(tmp_path):
    path = tmp_path / "stop.txt"
    path.write_text("# common words\nThe\nand\n\n  a  \n", encoding="utf-8")
    assert load_stopwords(path) == {"the", "and", "a"}


def test_term_table_csv_round_trips_scores(post_factory):
    corpus = [
        post_factory(post_id="1", text="sdsu game day"),
        post_factory(post_id="2", text="sdsu library"),
        post_factory(post_id="3", text="game day"),
    ]
    table = term_table(corpus, PlaceQuery("sdsu"), set(), 10, Scope.FULL)
    text = term_table_csv(table)
    lines = text.strip().splitlines()
    assert lines[0] == "term,pmi,frequency"
    assert len(lines) == len(table.rows) + 1
    for line, row in zip(lines[1:], table.rows):
        term, score, freq = line.split(",")
        assert term == row.term
        assert float(score) == row.pmi  # repr round-trip is exact
        assert int(freq) == row.frequency


def test_term_table_json_shape(post_factory):
    corpus = [post_factory(post_id="1", text="sdsu game")]
    table = term_table(corpus, PlaceQuery("sdsu"), set(), 10, Scope.FULL)
    rows = json.loads(term_table_json(table))
    assert rows == [{"term": "game", "pmi": 0.0, "frequency": 1}]
